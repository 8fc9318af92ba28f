"""Timing comparison of the numba kernels against their numpy fallbacks.

Run with ``python -m projfilter.benchmark``.  Reports per-call times for the
three hot kernels on workloads matching the 4x4-lattice experiments.
"""

from __future__ import annotations

import math
import timeit

import numpy as np

from . import kernels
from .operators import build_total_spin_squared, jz_sector, sector_restrict
from .util import make_rng


def _time(fn, number: int) -> float:
    fn()  # warm-up (triggers jit compilation for the numba path)
    return timeit.timeit(fn, number=number) / number


def run(repeats: dict | None = None) -> list[tuple[str, str, float]]:
    repeats = repeats or {"pair_coupling_entries": 3, "chebyshev_apply": 5,
                          "objective_gradient": 200}
    rng = make_rng(1234)
    results = []

    # 16-spin all-pairs coupling assembly (the J^2 builder workload)
    n_spins = 16
    pairs = np.array(
        [(i, j) for i in range(n_spins) for j in range(i + 1, n_spins)], dtype=np.int64
    )
    left = np.ascontiguousarray(pairs[:, 0])
    right = np.ascontiguousarray(pairs[:, 1])
    for backend, impl in kernels.IMPLEMENTATIONS["pair_coupling_entries"].items():
        if impl is None:
            continue
        per_call = _time(lambda: impl(n_spins, left, right),
                         repeats["pair_coupling_entries"])
        results.append(("pair_coupling_entries[16 spins]", backend, per_call))

    # Chebyshev application of cos(t O) below and above the auto cutoff
    from .operators import build_heisenberg, SpinLatticeSpec

    small = build_heisenberg(SpinLatticeSpec(2, 5, periodic=True))
    spin2 = sector_restrict(build_total_spin_squared(n_spins), jz_sector(n_spins))
    n_terms = 60
    coef_a = np.exp(-0.2 * np.arange(n_terms))
    coef_b = np.zeros(n_terms)
    for tag, op, reps in (
        ("chebyshev_apply[1024, 60 terms]", small, 40),
        ("chebyshev_apply[12870, 60 terms]", spin2, repeats["chebyshev_apply"]),
    ):
        dim = op.dimension
        psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        psi = np.ascontiguousarray(psi / np.linalg.norm(psi))
        for backend, impl in kernels.IMPLEMENTATIONS["chebyshev_apply"].items():
            if impl is None:
                continue
            per_call = _time(
                lambda: impl(op.matrix, psi, 0.0, 0.01, coef_a, coef_b), reps
            )
            results.append((tag, backend, per_call))

    # Objective + gradient on the 1000-level pseudo-spectrum, 6 measurements
    energies = np.concatenate([np.zeros(50), np.linspace(0.15, 1.0, 950)])
    target = (energies == 0.0).astype(np.float64)
    times = np.sort(rng.uniform(0.3, math.pi / 0.15, 6))
    phases = rng.uniform(-0.5, 0.5, 6)
    for backend, impl in kernels.IMPLEMENTATIONS["objective_gradient"].items():
        if impl is None:
            continue
        per_call = _time(
            lambda: impl(times, phases, energies, target),
            repeats["objective_gradient"],
        )
        results.append(("objective_gradient[1000 x 6]", backend, per_call))

    return results


def main() -> None:
    print(f"active backend: {kernels.ACTIVE_BACKEND} (numba available: {kernels.HAVE_NUMBA})")
    print(f"{'kernel':<38} {'backend':<8} {'per call':>12}")
    rows = run()
    for name, backend, per_call in rows:
        print(f"{name:<38} {backend:<8} {per_call * 1e3:>10.3f} ms")
    by_kernel = {}
    for name, backend, per_call in rows:
        by_kernel.setdefault(name, {})[backend] = per_call
    for name, timings in by_kernel.items():
        if "numba" in timings and "numpy" in timings:
            print(f"{name}: numba speedup x{timings['numpy'] / timings['numba']:.1f}")


if __name__ == "__main__":
    main()
