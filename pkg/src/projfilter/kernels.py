"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

Three inner loops dominate runtime in this package: assembling spin-spin
coupling entries over a bit-string basis, the Chebyshev recurrence that
applies cos/sin of a sparse operator to a state vector, and the
filter-objective/gradient evaluation inside the schedule optimizer.  Each
kernel exists in two equivalent implementations; the active one is picked
once at import time from the ``PROJFILTER_BACKEND`` environment variable:

* ``numba`` / ``numpy`` force one implementation everywhere;
* ``auto`` (default) uses numba where it measures faster, which is every
  kernel except the Chebyshev recurrence on states above a few thousand
  entries, where scipy's C matvec wins.

Both implementations stay importable through ``IMPLEMENTATIONS`` so they
can be cross-checked in tests and timed in ``projfilter.benchmark``.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is always installed in CI
    HAVE_NUMBA = False


def _resolve_backend() -> str:
    choice = os.environ.get("PROJFILTER_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"PROJFILTER_BACKEND must be 'auto', 'numba' or 'numpy', got {choice!r}"
        )
    if choice == "numba" and not HAVE_NUMBA:
        raise ImportError("PROJFILTER_BACKEND=numba but numba is not importable")
    if choice == "auto" and not HAVE_NUMBA:
        return "numpy"
    return choice


ACTIVE_BACKEND = _resolve_backend()

# "auto" keeps numba everywhere except the Chebyshev recurrence on large
# states, where scipy's C matvec beats the jitted gather loop (see
# projfilter.benchmark; crossover measured around a few thousand rows).
CHEBYSHEV_AUTO_CUTOFF = 4096

_JIT = dict(cache=True, nogil=True)


# ---------------------------------------------------------------------------
# sigma.sigma coupling entries over a bit-string basis
#
# For a pair (i, j) the bond sigma_i . sigma_j contributes +/-1 on the
# diagonal (aligned/anti-aligned bits) and 2 on the off-diagonal entry that
# flips both bits of an anti-aligned pair.
# ---------------------------------------------------------------------------


def _pair_coupling_numpy(n_spins, left, right):
    dim = 1 << n_spins
    states = np.arange(dim, dtype=np.int64)
    diag = np.zeros(dim, dtype=np.float64)
    row_parts = []
    col_parts = []
    for i, j in zip(left, right):
        bi = (states >> i) & 1
        bj = (states >> j) & 1
        diag += (2.0 * bi - 1.0) * (2.0 * bj - 1.0)
        anti = np.nonzero(bi != bj)[0].astype(np.int64)
        row_parts.append(anti ^ ((1 << int(i)) | (1 << int(j))))
        col_parts.append(anti)
    if row_parts:
        rows = np.concatenate(row_parts)
        cols = np.concatenate(col_parts)
    else:
        rows = np.empty(0, dtype=np.int64)
        cols = np.empty(0, dtype=np.int64)
    vals = np.full(rows.shape[0], 2.0)
    return diag, rows, cols, vals


def _pair_coupling_core(n_spins, left, right):
    dim = np.int64(1) << n_spins
    n_pairs = left.shape[0]
    diag = np.zeros(dim, dtype=np.float64)
    total = n_pairs * (dim // 2)  # each pair is anti-aligned in half the basis
    rows = np.empty(total, dtype=np.int64)
    cols = np.empty(total, dtype=np.int64)
    k = 0
    for p in range(n_pairs):
        i = left[p]
        j = right[p]
        mask = (np.int64(1) << i) | (np.int64(1) << j)
        for s in range(dim):
            bi = (s >> i) & 1
            bj = (s >> j) & 1
            if bi == bj:
                diag[s] += 1.0
            else:
                diag[s] -= 1.0
                rows[k] = s ^ mask
                cols[k] = s
                k += 1
    vals = np.full(total, 2.0)
    return diag, rows, cols, vals


# ---------------------------------------------------------------------------
# Chebyshev application of cos/sin branches
#
# Given coefficient arrays a_k, b_k for the rescaled operator
# X = (A - center) * inv_h, accumulates u = sum_k a_k T_k(X) psi and
# v = sum_k b_k T_k(X) psi in a single recurrence pass.
# ---------------------------------------------------------------------------


def _chebyshev_numpy(matrix, psi, center, inv_h, coef_a, coef_b):
    if matrix.dtype.kind == "f" and np.iscomplexobj(psi):
        # two real matvecs beat scipy's per-call mixed-dtype upcast
        def matvec(x):
            return matrix.dot(x.real) + 1j * matrix.dot(x.imag)

    else:
        matvec = matrix.dot
    u = coef_a[0] * psi
    v = coef_b[0] * psi
    n_terms = coef_a.shape[0]
    if n_terms == 1:
        return u, v
    t_prev = psi
    t_cur = (matvec(psi) - center * psi) * inv_h
    for k in range(1, n_terms):
        u = u + coef_a[k] * t_cur
        v = v + coef_b[k] * t_cur
        if k + 1 < n_terms:
            t_next = 2.0 * ((matvec(t_cur) - center * t_cur) * inv_h) - t_prev
            t_prev = t_cur
            t_cur = t_next
    return u, v


def _chebyshev_core(indptr, indices, data, psi, center, inv_h, coef_a, coef_b):
    n = psi.shape[0]
    n_terms = coef_a.shape[0]
    u = np.empty(n, dtype=np.complex128)
    v = np.empty(n, dtype=np.complex128)
    for r in range(n):
        u[r] = coef_a[0] * psi[r]
        v[r] = coef_b[0] * psi[r]
    if n_terms == 1:
        return u, v
    t_prev = psi.copy()
    t_cur = np.empty(n, dtype=np.complex128)
    for r in range(n):
        acc = 0.0 + 0.0j
        for p in range(indptr[r], indptr[r + 1]):
            acc += data[p] * psi[indices[p]]
        t_cur[r] = (acc - center * psi[r]) * inv_h
    two_inv_h = 2.0 * inv_h
    for k in range(1, n_terms):
        ak = coef_a[k]
        bk = coef_b[k]
        if k + 1 < n_terms:
            # fused: accumulate this term and overwrite t_prev with the next
            for r in range(n):
                tr = t_cur[r]
                u[r] += ak * tr
                v[r] += bk * tr
                acc = 0.0 + 0.0j
                for p in range(indptr[r], indptr[r + 1]):
                    acc += data[p] * t_cur[indices[p]]
                t_prev[r] = two_inv_h * (acc - center * tr) - t_prev[r]
            swap = t_prev
            t_prev = t_cur
            t_cur = swap
        else:
            for r in range(n):
                u[r] += ak * t_cur[r]
                v[r] += bk * t_cur[r]
    return u, v


def _chebyshev_numba_adapter(matrix, psi, center, inv_h, coef_a, coef_b):
    return _chebyshev_numba(
        matrix.indptr, matrix.indices, matrix.data, psi, center, inv_h, coef_a, coef_b
    )


# ---------------------------------------------------------------------------
# Filter values and the mean-squared objective with its analytic gradient
# ---------------------------------------------------------------------------


def _filter_values_numpy(times, phases, energies):
    if times.shape[0] == 0:
        return np.ones_like(energies)
    args = np.outer(times, energies) + phases[:, None]
    return np.cos(args).prod(axis=0)


def _filter_values_core(times, phases, energies):
    m = times.shape[0]
    n = energies.shape[0]
    out = np.ones(n, dtype=np.float64)
    for k in range(n):
        e = energies[k]
        acc = 1.0
        for i in range(m):
            acc *= np.cos(times[i] * e + phases[i])
        out[k] = acc
    return out


def _objective_gradient_numpy(times, phases, energies, target):
    m = times.shape[0]
    n = energies.shape[0]
    if m == 0:
        r = np.ones(n) - target
        return float(np.mean(r * r)), np.zeros(0), np.zeros(0)
    args = np.outer(times, energies) + phases[:, None]
    c = np.cos(args)
    s = np.sin(args)
    f = c.prod(axis=0)
    r = f - target
    obj = float(np.mean(r * r))
    # partial products prod_{j != i} c_j via prefix/suffix cumulative products
    pre = np.ones((m, n))
    suf = np.ones((m, n))
    if m > 1:
        np.cumprod(c[:-1], axis=0, out=pre[1:])
        np.cumprod(c[:0:-1], axis=0, out=suf[-2::-1])
    part = pre * suf
    w = (2.0 / n) * r
    grad_t = -(w * energies * s * part).sum(axis=1)
    grad_d = -(w * s * part).sum(axis=1)
    return obj, grad_t, grad_d


def _objective_gradient_core(times, phases, energies, target):
    m = times.shape[0]
    n = energies.shape[0]
    grad_t = np.zeros(m, dtype=np.float64)
    grad_d = np.zeros(m, dtype=np.float64)
    obj = 0.0
    cvals = np.empty(m, dtype=np.float64)
    svals = np.empty(m, dtype=np.float64)
    suf = np.empty(m + 1, dtype=np.float64)
    for k in range(n):
        e = energies[k]
        for i in range(m):
            a = times[i] * e + phases[i]
            cvals[i] = np.cos(a)
            svals[i] = np.sin(a)
        suf[m] = 1.0
        for i in range(m - 1, -1, -1):
            suf[i] = suf[i + 1] * cvals[i]
        r = suf[0] - target[k]
        obj += r * r
        w = 2.0 * r
        pre = 1.0
        for i in range(m):
            part = pre * suf[i + 1]
            grad_t[i] -= w * e * svals[i] * part
            grad_d[i] -= w * svals[i] * part
            pre *= cvals[i]
    inv = 1.0 / n
    return obj * inv, grad_t * inv, grad_d * inv


# ---------------------------------------------------------------------------
# Backend registry and public dispatchers
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _pair_coupling_numba = njit(**_JIT)(_pair_coupling_core)
    _chebyshev_numba = njit(**_JIT)(_chebyshev_core)
    _filter_values_numba = njit(**_JIT)(_filter_values_core)
    _objective_gradient_numba = njit(**_JIT)(_objective_gradient_core)
else:  # pragma: no cover
    _pair_coupling_numba = None
    _chebyshev_numba = None
    _filter_values_numba = None
    _objective_gradient_numba = None

IMPLEMENTATIONS = {
    "pair_coupling_entries": {
        "numpy": _pair_coupling_numpy,
        "numba": _pair_coupling_numba,
    },
    "chebyshev_apply": {
        "numpy": _chebyshev_numpy,
        "numba": _chebyshev_numba_adapter if HAVE_NUMBA else None,
    },
    "filter_values": {
        "numpy": _filter_values_numpy,
        "numba": _filter_values_numba,
    },
    "objective_gradient": {
        "numpy": _objective_gradient_numpy,
        "numba": _objective_gradient_numba,
    },
}


def _active(name):
    backend = "numba" if ACTIVE_BACKEND == "auto" else ACTIVE_BACKEND
    return IMPLEMENTATIONS[name][backend]


def pair_coupling_entries(n_spins: int, pairs) -> tuple:
    """COO pieces (diag, rows, cols, vals) of sum over pairs of sigma_i.sigma_j."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    left = np.ascontiguousarray(pairs[:, 0])
    right = np.ascontiguousarray(pairs[:, 1])
    return _active("pair_coupling_entries")(n_spins, left, right)


def chebyshev_apply(matrix, psi, center, inv_h, coef_a, coef_b):
    """Accumulate two Chebyshev series of a sparse CSR matrix acting on psi."""
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    coef_a = np.ascontiguousarray(coef_a, dtype=np.float64)
    coef_b = np.ascontiguousarray(coef_b, dtype=np.float64)
    if ACTIVE_BACKEND == "auto":
        backend = "numba" if matrix.shape[0] < CHEBYSHEV_AUTO_CUTOFF else "numpy"
    else:
        backend = ACTIVE_BACKEND
    return IMPLEMENTATIONS["chebyshev_apply"][backend](
        matrix, psi, float(center), float(inv_h), coef_a, coef_b
    )


def filter_values(times, phases, energies):
    """Product of cos(t_i * E + delta_i) over schedule steps, per energy."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    phases = np.ascontiguousarray(phases, dtype=np.float64)
    energies = np.ascontiguousarray(energies, dtype=np.float64)
    return _active("filter_values")(times, phases, energies)


def objective_gradient(times, phases, energies, target):
    """Mean squared filter-vs-target error plus gradients w.r.t. times/phases."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    phases = np.ascontiguousarray(phases, dtype=np.float64)
    energies = np.ascontiguousarray(energies, dtype=np.float64)
    target = np.ascontiguousarray(target, dtype=np.float64)
    return _active("objective_gradient")(times, phases, energies, target)
