"""Pseudo-spectrum construction and measurement-schedule optimization.

The optimization target is a synthetic diagonal model: a block of levels at
exactly zero energy plus a jittered uniform grid of excited levels between
the assumed gap and the spectrum width, all with equal amplitudes.  Times
and phases are tuned to minimize the mean squared difference between the
filter values and a target profile that is 1 at zero energy and 0 elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .filtering import SpectralState, run_postselected
from .schedules import Schedule, constant_schedule, exponential_schedule, gaussian_schedule
from .util import make_rng

PHASE_BOUND = np.pi / 2.0 - 1e-6  # keeps f(0) = prod cos(delta_i) positive


# ---------------------------------------------------------------------------
# Configuration types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PseudoSpectrumConfig:
    """Synthetic optimization target: gap, level counts, jitter and width."""

    gap: float
    n_states: int
    n_ground: int
    jitter_seed: int = 0
    width: float = 1.0
    jitter_scale: float = 1.0  # 0 disables the displacement (exact grid)

    def __post_init__(self):
        if not 0.0 < self.gap < 1.0:
            raise ValueError("gap must lie in (0, 1)")
        if not self.gap < self.width:
            raise ValueError("gap must be smaller than the spectrum width")
        if not 1 <= self.n_ground < self.n_states:
            raise ValueError("need 1 <= n_ground < n_states")

    @property
    def overlap2(self) -> float:
        return self.n_ground / self.n_states


@dataclass(frozen=True)
class OptimizationConfig:
    n_measurements: int
    total_time_budget: float
    allow_phases: bool = True
    restarts: int = 32
    convergence_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.n_measurements < 1:
            raise ValueError("need at least one measurement")
        if not self.total_time_budget > 0.0:
            raise ValueError("time budget must be positive")


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    schedule: Schedule
    objective_value: float
    f_at_zero: float
    iterations: int
    converged: bool
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BaselineResult:
    label: str
    final_energy: float
    final_probability: float


# ---------------------------------------------------------------------------
# Pseudo-spectrum and objective
# ---------------------------------------------------------------------------


def build_pseudo_spectrum(config: PseudoSpectrumConfig) -> SpectralState:
    """Equal-amplitude state: n_ground levels at 0, the rest on a jittered grid."""
    m = config.n_states - config.n_ground
    grid = np.linspace(config.gap, config.width, m)
    if m > 1 and config.jitter_scale != 0.0:
        spacing = (config.width - config.gap) / (m - 1)
        jitter = make_rng(config.jitter_seed).uniform(-0.5, 0.5, m)
        grid = grid + config.jitter_scale * spacing * jitter
        grid = np.maximum(grid, config.gap)  # never fall inside the gap
    energies = np.concatenate([np.zeros(config.n_ground), grid])
    amplitudes = np.full(config.n_states, 1.0 / math.sqrt(config.n_states))
    return SpectralState(energies, amplitudes)


def target_profile(spectrum: SpectralState) -> np.ndarray:
    """1 on zero-energy entries, 0 on everything else."""
    return (np.abs(spectrum.energies) < 1e-12).astype(np.float64)


def objective(schedule: Schedule, spectrum: SpectralState) -> float:
    """Mean squared difference between filter values and the target profile."""
    f = kernels.filter_values(schedule.times, schedule.phases, spectrum.energies)
    r = f - target_profile(spectrum)
    return float(np.mean(r * r))


def objective_gradient(schedule: Schedule, spectrum: SpectralState):
    """Analytic (d/dt_i, d/ddelta_i) of :func:`objective`."""
    _, grad_t, grad_d = kernels.objective_gradient(
        schedule.times, schedule.phases, spectrum.energies, target_profile(spectrum)
    )
    return grad_t, grad_d


# ---------------------------------------------------------------------------
# Multi-start quasi-Newton search
# ---------------------------------------------------------------------------

_PENALTY_WEIGHTS = (1e2, 1e5, 1e8)


def _minimize_one(times0, phases0, energies, target, budget, allow_phases, tol):
    """Penalty-escalated L-BFGS-B from one start; returns (times, phases, obj, nit, ok)."""
    n = times0.shape[0]
    log_t = np.log(times0)
    x = np.concatenate([log_t, phases0]) if allow_phases else log_t.copy()
    lo_t = math.log(budget) - 60.0
    hi_t = math.log(2.0 * budget)
    bounds = [(lo_t, hi_t)] * n
    if allow_phases:
        bounds += [(-PHASE_BOUND, PHASE_BOUND)] * n

    nit = 0
    ok = False
    for weight in _PENALTY_WEIGHTS:

        def fun(xv):
            t = np.exp(xv[:n])
            d = xv[n:] if allow_phases else np.zeros(n)
            obj, g_t, g_d = kernels.objective_gradient(t, d, energies, target)
            excess = (t.sum() - budget) / budget
            if excess > 0.0:
                obj += weight * excess * excess
                g_t = g_t + 2.0 * weight * excess / budget
            grad_log_t = g_t * t
            grad = np.concatenate([grad_log_t, g_d]) if allow_phases else grad_log_t
            return obj, grad

        res = minimize(
            fun,
            x,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": 800, "ftol": 1e-14, "gtol": 1e-10},
        )
        x = res.x
        nit += int(res.nit)
        # a line-search abort at machine precision still counts when the
        # projected gradient is essentially zero
        ok = bool(res.success) or float(np.abs(res.jac).max()) < 1e-6
        times = np.exp(x[:n])
        if times.sum() <= budget + tol:
            break

    times = np.exp(x[:n])
    phases = x[n:] if allow_phases else np.zeros(n)
    if times.sum() > budget:
        times = times * (budget / times.sum())  # final hard projection
    obj, _, _ = kernels.objective_gradient(times, phases, energies, target)
    return times, phases, obj, nit, ok


def _start_points(config: OptimizationConfig):
    """One exponential-ladder warm start, then log-uniform random starts."""
    n = config.n_measurements
    budget = config.total_time_budget
    starts = [np.sort(exponential_schedule(n, budget, math.sqrt(2.0)).times)]
    rng = make_rng(config.seed)
    lo = math.log(budget / 2.0**n)
    hi = math.log(budget)
    for _ in range(max(config.restarts - 1, 0)):
        starts.append(np.exp(rng.uniform(lo, hi, n)))
    return starts


def optimize_schedule(
    opt_config: OptimizationConfig, spectrum_config: PseudoSpectrumConfig
) -> OptimizationResult:
    """Multi-start gradient search for the best times (and optionally phases)."""
    spectrum = build_pseudo_spectrum(spectrum_config)
    energies = spectrum.energies
    target = target_profile(spectrum)
    budget = opt_config.total_time_budget
    tol = max(opt_config.convergence_tol, 1e-12 * budget)

    best = None
    any_ok = False
    for times0 in _start_points(opt_config):
        times, phases, obj, nit, ok = _minimize_one(
            np.clip(times0, budget * 1e-20, None),
            np.zeros(opt_config.n_measurements),
            energies,
            target,
            budget,
            opt_config.allow_phases,
            tol,
        )
        any_ok = any_ok or ok
        if best is None or obj < best[2]:
            best = (times, phases, obj, nit, ok)

    times, phases, obj, nit, _ = best
    order = np.argsort(times, kind="stable")
    schedule = Schedule(times[order], phases[order], "optimized")
    f0 = float(np.prod(np.cos(schedule.phases)))
    return OptimizationResult(
        schedule=schedule,
        objective_value=float(obj),
        f_at_zero=f0,
        iterations=nit,
        converged=bool(any_ok and schedule.total_time <= budget + tol),
        metadata={
            "seed": opt_config.seed,
            "restarts": opt_config.restarts,
            "budget": budget,
            "allow_phases": opt_config.allow_phases,
            "phase_bound": [-PHASE_BOUND, PHASE_BOUND],
            "gap": spectrum_config.gap,
            "overlap2": spectrum_config.overlap2,
        },
    )


# ---------------------------------------------------------------------------
# Baseline comparison
# ---------------------------------------------------------------------------


def compare_baselines(
    spectrum,
    total_time: float,
    n_steps: int,
    seeds,
    *,
    operator=None,
    gap: float | None = None,
    pseudo: PseudoSpectrumConfig | None = None,
    n_optimize: int = 6,
    optimize_restarts: int = 16,
    opt_seed: int = 0,
) -> list[BaselineResult]:
    """Run constant / Gaussian / exponential / optimized schedules on a state.

    ``spectrum`` is a SpectralState (diagonal route) or a StateVector (then
    ``operator`` must be given).  Optimized schedules are designed on the
    pseudo-spectrum (``pseudo`` or one built from ``gap`` with 5% overlap),
    mirroring the minimal-knowledge setting.
    """
    if pseudo is None:
        if gap is None:
            if isinstance(spectrum, SpectralState):
                positive = spectrum.energies[spectrum.energies > 1e-12]
                if positive.size == 0:
                    raise ValueError("cannot infer a gap from a gapless spectrum")
                gap = float(positive.min())
            else:
                raise ValueError("state-vector baselines need an explicit gap")
        pseudo = PseudoSpectrumConfig(gap=gap, n_states=1000, n_ground=50, jitter_seed=opt_seed)

    def run(schedule: Schedule) -> tuple[float, float]:
        traj = run_postselected(spectrum, schedule, operator)
        return traj.final_energy, traj.final_probability

    rows = []
    e, p = run(constant_schedule(n_steps, total_time))
    rows.append(BaselineResult("constant", e, p))

    gauss = np.array([run(gaussian_schedule(n_steps, total_time, s)) for s in seeds])
    rows.append(BaselineResult("gaussian", float(gauss[:, 0].mean()), float(gauss[:, 1].mean())))

    e, p = run(exponential_schedule(n_steps, total_time, math.sqrt(2.0)))
    rows.append(BaselineResult("exponential", e, p))

    for label, allow in (("optimized_times", False), ("optimized_times_phases", True)):
        result = optimize_schedule(
            OptimizationConfig(
                n_measurements=n_optimize,
                total_time_budget=total_time,
                allow_phases=allow,
                restarts=optimize_restarts,
                seed=opt_seed,
            ),
            pseudo,
        )
        e, p = run(result.schedule)
        rows.append(BaselineResult(label, e, p))
    return rows
