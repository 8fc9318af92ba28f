"""Sequential ancilla-measurement filtering of quantum states.

Each measurement step applies cos(t*O + delta) to the register and succeeds
with probability <psi|cos^2(t*O + delta)|psi>.  Two equivalent routes are
provided: an exact diagonal route on :class:`SpectralState` (amplitudes on
eigenlevels of the filtering operator) and a sparse state-vector route that
evaluates cos/sin of the operator through a truncated Chebyshev expansion.

Energies in a SpectralState are stored already shifted so the target level
sits at 0; use :func:`shift_target` to retarget explicitly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sparse
from scipy.special import jv

from . import kernels
from .errors import ConvergenceError, ExtinctionError, ParseError
from .operators import SparseHermitianOperator, StateVector, expectation, extremal_eigenvalues
from .schedules import Schedule
from .util import make_rng, write_csv

EXTINCTION_THRESHOLD = 1e-300

# Chebyshev evaluation: spectrum padding and the hard cap on series length
_CHEB_PAD = 0.01
_CHEB_TERM_CAP = 10_000


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralState:
    """Complex amplitudes on eigenlevels of the filtering operator."""

    energies: np.ndarray
    amplitudes: np.ndarray
    degeneracy_tolerance: float | None = None

    def __post_init__(self):
        energies = np.atleast_1d(np.asarray(self.energies, dtype=np.float64))
        amps = np.atleast_1d(np.asarray(self.amplitudes, dtype=np.complex128))
        if energies.shape != amps.shape or energies.ndim != 1:
            raise ValueError("energies and amplitudes must be 1D and congruent")
        norm = np.linalg.norm(amps)
        if not norm > 0.0:
            raise ValueError("spectral state has zero norm")
        amps = amps / norm
        energies = energies.copy()
        energies.flags.writeable = False
        amps.flags.writeable = False
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dimension(self) -> int:
        return self.energies.shape[0]

    def energy_expectation(self) -> float:
        weights = np.abs(self.amplitudes) ** 2
        return float(np.dot(weights, self.energies))

    def population(self, energy: float = 0.0, tol: float | None = None) -> float:
        """Total probability within ``tol`` of the given energy."""
        if tol is None:
            tol = self._group_tolerance()
        mask = np.abs(self.energies - energy) <= tol
        return float(np.sum(np.abs(self.amplitudes[mask]) ** 2))

    def _group_tolerance(self) -> float:
        if self.degeneracy_tolerance is not None:
            return self.degeneracy_tolerance
        width = float(self.energies.max() - self.energies.min())
        return 1e-8 * (width if width > 0.0 else 1.0)


@dataclass(frozen=True)
class TrajectoryRecord:
    step: int
    cumulative_time: float
    energy: float
    step_prob: float
    cum_prob: float


@dataclass(frozen=True, eq=False)
class FilterTrajectory:
    """Per-measurement record of a post-selected run."""

    records: tuple[TrajectoryRecord, ...]
    final_state: object  # SpectralState or StateVector

    @property
    def final_probability(self) -> float:
        return self.records[-1].cum_prob if self.records else 1.0

    @property
    def final_energy(self) -> float:
        return self.records[-1].energy if self.records else float("nan")

    @property
    def step_probs(self) -> np.ndarray:
        return np.array([r.step_prob for r in self.records])


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """Sampled ancilla outcomes; each failed attempt restarts from scratch."""

    outcomes: tuple[tuple[int, ...], ...]
    attempts_until_success: int | None
    seed: int

    @property
    def success(self) -> bool:
        return self.attempts_until_success is not None


# ---------------------------------------------------------------------------
# Filter function
# ---------------------------------------------------------------------------


def filter_value(schedule: Schedule, o: float) -> float:
    """f(o) = prod_i cos(t_i * o + delta_i)."""
    return float(
        kernels.filter_values(schedule.times, schedule.phases, np.array([o]))[0]
    )


def filter_curve(schedule: Schedule, grid) -> np.ndarray:
    return kernels.filter_values(schedule.times, schedule.phases, np.asarray(grid, dtype=np.float64))


def filter_slope(schedule: Schedule, o: float) -> float:
    """Analytic derivative df/do, used for the zero-slope parity checks."""
    args = schedule.times * o + schedule.phases
    c = np.cos(args)
    s = np.sin(args)
    total = 0.0
    for i in range(len(schedule)):
        others = np.prod(np.delete(c, i))
        total -= schedule.times[i] * s[i] * others
    return float(total)


# ---------------------------------------------------------------------------
# Single measurement steps
# ---------------------------------------------------------------------------


def apply_step_spectral(state: SpectralState, t: float, delta: float):
    """One post-selected measurement in the diagonal representation."""
    weights = np.cos(t * state.energies + delta)
    new_amps = state.amplitudes * weights
    p = float(np.vdot(new_amps, new_amps).real)
    if p < EXTINCTION_THRESHOLD:
        raise ExtinctionError(
            f"step probability {p:.3e} below {EXTINCTION_THRESHOLD:.0e}; "
            "the post-selected branch is annihilated"
        )
    new_state = SpectralState(
        state.energies, new_amps / np.sqrt(p), state.degeneracy_tolerance
    )
    return new_state, p


def _chebyshev_order(z: float, tolerance: float) -> int:
    """Series length so the Bessel coefficient tail drops below tolerance."""
    guess = int(np.ceil(z)) + 40
    while guess <= _CHEB_TERM_CAP:
        k = np.arange(guess + 1)
        mags = np.abs(jv(k, z))
        below = mags < max(tolerance, 1e-300) / 10.0
        # need three consecutive negligible coefficients past the turning point
        run = 0
        for i in range(len(below)):
            run = run + 1 if below[i] else 0
            if run == 3 and k[i] > z:
                return int(k[i])
        guess *= 2
    raise ConvergenceError(
        f"Chebyshev expansion for z={z:.3g} needs more than {_CHEB_TERM_CAP} terms"
    )


def cos_sin_branches(
    op: SparseHermitianOperator,
    state: StateVector,
    t: float,
    delta: float,
    tolerance: float = 1e-12,
    bounds: tuple[float, float] | None = None,
):
    """Unnormalized cos(tO+delta)|psi> and sin(tO+delta)|psi> branch vectors.

    Uses cos(z x + phi) = cos(phi) cos(z x) - sin(phi) sin(z x) on the
    operator rescaled to [-1, 1], with Jacobi-Anger Bessel coefficients.
    """
    if op.dimension != state.dimension:
        raise ValueError("operator and state dimensions differ")
    if bounds is None:
        bounds = op.bounds if op.bounds is not None else extremal_eigenvalues(op)
    lo, hi = bounds
    psi = state.amplitudes
    span = hi - lo
    scale_ref = max(1.0, abs(lo), abs(hi))
    if span <= 1e-12 * scale_ref or abs(t) * span < 1e-14:
        # operator acts as the scalar (lo+hi)/2 at this resolution
        arg = t * 0.5 * (lo + hi) + delta
        return np.cos(arg) * psi, np.sin(arg) * psi
    center = 0.5 * (lo + hi)
    half_width = 0.5 * span * (1.0 + _CHEB_PAD)
    z = abs(t) * half_width
    phi = t * center + delta
    n_terms = _chebyshev_order(z, tolerance) + 1
    k = np.arange(n_terms)
    bess = jv(k, z)
    a = np.zeros(n_terms)  # T_k coefficients of cos(z x)
    b = np.zeros(n_terms)  # T_k coefficients of sin(z x)
    a[0] = bess[0]
    even = k[2::2]
    a[even] = 2.0 * (-1.0) ** (even // 2) * bess[even]
    odd = k[1::2]
    b[odd] = 2.0 * (-1.0) ** ((odd - 1) // 2) * bess[odd]
    if t < 0.0:
        b = -b  # sin is odd in t while cos is even
    coef_cos = np.cos(phi) * a - np.sin(phi) * b
    coef_sin = np.sin(phi) * a + np.cos(phi) * b
    return kernels.chebyshev_apply(
        op.matrix, psi, center, 1.0 / half_width, coef_cos, coef_sin
    )


def apply_step_statevector(
    op: SparseHermitianOperator,
    state: StateVector,
    t: float,
    delta: float,
    tolerance: float = 1e-12,
    bounds: tuple[float, float] | None = None,
):
    """One post-selected measurement applied directly to a state vector."""
    cos_branch, _ = cos_sin_branches(op, state, t, delta, tolerance, bounds)
    p = float(np.vdot(cos_branch, cos_branch).real)
    if p < EXTINCTION_THRESHOLD:
        raise ExtinctionError(
            f"step probability {p:.3e} below {EXTINCTION_THRESHOLD:.0e}; "
            "the post-selected branch is annihilated"
        )
    return StateVector(cos_branch, state.basis_labels), p


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------


def _ordered_steps(schedule: Schedule, keep_order: bool) -> Schedule:
    return schedule if keep_order else schedule.sorted_by_time()


def run_postselected(
    state,
    schedule: Schedule,
    operator: SparseHermitianOperator | None = None,
    *,
    keep_order: bool = False,
    tolerance: float = 1e-12,
) -> FilterTrajectory:
    """Apply every step (shortest time first unless ``keep_order``), recording
    energy expectation, step probability and cumulative probability."""
    if len(schedule) == 0:
        raise ValueError("schedule must contain at least one step")
    steps = _ordered_steps(schedule, keep_order)
    records = []
    cum_p = 1.0
    cum_t = 0.0
    if isinstance(state, SpectralState):
        current = state
        for idx, (t, delta) in enumerate(steps.steps, start=1):
            current, p = apply_step_spectral(current, t, delta)
            cum_p *= p
            cum_t += t
            records.append(
                TrajectoryRecord(idx, cum_t, current.energy_expectation(), p, cum_p)
            )
    else:
        if operator is None:
            raise ValueError("state-vector runs need the filtering operator")
        bounds = operator.bounds
        if bounds is None:
            bounds = extremal_eigenvalues(operator)
        current = state
        for idx, (t, delta) in enumerate(steps.steps, start=1):
            current, p = apply_step_statevector(
                operator, current, t, delta, tolerance, bounds
            )
            cum_p *= p
            cum_t += t
            records.append(
                TrajectoryRecord(idx, cum_t, expectation(operator, current), p, cum_p)
            )
    return FilterTrajectory(tuple(records), current)


def run_sampled(
    state,
    schedule: Schedule,
    seed: int,
    operator: SparseHermitianOperator | None = None,
    *,
    max_attempts: int = 10_000,
    keep_order: bool = False,
    step_probs=None,
) -> MeasurementRecord:
    """Bernoulli-sample the ancilla readouts; restart from scratch on any 1.

    Because a failed attempt always restarts from the initial state, the
    step probabilities along the all-zero path are the same for every
    attempt and are computed once.  Ensemble runs over many seeds can pass
    ``step_probs`` (from a previous post-selected run of the same state and
    schedule) to skip that recomputation.
    """
    if len(schedule) == 0:
        return MeasurementRecord(((),), 1, seed)
    if step_probs is None:
        step_probs = run_postselected(
            state, schedule, operator, keep_order=keep_order
        ).step_probs
    probs = np.asarray(step_probs, dtype=np.float64)
    rng = make_rng(seed)
    attempts: list[tuple[int, ...]] = []
    for attempt in range(1, max_attempts + 1):
        draws = rng.random(probs.shape[0])
        outcome = []
        failed = False
        for u, p in zip(draws, probs):
            if u < p:
                outcome.append(0)
            else:
                outcome.append(1)
                failed = True
                break
        attempts.append(tuple(outcome))
        if not failed:
            return MeasurementRecord(tuple(attempts), attempt, seed)
    return MeasurementRecord(tuple(attempts), None, seed)


def success_probability(initial: SpectralState, schedule: Schedule) -> float:
    """One-pass probability that every measurement reads 0:
    sum_n |c_n|^2 prod_i cos^2(t_i E_n + delta_i)."""
    f = kernels.filter_values(schedule.times, schedule.phases, initial.energies)
    weights = np.abs(initial.amplitudes) ** 2
    return float(np.dot(weights, f * f))


def asymptotic_success(initial_overlap2: float, schedule: Schedule) -> float:
    """Converged-limit success probability prod_i cos^2(delta_i) * overlap^2."""
    if not 0.0 <= initial_overlap2 <= 1.0 + 1e-12:
        raise ValueError("overlap^2 must lie in [0, 1]")
    f0 = np.prod(np.cos(schedule.phases)) if len(schedule) else 1.0
    return float(f0 * f0 * initial_overlap2)


def shift_target(obj, o_target: float):
    """Retarget by subtracting ``o_target`` from energies (state) or the
    diagonal (operator); returns the same type."""
    if isinstance(obj, SpectralState):
        return SpectralState(
            obj.energies - o_target, obj.amplitudes, obj.degeneracy_tolerance
        )
    if isinstance(obj, SparseHermitianOperator):
        mat = (obj.matrix - o_target * sparse.identity(obj.dimension, format="csr")).tocsr()
        mat.sort_indices()
        mat.data.flags.writeable = False
        bounds = None
        if obj.bounds is not None:
            bounds = (obj.bounds[0] - o_target, obj.bounds[1] - o_target)
        shift, scale = obj.scale_info
        return SparseHermitianOperator(
            matrix=mat,
            hermiticity_checked=obj.hermiticity_checked,
            bounds=bounds,
            scale_info=(shift + scale * o_target, scale),
        )
    raise TypeError(f"cannot shift a {type(obj).__name__}")


# ---------------------------------------------------------------------------
# Degenerate-level grouping and wire formats
# ---------------------------------------------------------------------------


def group_degenerate(state: SpectralState, tol: float | None = None):
    """(energy, probability, multiplicity) per degenerate level, ascending."""
    if tol is None:
        tol = state._group_tolerance()
    order = np.argsort(state.energies, kind="stable")
    energies = state.energies[order]
    probs = np.abs(state.amplitudes[order]) ** 2
    groups = []
    start = 0
    for i in range(1, len(energies) + 1):
        if i == len(energies) or energies[i] - energies[i - 1] > tol:
            chunk = slice(start, i)
            groups.append(
                (
                    float(energies[chunk].mean()),
                    float(probs[chunk].sum()),
                    i - start,
                )
            )
            start = i
    return groups


def spectral_state_to_json(state: SpectralState) -> dict:
    return {
        "energies": [float(e) for e in state.energies],
        "amplitudes": [[float(a.real), float(a.imag)] for a in state.amplitudes],
    }


def spectral_state_from_json(doc: dict, *, norm_warning_tol: float = 1e-8):
    """Parse a spectral-state document; returns (state, norm_deviation)."""
    try:
        energies = np.array(doc["energies"], dtype=np.float64)
        amps = np.array([complex(re, im) for re, im in doc["amplitudes"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed spectral state document: {exc}") from exc
    if energies.shape != amps.shape:
        raise ParseError(
            f"spectral state has {energies.shape[0]} energies but "
            f"{amps.shape[0]} amplitudes"
        )
    deviation = abs(float(np.linalg.norm(amps)) - 1.0)
    return SpectralState(energies, amps), deviation


def load_spectral_state(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return spectral_state_from_json(doc)


def save_spectral_state(state: SpectralState, path) -> None:
    Path(path).write_text(
        json.dumps(spectral_state_to_json(state), indent=2) + "\n", encoding="utf-8"
    )


TRAJECTORY_HEADER = ("step", "time", "energy", "step_prob", "cum_prob")


def trajectory_rows(trajectory: FilterTrajectory, initial_energy: float | None = None):
    """CSV rows, optionally prefixed with a step-0 row for the initial state."""
    rows = []
    if initial_energy is not None:
        rows.append(("0", 0.0, initial_energy, 1.0, 1.0))
    for rec in trajectory.records:
        rows.append((str(rec.step), rec.cumulative_time, rec.energy, rec.step_prob, rec.cum_prob))
    return rows


def save_trajectory(trajectory: FilterTrajectory, path, initial_energy=None) -> None:
    write_csv(path, TRAJECTORY_HEADER, trajectory_rows(trajectory, initial_energy))
