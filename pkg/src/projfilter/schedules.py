"""Measurement schedules: the ordered (time, phase) pairs driving the filter."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError
from .util import make_rng

KNOWN_LABELS = ("constant", "gaussian", "exponential", "halving", "optimized", "custom")


def _wrap_phases(phases: np.ndarray) -> np.ndarray:
    out = phases.copy()
    outside = (out <= -np.pi) | (out > np.pi)
    if np.any(outside):  # in-range phases stay bit-exact
        out[outside] = np.mod(out[outside] + np.pi, 2.0 * np.pi) - np.pi
        out[out == -np.pi] = np.pi  # keep the range (-pi, pi]
    return out


@dataclass(frozen=True, eq=False)
class Schedule:
    """Ordered measurement times and phases; order is preserved as given."""

    times: np.ndarray
    phases: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=np.float64))
        phases = np.atleast_1d(np.asarray(self.phases, dtype=np.float64))
        if times.shape != phases.shape:
            raise ValueError("times and phases must have identical length")
        if times.size and (not np.all(np.isfinite(times)) or np.any(times < 0.0)):
            raise ValueError("measurement times must be finite and non-negative")
        if phases.size and not np.all(np.isfinite(phases)):
            raise ValueError("phases must be finite")
        phases = _wrap_phases(phases.copy())
        times = times.copy()
        times.flags.writeable = False
        phases.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "phases", phases)

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def n_steps(self) -> int:
        return self.times.shape[0]

    @property
    def total_time(self) -> float:
        return float(self.times.sum())

    @property
    def steps(self) -> list[tuple[float, float]]:
        return [(float(t), float(d)) for t, d in zip(self.times, self.phases)]

    def sorted_by_time(self) -> "Schedule":
        order = np.argsort(self.times, kind="stable")
        return Schedule(self.times[order], self.phases[order], self.label)

    def permuted(self, order) -> "Schedule":
        order = np.asarray(order, dtype=np.int64)
        return Schedule(self.times[order], self.phases[order], self.label)

    def repeated(self, n: int) -> "Schedule":
        return Schedule(np.tile(self.times, n), np.tile(self.phases, n), self.label)


def halving_schedule(t1: float, n_steps: int) -> Schedule:
    """Times t1, t1/2, t1/4, ... with zero phases; total time stays below 2*t1."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    times = t1 * 0.5 ** np.arange(n_steps, dtype=np.float64)
    return Schedule(times, np.zeros(n_steps), "halving")


def constant_schedule(n: int, total_time: float) -> Schedule:
    if n < 1:
        raise ValueError("need at least one step")
    return Schedule(np.full(n, total_time / n), np.zeros(n), "constant")


def gaussian_schedule(n: int, total_time: float, seed: int) -> Schedule:
    """|normal| draws rescaled so the times sum to the requested total."""
    if n < 1:
        raise ValueError("need at least one step")
    draws = np.abs(make_rng(seed).standard_normal(n))
    times = draws * (total_time / draws.sum())
    return Schedule(times, np.zeros(n), "gaussian")


def exponential_schedule(n: int, total_time: float, ratio: float) -> Schedule:
    """Geometric times with the given step ratio, ascending, summing to total."""
    if n < 1:
        raise ValueError("need at least one step")
    if ratio <= 0.0:
        raise ValueError("ratio must be positive")
    if abs(ratio - 1.0) < 1e-15:
        return Schedule(np.full(n, total_time / n), np.zeros(n), "exponential")
    raw = ratio ** np.arange(n, dtype=np.float64)
    times = np.sort(raw * (total_time / raw.sum()))
    return Schedule(times, np.zeros(n), "exponential")


# ---------------------------------------------------------------------------
# Wire format: {"label": ..., "steps": [[t, delta], ...]}
# ---------------------------------------------------------------------------


def schedule_to_json(schedule: Schedule) -> dict:
    return {
        "label": schedule.label,
        "steps": [[float(t), float(d)] for t, d in schedule.steps],
    }


def schedule_from_json(doc: dict) -> Schedule:
    try:
        steps = doc["steps"]
        label = doc.get("label", "custom")
        times = np.array([s[0] for s in steps], dtype=np.float64)
        phases = np.array([s[1] for s in steps], dtype=np.float64)
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed schedule document: {exc}") from exc
    return Schedule(times, phases, label=str(label))


def save_schedule(schedule: Schedule, path, metadata: dict | None = None) -> None:
    doc = schedule_to_json(schedule)
    if metadata is not None:
        doc["metadata"] = metadata
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_schedule(path) -> Schedule:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return schedule_from_json(doc)
