"""Command-line driver wiring operators, filtering and optimization together.

Subcommands: filter-curve | j2-project | energy-run | optimize | spectral-replay.
Every run writes its figure-ready CSV/JSON artifacts plus a ``run_manifest.json``
carrying the tool version, the echoed config, seeds and content hashes.  CSV
bodies are byte-identical for identical (config, seed); only the manifest
carries timestamps.

Exit codes: 0 success, 2 configuration/parse/capacity error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from . import __version__
from .errors import (
    CapacityError,
    ConvergenceError,
    DependencyError,
    ExtinctionError,
    ParseError,
    StructureError,
)
from .filtering import (
    SpectralState,
    apply_step_spectral,
    apply_step_statevector,
    filter_curve,
    group_degenerate,
    load_spectral_state,
    run_postselected,
    shift_target,
    TRAJECTORY_HEADER,
)
from .operators import (
    DENSE_LIMIT,
    HEAVY_DENSE_LIMIT,
    SparseHermitianOperator,
    SpinLatticeSpec,
    StateVector,
    build_heisenberg,
    build_jz,
    build_total_spin_squared,
    eigendecompose,
    expectation,
    extremal_eigenvalues,
    jz_sector,
    neel_state,
    random_trial_state,
    scale_and_shift,
    sector_restrict,
    sector_restrict_state,
)
from .optimize import (
    OptimizationConfig,
    PseudoSpectrumConfig,
    build_pseudo_spectrum,
    compare_baselines,
    optimize_schedule,
)
from .schedules import (
    Schedule,
    constant_schedule,
    exponential_schedule,
    gaussian_schedule,
    halving_schedule,
    load_schedule,
    save_schedule,
    schedule_to_json,
)
from .util import fmt_float, sha256_file, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


# ---------------------------------------------------------------------------
# Run context: output files and the manifest
# ---------------------------------------------------------------------------


class RunContext:
    def __init__(self, command: str, config: dict, outdir: Path, seed: int):
        self.command = command
        self.config = config
        self.outdir = outdir
        self.seed = seed
        self.started = datetime.now(timezone.utc).isoformat()
        self.files: list[str] = []
        self.notes: dict = {}
        outdir.mkdir(parents=True, exist_ok=True)

    def emit_csv(self, name: str, header, rows) -> Path:
        path = self.outdir / name
        write_csv(path, header, rows)
        self.files.append(name)
        return path

    def emit_json(self, name: str, doc: dict) -> Path:
        path = self.outdir / name
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.files.append(name)
        return path

    def finish(self) -> Path:
        manifest = {
            "tool": "projfilter",
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "started_utc": self.started,
            "finished_utc": datetime.now(timezone.utc).isoformat(),
            "notes": self.notes,
            "files": [
                {"path": name, "sha256": sha256_file(self.outdir / name)}
                for name in self.files
            ],
        }
        path = self.outdir / "run_manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------


def _load_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ParseError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc


def _require(config: dict, key: str):
    if key not in config:
        raise ParseError(f"config is missing the required key {key!r}")
    return config[key]


def _model_lattice(model: dict) -> SpinLatticeSpec:
    return SpinLatticeSpec(
        lx=int(_require(model, "lx")),
        ly=int(_require(model, "ly")),
        periodic=bool(model.get("periodic", True)),
        field_h=float(model.get("field_h", 0.0)),
    )


def _model_pseudo(model: dict) -> PseudoSpectrumConfig:
    return PseudoSpectrumConfig(
        gap=float(_require(model, "gap")),
        n_states=int(model.get("n_states", 1000)),
        n_ground=int(model.get("n_ground", 50)),
        jitter_seed=int(model.get("jitter_seed", 0)),
        width=float(model.get("width", 1.0)),
        jitter_scale=float(model.get("jitter_scale", 1.0)),
    )


def _model_spectral_state(model: dict, ctx: RunContext) -> SpectralState:
    state, deviation = load_spectral_state(_require(model, "path"))
    if deviation > 1e-8:
        print(
            f"warning: spectral file norm deviates by {deviation:.3e}; renormalized",
            file=sys.stderr,
        )
        ctx.notes["renormalized_input"] = deviation
    return state


def _resolve_schedule(config: dict, seed: int, ctx: RunContext) -> Schedule:
    doc = _require(config, "schedule")
    if "file" in doc:
        return load_schedule(doc["file"])
    builder = _require(doc, "builder")
    if builder == "halving":
        return halving_schedule(float(doc.get("t1", math.pi / 4.0)), int(doc.get("n_steps", 3)))
    if builder == "constant":
        return constant_schedule(int(_require(doc, "n_steps")), float(_require(doc, "total_time")))
    if builder == "gaussian":
        return gaussian_schedule(
            int(_require(doc, "n_steps")),
            float(_require(doc, "total_time")),
            int(doc.get("seed", seed)),
        )
    if builder == "exponential":
        return exponential_schedule(
            int(_require(doc, "n_steps")),
            float(_require(doc, "total_time")),
            float(doc.get("ratio", math.sqrt(2.0))),
        )
    if builder == "optimized":
        result = _run_optimizer(config, doc, seed)
        ctx.notes["optimizer"] = {
            "objective": result.objective_value,
            "f0": result.f_at_zero,
            "converged": result.converged,
        }
        return result.schedule
    if builder == "custom":
        steps = doc.get("steps", [])
        return Schedule(
            np.array([s[0] for s in steps], dtype=np.float64),
            np.array([s[1] for s in steps], dtype=np.float64),
            "custom",
        )
    raise ParseError(f"unknown schedule builder {builder!r}")


def _optimizer_budget(doc: dict, gap: float) -> float:
    if "total_time" in doc:
        return float(doc["total_time"])
    return float(doc.get("budget_gap_units", 1.0)) * math.pi / gap


def _run_optimizer(config: dict, doc: dict, seed: int):
    model = _require(config, "model")
    if model.get("type") != "pseudo_spectrum":
        raise ParseError("an optimized schedule needs a pseudo_spectrum model")
    pseudo = _model_pseudo(model)
    opt = OptimizationConfig(
        n_measurements=int(doc.get("n_measurements", 6)),
        total_time_budget=_optimizer_budget(doc, pseudo.gap),
        allow_phases=bool(doc.get("allow_phases", True)),
        restarts=int(doc.get("restarts", 32)),
        convergence_tol=float(doc.get("convergence_tol", 1e-8)),
        seed=int(doc.get("seed", seed)),
    )
    return optimize_schedule(opt, pseudo)


def _thread_count() -> int:
    return max(1, int(os.environ.get("PROJFILTER_THREADS", "1")))


def _thread_map(fn, items):
    workers = _thread_count()
    items = list(items)
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Shared run helper with extinction capture
# ---------------------------------------------------------------------------


def _run_trajectory(state, schedule, operator=None):
    """Post-selected run returning (records, final_state, extinct)."""
    steps = schedule.sorted_by_time()
    records = []
    cum_p, cum_t = 1.0, 0.0
    current = state
    extinct = False
    bounds = None
    if operator is not None and operator.bounds is None:
        bounds = extremal_eigenvalues(operator)
    elif operator is not None:
        bounds = operator.bounds
    for idx, (t, delta) in enumerate(steps.steps, start=1):
        try:
            if isinstance(current, SpectralState):
                current, p = apply_step_spectral(current, t, delta)
                energy = current.energy_expectation()
            else:
                current, p = apply_step_statevector(operator, current, t, delta, 1e-12, bounds)
                energy = expectation(operator, current)
        except ExtinctionError:
            cum_t += t
            records.append((idx, cum_t, float("nan"), 0.0, 0.0, 1))
            extinct = True
            break
        cum_p *= p
        cum_t += t
        records.append((idx, cum_t, energy, p, cum_p, 0))
    return records, current, extinct


def _initial_energy(state, operator=None) -> float:
    if isinstance(state, SpectralState):
        return state.energy_expectation()
    return expectation(operator, state)


def _trajectory_files(ctx, label, records, initial_energy, initial_prob, gap, scale_info):
    """Write the stable 5-column trajectory plus the extended-axis variant."""
    shift, scale = scale_info
    base = [("0", 0.0, initial_energy, initial_prob, initial_prob)]
    full = [
        (
            "0",
            0.0,
            0.0 if gap else float("nan"),
            initial_energy,
            shift + scale * initial_energy,
            initial_prob,
            initial_prob,
            "0",
        )
    ]
    for step, cum_t, energy, p, cum_p, extinct in records:
        base.append((str(step), cum_t, energy, p, cum_p * initial_prob))
        full.append(
            (
                str(step),
                cum_t,
                cum_t * gap if gap else float("nan"),
                energy,
                shift + scale * energy,
                p,
                cum_p * initial_prob,
                str(extinct),
            )
        )
    ctx.emit_csv(f"trajectory_{label}.csv", TRAJECTORY_HEADER, base)
    ctx.emit_csv(
        f"trajectory_{label}_full.csv",
        ("step", "time", "time_gap_units", "energy", "energy_unscaled", "step_prob", "cum_prob", "extinct"),
        full,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_filter_curve(config: dict, ctx: RunContext) -> int:
    schedule = _resolve_schedule(config, ctx.seed, ctx)
    grid_cfg = config.get("grid", {})
    if "values" in grid_cfg:
        grid = np.asarray(grid_cfg["values"], dtype=np.float64)
    else:
        start = float(grid_cfg.get("start", 0.0))
        stop = float(grid_cfg.get("stop", 1.0))
        points = int(grid_cfg.get("points", 1001))
        grid = np.linspace(start, stop, points)
        zoom_radius = float(grid_cfg.get("zoom_radius", 0.02 * (stop - start)))
        zoom_points = int(grid_cfg.get("zoom_points", 201))
        if zoom_points > 0 and zoom_radius > 0.0:
            zoom = np.linspace(-zoom_radius, zoom_radius, zoom_points)
            grid = np.unique(np.concatenate([grid, zoom]))
    f = filter_curve(schedule, grid)
    ctx.emit_csv(
        "filter_curve.csv",
        ("energy", "f", "f2"),
        [(e, v, v * v) for e, v in zip(grid, f)],
    )
    ctx.emit_json("schedule_used.json", schedule_to_json(schedule))
    ctx.finish()
    return EXIT_OK


def _lattice_setup(config: dict, heavy: bool):
    """Build (spec, H_sector, J2_sector, sector, initial StateVector)."""
    model = _require(config, "model")
    if model.get("type") != "lattice":
        raise ParseError("this command needs a lattice model")
    spec = _model_lattice(model)
    n = spec.n_sites
    hamiltonian = build_heisenberg(spec)
    spin2 = build_total_spin_squared(n)
    sector_kind = config.get("sector", "jz0" if n % 2 == 0 else "full")
    if sector_kind == "jz0":
        sector = jz_sector(n, 0.0)
        hamiltonian = sector_restrict(hamiltonian, sector)
        spin2 = sector_restrict(spin2, sector)
    elif sector_kind == "full":
        sector = None
    else:
        raise ParseError(f"unknown sector {sector_kind!r}")
    dim = hamiltonian.dimension
    limit = HEAVY_DENSE_LIMIT if heavy else DENSE_LIMIT
    if dim > limit:
        raise CapacityError(
            f"sector dimension {dim} exceeds the limit {limit}"
            + ("" if heavy else "; pass --heavy for up to 12870")
        )

    state_cfg = config.get("state", "neel")
    if state_cfg == "neel":
        state = neel_state(spec)
        if sector is not None:
            state = sector_restrict_state(state, sector)
    elif state_cfg == "ground":
        if dim <= 64:
            _, dense_vecs = np.linalg.eigh(hamiltonian.to_dense())
            ground_vec = dense_vecs[:, 0]
        else:
            _, vecs = spla.eigsh(hamiltonian.matrix, k=1, which="SA",
                                 v0=np.ones(dim) / math.sqrt(dim))
            ground_vec = vecs[:, 0]
        labels = sector.index_map if sector is not None else np.arange(dim, dtype=np.int64)
        state = StateVector(ground_vec, labels)
    elif isinstance(state_cfg, dict) and "random_trial" in state_cfg:
        eigen = eigendecompose(hamiltonian, heavy=heavy)
        labels = sector.index_map if sector is not None else None
        state = random_trial_state(eigen, int(state_cfg["random_trial"].get("seed", 0)), labels)
    else:
        raise ParseError(f"unknown state source {state_cfg!r}")
    return spec, hamiltonian, spin2, sector, state


def cmd_j2_project(config: dict, ctx: RunContext) -> int:
    heavy = bool(config.get("heavy", False))
    spec, hamiltonian, spin2, sector, state = _lattice_setup(config, heavy)

    j_target = float(config.get("j_target", 0.0))
    shift = j_target * (j_target + 1.0)
    filter_op = shift_target(spin2, shift) if shift != 0.0 else spin2

    if "schedule" in config:
        schedule = _resolve_schedule(config, ctx.seed, ctx)
    else:
        schedule = halving_schedule(
            float(config.get("t1", math.pi / 4.0)), int(config.get("halving_steps", 3))
        )

    initial_j2 = expectation(filter_op, state)
    records, final_state, extinct = _run_trajectory(state, schedule, filter_op)
    _trajectory_files(ctx, "j2", records, initial_j2, 1.0, None, filter_op.scale_info)

    acceptance = records[-1][4] if records and not extinct else 0.0
    e_min, e_max = extremal_eigenvalues(hamiltonian)
    width = e_max - e_min
    summary = {
        "lattice": {"lx": spec.lx, "ly": spec.ly, "periodic": spec.periodic},
        "sector_dimension": hamiltonian.dimension,
        "j_target": j_target,
        "acceptance": acceptance,
        "extinct": extinct,
        "initial_j2": initial_j2,
        "final_j2": records[-1][2] if records else initial_j2,
        "e_min": e_min,
        "e_max": e_max,
        "initial_scaled_energy": (expectation(hamiltonian, state) - e_min) / width,
        "final_scaled_energy": (expectation(hamiltonian, final_state) - e_min) / width,
        "seed": ctx.seed,
    }

    emit_amplitudes = bool(config.get("emit_amplitudes", True))
    if emit_amplitudes:
        eigen = eigendecompose(hamiltonian, heavy=heavy)
        initial_coeffs = eigen.eigenvectors.conj().T @ state.amplitudes
        final_coeffs = eigen.eigenvectors.conj().T @ final_state.amplitudes
        rows = [
            (str(i), e, abs(a) ** 2, a.real, a.imag, abs(b) ** 2, b.real, b.imag)
            for i, (e, a, b) in enumerate(zip(eigen.eigenvalues, initial_coeffs, final_coeffs))
        ]
        ctx.emit_csv(
            "amplitudes_states.csv",
            ("index", "energy", "prob_initial", "re_initial", "im_initial",
             "prob_final", "re_final", "im_final"),
            rows,
        )
        initial_groups = group_degenerate(SpectralState(eigen.eigenvalues, initial_coeffs))
        final_groups = group_degenerate(SpectralState(eigen.eigenvalues, final_coeffs))
        grouped = [
            (e0, p0, str(c0), p1)
            for (e0, p0, c0), (_, p1, _) in zip(initial_groups, final_groups)
        ]
        ctx.emit_csv(
            "amplitudes.csv",
            ("energy", "prob_initial", "multiplicity", "prob_final"),
            grouped,
        )

    ctx.emit_json("summary.json", summary)
    ctx.finish()
    return EXIT_OK


def cmd_energy_run(config: dict, ctx: RunContext) -> int:
    heavy = bool(config.get("heavy", False))
    model = _require(config, "model")
    kind = model.get("type")
    gap = config.get("gap")
    projection_prob = 1.0

    if kind == "lattice":
        spec, hamiltonian, spin2, sector, state = _lattice_setup(config, heavy)
        if bool(config.get("project_j2", False)):
            proj_schedule = halving_schedule(
                math.pi / 4.0, int(config.get("halving_steps", 3))
            )
            traj = run_postselected(state, proj_schedule, spin2)
            projection_prob = traj.final_probability
            state = traj.final_state
        e_min, e_max = extremal_eigenvalues(hamiltonian)
        operator = scale_and_shift(hamiltonian, e_min, e_min, e_max)
        run_state = state
    elif kind == "pseudo_spectrum":
        run_state = build_pseudo_spectrum(_model_pseudo(model))
        operator = None
        if gap is None:
            gap = _model_pseudo(model).gap
    elif kind == "spectral_file":
        run_state = _model_spectral_state(model, ctx)
        operator = None
    else:
        raise ParseError(f"unknown model type {kind!r}")

    gap = float(gap) if gap is not None else None
    scale_info = operator.scale_info if operator is not None else (0.0, 1.0)
    initial = _initial_energy(run_state, operator)
    summary = {
        "model": kind,
        "seed": ctx.seed,
        "projection_probability": projection_prob,
        "initial_energy": initial,
        "gap": gap,
        "runs": {},
    }

    if "baselines" in config:
        base_cfg = config["baselines"] or {}
        n_steps = int(base_cfg.get("n_steps", 7))
        total_time = (
            float(base_cfg["total_time"])
            if "total_time" in base_cfg
            else float(base_cfg.get("budget_gap_units", 1.0)) * math.pi / gap
        )
        seeds = range(int(base_cfg.get("gaussian_seeds", 100)))
        schedules = {
            "constant": constant_schedule(n_steps, total_time),
            "exponential": exponential_schedule(n_steps, total_time, math.sqrt(2.0)),
        }
        for label, sched in schedules.items():
            records, _, extinct = _run_trajectory(run_state, sched, operator)
            _trajectory_files(ctx, label, records, initial, projection_prob, gap, scale_info)
            summary["runs"][label] = {
                "final_energy": records[-1][2] if records else initial,
                "final_probability": records[-1][4] * projection_prob if records else projection_prob,
                "extinct": extinct,
            }

        def one_gaussian(s):
            sched = gaussian_schedule(n_steps, total_time, s)
            records, _, extinct = _run_trajectory(run_state, sched, operator)
            return s, records, extinct

        gaussian_runs = _thread_map(one_gaussian, seeds)
        finals = [
            (records[-1][2], records[-1][4])
            for _, records, extinct in gaussian_runs
            if records and not extinct
        ]
        per_seed_rows = [
            (str(s), records[-1][1], records[-1][2], records[-1][4] * projection_prob)
            for s, records, extinct in gaussian_runs
            if records and not extinct
        ]
        ctx.emit_csv(
            "gaussian_per_seed.csv",
            ("seed", "time", "energy", "cum_prob"),
            per_seed_rows,
        )
        if finals:
            arr = np.array(finals)
            _, records, _ = gaussian_runs[0]
            _trajectory_files(ctx, "gaussian_seed0", records, initial, projection_prob, gap, scale_info)
            summary["runs"]["gaussian"] = {
                "final_energy": float(arr[:, 0].mean()),
                "final_probability": float(arr[:, 1].mean()) * projection_prob,
                "ensemble_size": len(finals),
            }
        opt_cfg = base_cfg.get("optimize", {})
        if opt_cfg.get("enabled", True) and gap is not None:
            pseudo = PseudoSpectrumConfig(
                gap=gap,
                n_states=int(opt_cfg.get("n_states", 1000)),
                n_ground=int(opt_cfg.get("n_ground", 50)),
                jitter_seed=ctx.seed,
            )
            for label, allow in (("optimized_times", False), ("optimized_times_phases", True)):
                result = optimize_schedule(
                    OptimizationConfig(
                        n_measurements=int(opt_cfg.get("n_measurements", 6)),
                        total_time_budget=total_time,
                        allow_phases=allow,
                        restarts=int(opt_cfg.get("restarts", 16)),
                        seed=ctx.seed,
                    ),
                    pseudo,
                )
                records, _, extinct = _run_trajectory(run_state, result.schedule, operator)
                _trajectory_files(ctx, label, records, initial, projection_prob, gap, scale_info)
                summary["runs"][label] = {
                    "final_energy": records[-1][2] if records else initial,
                    "final_probability": records[-1][4] * projection_prob if records else projection_prob,
                    "f0": result.f_at_zero,
                    "objective": result.objective_value,
                    "extinct": extinct,
                }
    else:
        schedule = _resolve_schedule(config, ctx.seed, ctx)
        if len(schedule) == 0:
            _trajectory_files(ctx, "single", [], initial, projection_prob, gap, scale_info)
            summary["runs"]["single"] = {"final_energy": initial, "final_probability": projection_prob}
        else:
            records, _, extinct = _run_trajectory(run_state, schedule, operator)
            _trajectory_files(ctx, schedule.label, records, initial, projection_prob, gap, scale_info)
            summary["runs"][schedule.label] = {
                "final_energy": records[-1][2] if records else initial,
                "final_probability": records[-1][4] * projection_prob if records else projection_prob,
                "extinct": extinct,
            }
            if extinct:
                ctx.notes["extinct"] = True

    ctx.emit_json("summary.json", summary)
    ctx.finish()
    return EXIT_OK


def cmd_optimize(config: dict, ctx: RunContext) -> int:
    model = _require(config, "model")
    if model.get("type") != "pseudo_spectrum":
        raise ParseError("optimize needs a pseudo_spectrum model")
    pseudo = _model_pseudo(model)
    doc = config.get("optimize", {})
    opt = OptimizationConfig(
        n_measurements=int(doc.get("n_measurements", 6)),
        total_time_budget=_optimizer_budget(doc, pseudo.gap),
        allow_phases=bool(doc.get("allow_phases", True)),
        restarts=int(doc.get("restarts", 32)),
        convergence_tol=float(doc.get("convergence_tol", 1e-8)),
        seed=int(doc.get("seed", ctx.seed)),
    )
    result = optimize_schedule(opt, pseudo)
    ctx.notes["converged"] = result.converged

    path = ctx.outdir / "schedule.json"
    save_schedule(
        result.schedule,
        path,
        metadata={
            "objective": result.objective_value,
            "f0": result.f_at_zero,
            "seed": opt.seed,
            "config": {
                "n_measurements": opt.n_measurements,
                "total_time_budget": opt.total_time_budget,
                "allow_phases": opt.allow_phases,
                "restarts": opt.restarts,
                "gap": pseudo.gap,
                "overlap2": pseudo.overlap2,
                "phase_bound": result.metadata["phase_bound"],
            },
        },
    )
    ctx.files.append("schedule.json")
    ctx.emit_csv(
        "times_phases.csv",
        ("index", "time", "phase"),
        [(str(i), t, d) for i, (t, d) in enumerate(result.schedule.steps)],
    )
    ctx.emit_json(
        "summary.json",
        {
            "objective": result.objective_value,
            "f0": result.f_at_zero,
            "iterations": result.iterations,
            "converged": result.converged,
            "total_time": result.schedule.total_time,
            "seed": opt.seed,
        },
    )
    ctx.finish()
    return EXIT_OK


def cmd_spectral_replay(config: dict, ctx: RunContext) -> int:
    model = _require(config, "model")
    if model.get("type") != "spectral_file":
        raise ParseError("spectral-replay needs a spectral_file model")
    state = _model_spectral_state(model, ctx)
    target_shift = float(config.get("target_shift", 0.0))
    if target_shift != 0.0:
        state = shift_target(state, target_shift)
    schedule = _resolve_schedule(config, ctx.seed, ctx)

    initial_groups = group_degenerate(state)
    initial = state.energy_expectation()
    if len(schedule) == 0:
        records, final_state, extinct = [], state, False
    else:
        records, final_state, extinct = _run_trajectory(state, schedule)
    _trajectory_files(ctx, "replay", records, initial, 1.0, config.get("gap"), (0.0, 1.0))

    final_groups = group_degenerate(final_state)
    by_energy = {round(e, 12): (p, c) for e, p, c in final_groups}
    rows = []
    for e, p0, count in initial_groups:
        p1 = by_energy.get(round(e, 12), (0.0, count))[0]
        rows.append((e, p0, str(count), p1))
    ctx.emit_csv(
        "amplitudes.csv", ("energy", "prob_initial", "multiplicity", "prob_final"), rows
    )
    ctx.emit_json(
        "summary.json",
        {
            "target_shift": target_shift,
            "initial_energy": initial,
            "final_energy": records[-1][2] if records else initial,
            "final_probability": records[-1][4] if records else 1.0,
            "extinct": extinct,
            "zero_energy_population": final_state.population(0.0),
            "seed": ctx.seed,
        },
    )
    ctx.finish()
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

COMMANDS = {
    "filter-curve": cmd_filter_curve,
    "j2-project": cmd_j2_project,
    "energy-run": cmd_energy_run,
    "optimize": cmd_optimize,
    "spectral-replay": cmd_spectral_replay,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="projfilter",
        description="Projection-filter state preparation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="JSON experiment config")
        cmd.add_argument("--seed", type=int, default=None, help="override config seed")
        cmd.add_argument("--out", default=None, help="override output directory")
        cmd.add_argument("--heavy", action="store_true", help="allow heavy dense work")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        if args.heavy:
            config["heavy"] = True
        if args.out is not None:
            config["output_dir"] = args.out
        seed = int(config.get("seed", 0))
        outdir = Path(config.get("output_dir", "out"))
        ctx = RunContext(args.command, config, outdir, seed)
        return COMMANDS[args.command](config, ctx)
    except (ParseError, CapacityError, KeyError, TypeError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, ExtinctionError, StructureError, DependencyError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
