"""16-spin lattice checks beyond the acceptance gate (run with --heavy)."""

import json
import math

import numpy as np
import pytest

from projfilter import (
    OptimizationConfig,
    PseudoSpectrumConfig,
    SpinLatticeSpec,
    build_heisenberg,
    build_total_spin_squared,
    expectation,
    extremal_eigenvalues,
    halving_schedule,
    jz_sector,
    neel_state,
    optimize_schedule,
    run_postselected,
    run_sampled,
    scale_and_shift,
    sector_restrict,
    sector_restrict_state,
)
from projfilter.cli import main

pytestmark = pytest.mark.heavy


@pytest.fixture(scope="module")
def projected_4x4():
    spec = SpinLatticeSpec(4, 4, periodic=True)
    sector = jz_sector(16, 0.0)
    hamiltonian = sector_restrict(build_heisenberg(spec), sector)
    spin2 = sector_restrict(build_total_spin_squared(16), sector)
    neel = sector_restrict_state(neel_state(spec), sector)
    projection = run_postselected(neel, halving_schedule(math.pi / 4.0, 3), spin2)
    return hamiltonian, spin2, neel, projection


def test_sampled_acceptance_matches_eleven_percent(projected_4x4):
    _, spin2, neel, projection = projected_4x4
    sched = halving_schedule(math.pi / 4.0, 3)
    probs = projection.step_probs
    successes = 0
    attempts = 0
    seed = 0
    while attempts < 10_000:
        record = run_sampled(neel, sched, seed, spin2, step_probs=probs, max_attempts=1000)
        attempts += len(record.outcomes)
        successes += record.success
        seed += 1
    acceptance = successes / attempts
    assert abs(acceptance - 0.11) <= 0.01


def test_energy_filter_after_projection_reaches_ground(projected_4x4):
    hamiltonian, _, _, projection = projected_4x4
    e_min, e_max = extremal_eigenvalues(hamiltonian, tolerance=1e-10)
    scaled = scale_and_shift(hamiltonian, e_min, e_min, e_max)
    pseudo = PseudoSpectrumConfig(gap=0.15, n_states=1000, n_ground=50, jitter_seed=11)
    result = optimize_schedule(
        OptimizationConfig(6, math.pi / 0.15, allow_phases=True, restarts=8, seed=5),
        pseudo,
    )
    traj = run_postselected(projection.final_state, result.schedule, scaled)
    assert traj.final_energy < 0.01
    assert traj.final_probability > 0.5


def test_baseline_table_on_projected_state(projected_4x4):
    from projfilter import compare_baselines

    hamiltonian, _, _, projection = projected_4x4
    e_min, e_max = extremal_eigenvalues(hamiltonian, tolerance=1e-10)
    scaled = scale_and_shift(hamiltonian, e_min, e_min, e_max)
    rows = compare_baselines(
        projection.final_state,
        math.pi / 0.15,
        7,
        seeds=range(5),
        operator=scaled,
        gap=0.15,
        optimize_restarts=8,
        opt_seed=5,
    )
    by_label = {row.label: row.final_energy for row in rows}
    best = by_label["optimized_times_phases"]
    assert all(best <= e + 1e-12 for e in by_label.values())
    assert by_label["constant"] == max(by_label.values())


def test_cli_j2_project_4x4(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "model": {"type": "lattice", "lx": 4, "ly": 4, "periodic": True},
                "state": "neel",
                "emit_amplitudes": False,  # the 12870^2 dense pass is optional
                "output_dir": str(tmp_path / "out"),
            }
        ),
        encoding="utf-8",
    )
    assert main(["j2-project", "--config", str(cfg), "--heavy"]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["sector_dimension"] == 12870
    assert abs(summary["acceptance"] - 0.11) <= 0.01
    assert abs(summary["initial_scaled_energy"] - 0.17) <= 0.01
    assert abs(summary["final_scaled_energy"] - 0.06) <= 0.01
    assert abs(summary["final_j2"]) < 1e-9
