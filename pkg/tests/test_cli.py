"""End-to-end runs of every CLI subcommand against its wire formats."""

import csv
import hashlib
import json
import math

import numpy as np
import pytest

from projfilter import SpectralState, Schedule, filter_value, run_postselected
from projfilter.cli import main
from projfilter.filtering import save_spectral_state
from projfilter.util import sha256_file


def write_config(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_cli(command, config_path, *extra):
    return main([command, "--config", config_path, *extra])


# ---------------------------------------------------------------------------
# filter-curve
# ---------------------------------------------------------------------------


def test_filter_curve_halving_zero_pattern(tmp_path):
    js = np.arange(0, 17)
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "schedule": {"builder": "halving", "t1": math.pi / 4.0, "n_steps": 3},
            "grid": {"values": [float(j * (j + 1)) for j in js]},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("filter-curve", cfg) == 0
    rows = read_csv(tmp_path / "out" / "filter_curve.csv")
    assert len(rows) == len(js)
    by_energy = {float(r["energy"]): float(r["f"]) for r in rows}
    assert by_energy[0.0] == 1.0
    for j in range(1, 15):
        assert abs(by_energy[float(j * (j + 1))]) < 1e-12
    assert abs(by_energy[240.0]) == pytest.approx(1.0, abs=1e-12)


def test_filter_curve_empty_schedule_constant_one(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "schedule": {"builder": "custom", "steps": []},
            "grid": {"start": 0.0, "stop": 2.0, "points": 21, "zoom_points": 0},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("filter-curve", cfg) == 0
    rows = read_csv(tmp_path / "out" / "filter_curve.csv")
    assert all(float(r["f"]) == 1.0 for r in rows)


def test_filter_curve_optimized_peaks_at_zero(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "pseudo_spectrum", "gap": 0.15, "n_states": 1000,
                      "n_ground": 50, "jitter_seed": 11},
            "schedule": {"builder": "optimized", "n_measurements": 6, "restarts": 8,
                         "seed": 5},
            "grid": {"start": 0.0, "stop": 1.0, "points": 2001, "zoom_radius": 0.01,
                     "zoom_points": 101},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("filter-curve", cfg) == 0
    rows = read_csv(tmp_path / "out" / "filter_curve.csv")
    # non-zero phases tilt the filter, so compare over the physical domain
    f2 = {float(r["energy"]): float(r["f2"]) for r in rows if float(r["energy"]) >= 0.0}
    assert max(f2.values()) == f2[0.0]


# ---------------------------------------------------------------------------
# j2-project
# ---------------------------------------------------------------------------


def test_j2_project_singlet_start_accepts_fully(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "lattice", "lx": 1, "ly": 2, "periodic": False},
            "state": "ground",
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("j2-project", cfg) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["acceptance"] == pytest.approx(1.0, abs=1e-9)
    assert summary["sector_dimension"] == 2


def test_j2_project_chain_removes_j2(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "lattice", "lx": 1, "ly": 4, "periodic": True},
            "state": "neel",
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("j2-project", cfg) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert abs(summary["final_j2"]) < 1e-10
    assert 0.0 < summary["acceptance"] < 1.0
    rows = read_csv(tmp_path / "out" / "trajectory_j2.csv")
    assert [r["step"] for r in rows] == ["0", "1", "2", "3"]
    grouped = read_csv(tmp_path / "out" / "amplitudes.csv")
    total_initial = sum(float(r["prob_initial"]) for r in grouped)
    total_final = sum(float(r["prob_final"]) for r in grouped)
    assert total_initial == pytest.approx(1.0, abs=1e-9)
    assert total_final == pytest.approx(1.0, abs=1e-9)


def test_j2_project_reproducible_bytes(tmp_path):
    def one(outdir):
        cfg = write_config(
            tmp_path,
            f"cfg_{outdir}.json",
            {
                "model": {"type": "lattice", "lx": 2, "ly": 2, "periodic": True},
                "state": {"random_trial": {"seed": 7}},
                "seed": 3,
                "output_dir": str(tmp_path / outdir),
            },
        )
        assert run_cli("j2-project", cfg) == 0
        return {
            name: sha256_file(tmp_path / outdir / name)
            for name in ("trajectory_j2.csv", "amplitudes.csv", "amplitudes_states.csv")
        }

    assert one("a") == one("b")


def test_j2_project_capacity_without_heavy(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "lattice", "lx": 4, "ly": 4, "periodic": True},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("j2-project", cfg) == 2  # 12870 > 4096 needs --heavy


# ---------------------------------------------------------------------------
# energy-run
# ---------------------------------------------------------------------------


def test_energy_run_pseudo_single_schedule(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "pseudo_spectrum", "gap": 0.15, "n_states": 500,
                      "n_ground": 25, "jitter_seed": 2},
            "schedule": {"builder": "exponential", "n_steps": 7,
                         "total_time": math.pi / 0.15, "ratio": 1.4142135623730951},
            "gap": 0.15,
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("energy-run", cfg) == 0
    rows = read_csv(tmp_path / "out" / "trajectory_exponential.csv")
    assert float(rows[-1]["energy"]) < float(rows[0]["energy"])
    full = read_csv(tmp_path / "out" / "trajectory_exponential_full.csv")
    assert set(full[0]) == {
        "step", "time", "time_gap_units", "energy", "energy_unscaled",
        "step_prob", "cum_prob", "extinct",
    }
    last = full[-1]
    assert float(last["time_gap_units"]) == pytest.approx(
        float(last["time"]) * 0.15, rel=1e-12
    )


def test_energy_run_zero_length_schedule(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "pseudo_spectrum", "gap": 0.2, "n_states": 100,
                      "n_ground": 10, "jitter_seed": 1},
            "schedule": {"builder": "custom", "steps": []},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("energy-run", cfg) == 0
    rows = read_csv(tmp_path / "out" / "trajectory_single.csv")
    assert len(rows) == 1
    assert rows[0]["step"] == "0"


def test_energy_run_baselines_table(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "pseudo_spectrum", "gap": 0.15, "n_states": 400,
                      "n_ground": 20, "jitter_seed": 4},
            "baselines": {"n_steps": 7, "gaussian_seeds": 8,
                          "optimize": {"n_measurements": 6, "restarts": 4}},
            "gap": 0.15,
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("energy-run", cfg) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    labels = set(summary["runs"])
    assert labels == {
        "constant", "exponential", "gaussian", "optimized_times", "optimized_times_phases",
    }
    assert summary["runs"]["optimized_times_phases"]["final_energy"] <= (
        summary["runs"]["constant"]["final_energy"]
    )
    assert (tmp_path / "out" / "gaussian_per_seed.csv").exists()


def test_energy_run_lattice_with_projection(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "lattice", "lx": 1, "ly": 4, "periodic": True},
            "project_j2": True,
            "schedule": {"builder": "constant", "n_steps": 4, "total_time": 12.0},
            "gap": 0.2,
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("energy-run", cfg) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert 0.0 < summary["projection_probability"] <= 1.0
    rows = read_csv(tmp_path / "out" / "trajectory_constant.csv")
    # step-0 row carries the projection acceptance as its probability
    assert float(rows[0]["cum_prob"]) == pytest.approx(summary["projection_probability"])
    assert float(rows[-1]["energy"]) < float(rows[0]["energy"])


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------


def test_optimize_times_only_zero_phases(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "pseudo_spectrum", "gap": 0.15, "n_states": 500,
                      "n_ground": 25, "jitter_seed": 11},
            "optimize": {"n_measurements": 6, "allow_phases": False, "restarts": 4,
                         "seed": 5},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("optimize", cfg) == 0
    rows = read_csv(tmp_path / "out" / "times_phases.csv")
    assert all(float(r["phase"]) == 0.0 for r in rows)


def test_optimize_times_nearly_logarithmic(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "pseudo_spectrum", "gap": 0.15, "n_states": 1000,
                      "n_ground": 50, "jitter_seed": 11},
            "optimize": {"n_measurements": 6, "restarts": 8, "seed": 5},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("optimize", cfg) == 0
    rows = read_csv(tmp_path / "out" / "times_phases.csv")
    times = np.array([float(r["time"]) for r in rows])
    times = times[times > 1e-6 * times.sum()]  # collapsed steps carry no time
    assert np.all(np.diff(times) > 0)
    assert np.all(times[1:] / times[:-1] > 1.0)
    doc = json.loads((tmp_path / "out" / "schedule.json").read_text())
    assert doc["label"] == "optimized"
    assert {"objective", "f0", "seed", "config"} <= set(doc["metadata"])


def test_optimize_small_gap_shortest_phase_zero(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "pseudo_spectrum", "gap": 1e-4, "n_states": 500,
                      "n_ground": 25, "jitter_seed": 3},
            "optimize": {"n_measurements": 20, "budget_gap_units": 2.0,
                         "restarts": 4, "seed": 2},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("optimize", cfg) == 0
    rows = read_csv(tmp_path / "out" / "times_phases.csv")
    shortest = min(rows, key=lambda r: float(r["time"]))
    assert abs(float(shortest["phase"])) < 1e-3


# ---------------------------------------------------------------------------
# spectral-replay
# ---------------------------------------------------------------------------


def test_replay_single_level(tmp_path):
    state = SpectralState(np.array([0.0]), np.array([1.0]))
    spath = tmp_path / "state.json"
    save_spectral_state(state, spath)
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "spectral_file", "path": str(spath)},
            "schedule": {"builder": "constant", "n_steps": 3, "total_time": 2.0},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("spectral-replay", cfg) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["final_energy"] == pytest.approx(0.0, abs=1e-12)
    assert summary["final_probability"] == pytest.approx(1.0, abs=1e-12)


def test_replay_matches_direct_run(tmp_path):
    rng = np.random.Generator(np.random.Philox(21))
    energies = np.concatenate([np.zeros(3), rng.uniform(0.2, 1.0, 17)])
    amps = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    state = SpectralState(energies, amps)
    spath = tmp_path / "state.json"
    save_spectral_state(state, spath)
    sched = Schedule(np.array([1.0, 2.5, 4.0]), np.array([0.1, -0.2, 0.3]))
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "spectral_file", "path": str(spath)},
            "schedule": {"builder": "custom",
                         "steps": [[1.0, 0.1], [2.5, -0.2], [4.0, 0.3]]},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("spectral-replay", cfg) == 0
    rows = read_csv(tmp_path / "out" / "trajectory_replay.csv")
    traj = run_postselected(state, sched)
    assert float(rows[-1]["cum_prob"]) == pytest.approx(traj.final_probability, rel=1e-12)
    assert float(rows[-1]["energy"]) == pytest.approx(traj.final_energy, rel=1e-9, abs=1e-12)


def test_replay_shift_for_half_integer_spin(tmp_path):
    # levels at J(J+1) for J = 1/2, 3/2, 5/2; retarget J = 3/2 via shift 3.75
    state = SpectralState(
        np.array([0.75, 3.75, 8.75]), np.array([0.5, 0.7, 0.5])
    )
    spath = tmp_path / "state.json"
    save_spectral_state(state, spath)
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "spectral_file", "path": str(spath)},
            "target_shift": 3.75,
            "schedule": {"builder": "custom", "steps": [[0.0, 0.0]]},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("spectral-replay", cfg) == 0
    rows = read_csv(tmp_path / "out" / "amplitudes.csv")
    zero_rows = [r for r in rows if abs(float(r["energy"])) < 1e-12]
    assert len(zero_rows) == 1
    assert float(zero_rows[0]["prob_initial"]) == pytest.approx(0.49 / 0.99, abs=1e-9)


def test_replay_warns_on_unnormalized(tmp_path, capsys):
    spath = tmp_path / "state.json"
    spath.write_text(
        '{"energies": [0.0, 0.5], "amplitudes": [[1.0, 0.0], [1.0, 0.0]]}',
        encoding="utf-8",
    )
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "spectral_file", "path": str(spath)},
            "schedule": {"builder": "custom", "steps": [[1.0, 0.0]]},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("spectral-replay", cfg) == 0
    assert "renormalized" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# Manifest, overrides, exit codes
# ---------------------------------------------------------------------------


def test_manifest_hashes_verify(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "schedule": {"builder": "halving", "n_steps": 2},
            "grid": {"start": 0.0, "stop": 1.0, "points": 11, "zoom_points": 0},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("filter-curve", cfg) == 0
    manifest = json.loads((tmp_path / "out" / "run_manifest.json").read_text())
    assert manifest["version"]
    assert manifest["files"]
    for entry in manifest["files"]:
        digest = hashlib.sha256((tmp_path / "out" / entry["path"]).read_bytes()).hexdigest()
        assert digest == entry["sha256"]


def test_seed_and_out_overrides(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "pseudo_spectrum", "gap": 0.2, "n_states": 100,
                      "n_ground": 5, "jitter_seed": 1},
            "schedule": {"builder": "gaussian", "n_steps": 5, "total_time": 8.0},
            "output_dir": str(tmp_path / "ignored"),
        },
    )
    out = tmp_path / "override"
    assert run_cli("energy-run", cfg, "--seed", "17", "--out", str(out)) == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["seed"] == 17
    assert not (tmp_path / "ignored").exists()


def test_exit_code_on_missing_config(tmp_path):
    assert run_cli("filter-curve", str(tmp_path / "nope.json")) == 2


def test_exit_code_on_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{", encoding="utf-8")
    assert run_cli("filter-curve", str(path)) == 2


def test_exit_code_on_malformed_spectral_file(tmp_path):
    spath = tmp_path / "state.json"
    spath.write_text('{"energies": [0.0]}', encoding="utf-8")
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "model": {"type": "spectral_file", "path": str(spath)},
            "schedule": {"builder": "custom", "steps": [[1.0, 0.0]]},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("spectral-replay", cfg) == 2


def test_exit_code_on_numerical_failure(tmp_path, monkeypatch):
    from projfilter import cli as cli_module
    from projfilter.errors import ExtinctionError

    def doomed(config, ctx):
        raise ExtinctionError("post-selected branch annihilated")

    monkeypatch.setitem(cli_module.COMMANDS, "filter-curve", doomed)
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {"schedule": {"builder": "halving"}, "output_dir": str(tmp_path / "out")},
    )
    assert run_cli("filter-curve", cfg) == 3


def test_thread_env_does_not_change_results(tmp_path, monkeypatch):
    def run(outdir, threads):
        monkeypatch.setenv("PROJFILTER_THREADS", threads)
        cfg = write_config(
            tmp_path,
            f"c{outdir}.json",
            {
                "model": {"type": "pseudo_spectrum", "gap": 0.2, "n_states": 150,
                          "n_ground": 10, "jitter_seed": 2},
                "baselines": {"n_steps": 5, "gaussian_seeds": 6,
                              "optimize": {"enabled": False}},
                "gap": 0.2,
                "output_dir": str(tmp_path / outdir),
            },
        )
        assert run_cli("energy-run", cfg) == 0
        return sha256_file(tmp_path / outdir / "gaussian_per_seed.csv")

    assert run("t1", "1") == run("t2", "2")


def test_exit_code_on_bad_builder(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "schedule": {"builder": "wavelet"},
            "output_dir": str(tmp_path / "out"),
        },
    )
    assert run_cli("filter-curve", cfg) == 2
