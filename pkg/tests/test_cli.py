"""Command layer: exit codes, artifacts, manifests, determinism."""

import json
import subprocess
import sys

import numpy as np
import pytest

from investlearn.cli import main
from investlearn.config import load_config
from investlearn.discrete import ladder_from_spec, save_ladder
from investlearn.model import ConfigError, HyperbolicGamma, ModelParams
from investlearn.boundary import solve_boundary
from investlearn.simulate import SimConfig, sample_trajectory, save_trajectory

BASE = {
    "schema_version": 1,
    "model": {"r": 0.1, "k": 0.5},
    "rate": {"family": "linear_noise", "C": 0.25, "D": 0.9},
}

MANIFEST_KEYS = {
    "tool", "version", "command", "config_hash", "seed",
    "outputs", "checks", "wall_clock_seconds",
}


def write_cfg(directory, doc, name="cfg.json"):
    p = directory / name
    p.write_text(json.dumps(doc))
    return p


def read_manifest(out_dir):
    doc = json.loads((out_dir / "manifest.json").read_text())
    assert set(doc) == MANIFEST_KEYS
    return doc


def nonmono_rate():
    u = np.linspace(0.0, 1.0, 1001)
    rho2 = 1.0 / (4.0 * (1.0 - 0.1 * u - 0.8 * u * u))
    return {"family": "tabulated", "rho2": [float(v) for v in rho2]}


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    # one fine-grid solve shared by the verify tests
    d = tmp_path_factory.mktemp("solved")
    cfg = write_cfg(d, BASE)
    out = d / "out"
    assert main(["solve", "--config", str(cfg), "--out", str(out),
                 "--grid", "20001", "--quiet"]) == 0
    return out


def test_solve_outputs_and_manifest(tmp_path):
    cfg = write_cfg(tmp_path, {**BASE, "grid_size": 501})
    out = tmp_path / "out"
    rc = main(["solve", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 0
    for name in ("boundary.csv", "boundary.json", "conditions.json", "manifest.json"):
        assert (out / name).exists()
    man = read_manifest(out)
    assert man["tool"] == "investlearn"
    assert man["command"] == "solve"
    assert man["outputs"] == sorted(man["outputs"])
    assert man["config_hash"].startswith("sha256:")
    assert all(man["checks"].values())
    cond = json.loads((out / "conditions.json").read_text())
    assert cond["monotone"] is True
    assert cond["conditions"]["route"] == "boundary_above_k"


def test_solve_missing_k_exits_2_without_output(tmp_path):
    doc = {**BASE, "model": {"r": 0.1}}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["solve", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 2
    assert not out.exists()


def test_solve_nonmonotone_reports_flag(tmp_path):
    doc = {**BASE, "rate": nonmono_rate()}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["solve", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 0
    man = read_manifest(out)
    assert man["checks"]["monotone"] is False
    cond = json.loads((out / "conditions.json").read_text())
    assert cond["monotone"] is False


def test_verify_clean_curve_passes(tmp_path, solved):
    doc = {**BASE, "boundary_csv": str(solved / "boundary.csv")}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["verify", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 0
    rep = json.loads((out / "verify_report.json").read_text())
    assert rep["passed"] is True
    assert rep["route"] == "boundary_above_k"
    assert (out / "surface.csv").exists()
    man = read_manifest(out)
    assert all(man["checks"].values())


def _copy_curve(src_dir, dst_dir):
    dst_dir.mkdir()
    for name in ("boundary.csv", "boundary.json"):
        (dst_dir / name).write_bytes((src_dir / name).read_bytes())


def test_verify_spike_tamper_fails_monotone(tmp_path, solved):
    work = tmp_path / "curve"
    _copy_curve(solved, work)
    lines = (work / "boundary.csv").read_text().splitlines()
    u, b = lines[10000].split(",")
    lines[10000] = f"{u},{float(b) * 1.01!r}"
    (work / "boundary.csv").write_text("\n".join(lines) + "\n")

    doc = {**BASE, "boundary_csv": str(work / "boundary.csv")}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["verify", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 1
    man = read_manifest(out)
    assert man["checks"]["monotone"] is False
    rep = json.loads((out / "verify_report.json").read_text())
    assert rep["passed"] is False


def test_verify_scaled_tamper_fails_diagnostics(tmp_path, solved):
    # a uniform shrink keeps the curve monotone and inside the strip, so
    # only the smooth-fit and pasting diagnostics can catch it
    work = tmp_path / "curve"
    _copy_curve(solved, work)
    lines = (work / "boundary.csv").read_text().splitlines()
    for i in range(1, len(lines)):
        u, b = lines[i].split(",")
        lines[i] = f"{u},{float(b) * 0.999!r}"
    (work / "boundary.csv").write_text("\n".join(lines) + "\n")

    doc = {**BASE, "boundary_csv": str(work / "boundary.csv")}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["verify", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 1
    man = read_manifest(out)
    # the curve cleared the monotone gate and failed inside the diagnostics
    assert "monotone" not in man["checks"]
    assert man["checks"]["all"] is False
    assert man["checks"]["smooth_fit"] is False


def test_verify_missing_csv_exits_2(tmp_path):
    doc = {**BASE, "boundary_csv": str(tmp_path / "nowhere.csv")}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["verify", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 2


def test_simulate_writes_estimates(tmp_path):
    doc = {
        **BASE,
        "sim": {"start_u": 0.0, "start_pi": 0.5, "dt": 0.01, "horizon": 60.0,
                "n_paths": 400, "seed": 3, "write_paths": True,
                "trajectory_path": 2},
    }
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["simulate", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 0
    est = json.loads((out / "estimates.json").read_text())
    for key in ("reflecting", "stop_at_c", "full_now", "value_hat",
                "stop_at_c_reference", "abs_error_vs_value_hat",
                "diff_vs_stop_at_c", "diff_vs_full_now"):
        assert key in est
    assert est["reflecting"]["n_paths"] == 400
    assert (out / "trajectory.csv").exists()
    assert (out / "paths.csv").exists()
    man = read_manifest(out)
    assert man["seed"] == 3
    assert "paths.csv" in man["outputs"]
    assert all(man["checks"].values())


def test_simulate_nonmonotone_exits_1(tmp_path):
    doc = {
        **BASE,
        "rate": nonmono_rate(),
        "surface_grid_size": 2001,
        "sim": {"n_paths": 10, "horizon": 1.0},
    }
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["simulate", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 1
    assert not (out / "estimates.json").exists()
    man = read_manifest(out)
    assert man["checks"] == {"monotone": False}


def test_discrete_from_levels(tmp_path):
    doc = {**BASE, "rate": {"family": "hyperbolic_gamma", "A": 1.25, "beta": 0.2},
           "ladder": {"n_levels": 5}}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["discrete", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 0
    lines = (out / "ladder.csv").read_text().strip().splitlines()
    assert len(lines) == 7
    rep = json.loads((out / "discrete_report.json").read_text())
    assert rep["passed"] is True
    man = read_manifest(out)
    assert all(man["checks"].values())


def test_discrete_from_gamma_list(tmp_path):
    doc = {**BASE, "ladder": {"gamma": [3.0, 2.7, 2.4, 2.1, 1.8, 1.5]}}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["discrete", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 0
    rep = json.loads((out / "discrete_report.json").read_text())
    assert rep["monotone"]["all_hold"] is False


def test_discrete_zero_levels(tmp_path):
    doc = {**BASE, "rate": {"family": "hyperbolic_gamma", "A": 1.25, "beta": 0.2},
           "ladder": {"n_levels": 0}}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["discrete", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 0
    lines = (out / "ladder.csv").read_text().strip().splitlines()
    assert len(lines) == 2


def test_discrete_increasing_gamma_exits_2(tmp_path):
    doc = {**BASE, "ladder": {"gamma": [1.5, 2.0]}}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["discrete", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 2


def test_discrete_without_ladder_exits_2(tmp_path):
    cfg = write_cfg(tmp_path, BASE)
    out = tmp_path / "out"
    rc = main(["discrete", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 2


def test_compare_writes_table(tmp_path):
    doc = {**BASE, "rate": {"family": "hyperbolic_gamma", "A": 1.25, "beta": 0.2},
           "ladder": {"n_levels": 5}, "grid_size": 501}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["compare", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 0
    lines = (out / "compare.csv").read_text().strip().splitlines()
    assert lines[0] == "n,u_n,b_ladder,b_continuous,difference"
    assert len(lines) == 7


@pytest.fixture()
def plot_inputs(tmp_path):
    params = ModelParams(r=0.1, k=0.5)
    hyp = HyperbolicGamma(A=1.25, beta=0.2)
    cfg = write_cfg(tmp_path, {**BASE, "grid_size": 501})
    src = tmp_path / "src"
    assert main(["solve", "--config", str(cfg), "--out", str(src), "--quiet"]) == 0
    curve = solve_boundary(hyp, params, grid_size=501)
    traj = sample_trajectory(curve, SimConfig(n_paths=1, horizon=1.0, dt=0.01, seed=4))
    save_trajectory(traj, src / "trajectory.csv")
    save_ladder(ladder_from_spec(hyp, params, 5), src / "ladder.csv")
    return src


def test_plot_renders_svg(tmp_path, plot_inputs):
    doc = {
        **BASE,
        "plot": {
            "boundary": str(plot_inputs / "boundary.csv"),
            "trajectory": str(plot_inputs / "trajectory.csv"),
            "ladder": str(plot_inputs / "ladder.csv"),
        },
    }
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["plot", "--config", str(cfg), "--out", str(out), "--quiet"])
    assert rc == 0
    for name in ("boundary.svg", "trajectory.svg", "ladder.svg"):
        text = (out / name).read_text()
        assert text.startswith("<svg")
    man = read_manifest(out)
    assert man["outputs"] == ["boundary.svg", "ladder.svg", "trajectory.svg"]


@pytest.mark.parametrize("content", ["", "u,b\n", "u,b\n0.0,oops\n"])
def test_plot_bad_csv_exits_2(tmp_path, content):
    bad = tmp_path / "bad.csv"
    bad.write_text(content)
    doc = {**BASE, "plot": {"boundary": str(bad)}}
    cfg = write_cfg(tmp_path, doc)
    rc = main(["plot", "--config", str(cfg), "--out", str(tmp_path / "out"), "--quiet"])
    assert rc == 2


def test_plot_missing_csv_exits_2(tmp_path):
    doc = {**BASE, "plot": {"boundary": str(tmp_path / "gone.csv")}}
    cfg = write_cfg(tmp_path, doc)
    rc = main(["plot", "--config", str(cfg), "--out", str(tmp_path / "out"), "--quiet"])
    assert rc == 2


def test_plot_without_inputs_exits_2(tmp_path):
    cfg = write_cfg(tmp_path, BASE)
    rc = main(["plot", "--config", str(cfg), "--out", str(tmp_path / "out"), "--quiet"])
    assert rc == 2


def strip_clock(out_dir):
    man = json.loads((out_dir / "manifest.json").read_text())
    man.pop("wall_clock_seconds")
    return man


def test_repeat_runs_are_bit_identical(tmp_path):
    doc = {**BASE, "grid_size": 501,
           "rate": {"family": "hyperbolic_gamma", "A": 1.25, "beta": 0.2},
           "ladder": {"n_levels": 5}}
    cfg = write_cfg(tmp_path, doc)
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["solve", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
        assert main(["discrete", "--config", str(cfg), "--out",
                     str(out / "disc"), "--quiet"]) == 0
    for name in ("boundary.csv", "boundary.json", "conditions.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    for name in ("ladder.csv", "discrete_report.json"):
        assert (a / "disc" / name).read_bytes() == (b / "disc" / name).read_bytes()
    assert strip_clock(a) == strip_clock(b)
    assert strip_clock(a / "disc") == strip_clock(b / "disc")


def test_overrides_change_config_hash(tmp_path):
    cfg = write_cfg(tmp_path, BASE)
    plain = load_config(cfg)
    seeded = load_config(cfg, seed=7)
    gridded = load_config(cfg, grid=501)
    assert plain.config_hash != seeded.config_hash
    assert plain.config_hash != gridded.config_hash
    assert seeded.sim.seed == 7
    assert gridded.grid_size == 501
    assert gridded.surface_grid_size == 501


@pytest.mark.parametrize(
    "doc",
    [
        {**BASE, "bogus": 1},
        {**BASE, "schema_version": 2},
        {**BASE, "sim": {"bogus": 1}},
        {**BASE, "sim": {"n_paths": 0}},
        {**BASE, "sim": {"trajectory_path": -1}},
        {**BASE, "ladder": {"n_levels": 2, "gamma": [2.0, 1.5]}},
        {**BASE, "ladder": {"gamma": []}},
        {**BASE, "plot": {"bogus": "x.csv"}},
        {**BASE, "rate": {"family": "warp"}},
        {**BASE, "model": {"r": 0.1, "k": 0.5, "mu0": 0.0}},
        {**BASE, "grid_size": 2},
        {**BASE, "out_dir": 7},
    ],
)
def test_bad_documents_rejected(tmp_path, doc):
    cfg = write_cfg(tmp_path, doc)
    with pytest.raises(ConfigError):
        load_config(cfg)
    rc = main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == 2


def test_invalid_json_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    rc = main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == 2


def test_missing_config_exits_2(tmp_path):
    rc = main(["solve", "--config", str(tmp_path / "gone.json"),
               "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == 2


def test_no_output_dir_exits_2(tmp_path):
    cfg = write_cfg(tmp_path, BASE)
    rc = main(["solve", "--config", str(cfg), "--quiet"])
    assert rc == 2


def test_out_dir_from_config(tmp_path):
    doc = {**BASE, "grid_size": 501, "out_dir": "runout"}
    cfg = write_cfg(tmp_path, doc)
    rc = main(["solve", "--config", str(cfg), "--quiet"])
    assert rc == 0
    assert (tmp_path / "runout" / "boundary.csv").exists()


def test_quiet_suppresses_output(tmp_path, capsys):
    doc = {**BASE, "grid_size": 501}
    cfg = write_cfg(tmp_path, doc)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "a"),
                 "--quiet"]) == 0
    assert capsys.readouterr().out == ""
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert "monotone=True" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    doc = {**BASE, "grid_size": 501}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "out"
    proc = subprocess.run(
        [sys.executable, "-m", "investlearn.cli", "solve",
         "--config", str(cfg), "--out", str(out), "--quiet"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "manifest.json").exists()
