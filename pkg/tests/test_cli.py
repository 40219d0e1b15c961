import json

import pandas as pd
import pytest

from beamforge import run_cli
from metrics import REPORT_COLUMNS


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv("BEAMFORGE_THREADS", raising=False)
    monkeypatch.delenv("BEAMFORGE_OUTPUT_DIR", raising=False)


def _write_config(tmp_path, name="cfg.json", **overrides):
    raw = {
        "geometry": {"kind": "ula", "m": 8, "spacing_wl": 0.5},
        "grid": {"size": 64},
        "architecture": {"variant": "fully_connected", "m_rfe": 2, "k": 4},
        "power": {"kind": "sum_power"},
        "beams": [
            {"id": "left", "center": -0.7853981633974483, "width": 1.5707963267948966, "beta_db": 2.0},
            {"id": "right", "center": 0.7853981633974483, "width": 1.5707963267948966, "beta_db": 2.0},
        ],
        "pairs": [[0, 1]],
        "solver": {"n_starts": 2, "max_iters": 80, "log_every": 1000},
    }
    raw.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def test_synth_is_byte_identical(tmp_path):
    cfg = _write_config(tmp_path)
    for name in ("one", "two"):
        assert run_cli(["--quiet", "synth", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / f"{name}.json")]) == 0
    assert (tmp_path / "one.json").read_bytes() == (tmp_path / "two.json").read_bytes()
    assert (tmp_path / "one_result.json").read_bytes() == (tmp_path / "two_result.json").read_bytes()

    payload = json.loads((tmp_path / "one.json").read_text())
    assert payload["seed"] == 7
    assert [b["id"] for b in payload["beams"]] == ["left", "right"]
    summary = json.loads((tmp_path / "one_result.json").read_text())
    assert len(summary["start_objectives"]) == 2


def test_eval_writes_one_csv_per_beam(tmp_path):
    cfg = _write_config(tmp_path)
    beam = tmp_path / "beam.json"
    assert run_cli(["--quiet", "synth", "--config", str(cfg), "--out", str(beam)]) == 0
    assert run_cli(["--quiet", "eval", "--beam", str(beam), "--grid", "512", "--out", str(tmp_path / "pat.csv"), "--dbr"]) == 0
    for bid in ("left", "right"):
        df = pd.read_csv(tmp_path / f"pat_{bid}.csv")
        assert len(df) == 512
        assert df["gain_db"].max() == 0.0


def test_metrics_and_compare(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    opt, base = tmp_path / "opt.json", tmp_path / "base.json"
    assert run_cli(["--quiet", "synth", "--config", str(cfg), "--out", str(opt)]) == 0
    assert run_cli(["--quiet", "baseline", "--config", str(cfg), "--out", str(base)]) == 0
    assert json.loads(base.read_text())["method"] == "baseline-approx"

    report = tmp_path / "report.csv"
    assert run_cli(["--quiet", "metrics", "--beams", str(opt), "--spec", str(cfg), "--out", str(report)]) == 0
    df = pd.read_csv(report)
    assert list(df.columns) == REPORT_COLUMNS
    assert df["beam_id"].tolist() == ["left", "right"]
    assert df["overlap_pct"].notna().all()
    assert "avg_gain_db" in capsys.readouterr().out

    cmp_path = tmp_path / "cmp.csv"
    assert run_cli(["--quiet", "compare", "--a", str(opt), "--b", str(base), "--spec", str(cfg), "--out", str(cmp_path)]) == 0
    cmp = pd.read_csv(cmp_path, keep_default_na=False)
    assert set(cmp["better"]) <= {"a", "b", "tie", ""}
    assert len(cmp) == 2 * (len(REPORT_COLUMNS) - 1)


def test_metrics_from_exported_patterns(tmp_path):
    cfg = _write_config(tmp_path)
    beam = tmp_path / "beam.json"
    assert run_cli(["--quiet", "synth", "--config", str(cfg), "--out", str(beam)]) == 0
    assert run_cli(["--quiet", "eval", "--beam", str(beam), "--grid", "64", "--out", str(tmp_path / "pat.csv")]) == 0

    from_beams, from_patterns = tmp_path / "beams.csv", tmp_path / "patterns.csv"
    assert run_cli(["--quiet", "metrics", "--beams", str(beam), "--spec", str(cfg), "--out", str(from_beams)]) == 0
    code = run_cli([
        "--quiet", "metrics", "--patterns", str(tmp_path / "pat_left.csv"), str(tmp_path / "pat_right.csv"),
        "--spec", str(cfg), "--out", str(from_patterns),
    ])
    assert code == 0
    a, b = pd.read_csv(from_beams), pd.read_csv(from_patterns)
    assert b["beam_id"].tolist() == ["pat_left", "pat_right"]
    for col in REPORT_COLUMNS[1:]:
        assert a[col].to_numpy() == pytest.approx(b[col].to_numpy(), abs=1e-6)


def test_metrics_patterns_on_other_grid_exit_1(tmp_path):
    cfg = _write_config(tmp_path)
    beam = tmp_path / "beam.json"
    assert run_cli(["--quiet", "synth", "--config", str(cfg), "--out", str(beam)]) == 0
    assert run_cli(["--quiet", "eval", "--beam", str(beam), "--grid", "128", "--out", str(tmp_path / "pat.csv")]) == 0
    code = run_cli([
        "--quiet", "metrics", "--patterns", str(tmp_path / "pat_left.csv"), str(tmp_path / "pat_right.csv"),
        "--spec", str(cfg),
    ])
    assert code == 1
    assert run_cli(["--quiet", "metrics", "--beams", str(beam), "--patterns", "x.csv", "--spec", str(cfg)]) == 1


def test_compare_saved_reports(tmp_path):
    cfg = _write_config(tmp_path)
    opt, base = tmp_path / "opt.json", tmp_path / "base.json"
    assert run_cli(["--quiet", "synth", "--config", str(cfg), "--out", str(opt)]) == 0
    assert run_cli(["--quiet", "baseline", "--config", str(cfg), "--out", str(base)]) == 0
    for cb, name in ((opt, "rep_a.csv"), (base, "rep_b.csv")):
        assert run_cli(["--quiet", "metrics", "--beams", str(cb), "--spec", str(cfg), "--out", str(tmp_path / name)]) == 0

    direct, saved = tmp_path / "direct.csv", tmp_path / "saved.csv"
    assert run_cli(["--quiet", "compare", "--a", str(opt), "--b", str(base), "--spec", str(cfg), "--out", str(direct)]) == 0
    # no --spec needed for saved reports
    assert run_cli(["--quiet", "compare", "--a", str(tmp_path / "rep_a.csv"), "--b", str(tmp_path / "rep_b.csv"), "--out", str(saved)]) == 0

    d = pd.read_csv(direct, keep_default_na=False)
    s = pd.read_csv(saved, keep_default_na=False)
    assert d["better"].tolist() == s["better"].tolist()
    assert d["metric"].tolist() == s["metric"].tolist()

    # codebooks still need a config
    assert run_cli(["--quiet", "compare", "--a", str(opt), "--b", str(base)]) == 1


def test_sweep_writes_jobs_and_summary(tmp_path):
    cfg = _write_config(tmp_path)
    out_dir = tmp_path / "sweep"
    code = run_cli([
        "--quiet", "sweep", "--config", str(cfg),
        "--param", "solver.seed=0,1", "--param", "architecture.k=0,4",
        "--out-dir", str(out_dir), "--max-iters", "40",
    ])
    assert code == 0
    assert sorted(p.name for p in out_dir.glob("job_*.json")) == [f"job_{i:03d}.json" for i in range(4)]
    summary = pd.read_csv(out_dir / "sweep_summary.csv")
    assert len(summary) == 8  # two beams per job
    assert {"solver.seed", "architecture.k", "objective"} <= set(summary.columns)


def test_output_dir_from_environment(tmp_path, monkeypatch):
    cfg = _write_config(tmp_path)
    monkeypatch.setenv("BEAMFORGE_OUTPUT_DIR", str(tmp_path / "env_out"))
    assert run_cli(["--quiet", "synth", "--config", str(cfg), "--out", "beam.json", "--starts", "1"]) == 0
    assert (tmp_path / "env_out" / "beam.json").exists()


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["synth", "--config"],
    ["synth", "--config", "cfg.json", "--bogus"],
])
def test_usage_errors_exit_1(argv, capsys):
    assert run_cli(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_validation_errors_exit_1(tmp_path):
    assert run_cli(["--quiet", "synth", "--config", str(tmp_path / "missing.json")]) == 1

    bad = _write_config(tmp_path, "bad.json", architecture={"variant": "sub_array", "m_rfe": 3})
    assert run_cli(["--quiet", "synth", "--config", str(bad)]) == 1

    k1 = _write_config(tmp_path, "k1.json", architecture={"variant": "fully_connected", "m_rfe": 2, "k": 1})
    assert run_cli(["--quiet", "synth", "--config", str(k1)]) == 1

    cfg = _write_config(tmp_path)
    assert run_cli(["--quiet", "synth", "--config", str(cfg), "--starts", "0"]) == 1


def test_unwritable_output_exits_2(tmp_path):
    cfg = _write_config(tmp_path)
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    code = run_cli(["--quiet", "synth", "--config", str(cfg), "--starts", "1", "--out", str(blocker / "beam.json")])
    assert code == 2


def test_help_exits_0():
    assert run_cli(["--help"]) == 0
