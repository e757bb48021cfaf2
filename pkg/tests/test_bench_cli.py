"""End-to-end CLI behavior: exit codes, file layouts, determinism."""

import csv
import json
from pathlib import Path

import pytest

from dismantle.assembly_io import SUITE, generate_synthetic
from dismantle.bench_cli import (EXIT_ERROR, EXIT_OK, EXIT_UNSOLVED,
                                 build_parser, main)


@pytest.fixture(scope="module")
def tiny_suite(tmp_path_factory):
    """Two quick solvable manifests shared by the bench tests."""
    d = tmp_path_factory.mktemp("suite")
    generate_synthetic("bolt-washer-pin", d, name="bwp-a", seed=0)
    generate_synthetic("peg-board", d, name="pb-4", seed=0, pegs=4)
    return d


def _common(out_dir) -> list:
    return ["--out-dir", str(out_dir), "--sdf-res", "48",
            "--time-mode", "virtual"]


# ---------------------------------------------------------------------------
# gen


def test_gen_writes_family_and_suite(tmp_path, capsys):
    assert main(["gen", "peg-board", "--param", "pegs=4", "--name", "pb",
                 "--out-dir", str(tmp_path / "one")]) == EXIT_OK
    out = capsys.readouterr().out.strip()
    assert out.endswith("pb.json") and Path(out).exists()

    assert main(["gen", "suite", "--out-dir", str(tmp_path / "all")]) == EXIT_OK
    listed = capsys.readouterr().out.strip().splitlines()
    assert len(listed) == len(SUITE) == 16
    assert all(Path(p).exists() for p in listed)


def test_gen_rejects_bad_input(tmp_path, capsys):
    assert main(["gen", "gearbox", "--out-dir", str(tmp_path)]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err
    assert main(["gen", "peg-board", "--param", "pegs",
                 "--out-dir", str(tmp_path)]) == EXIT_ERROR
    assert "KEY=VALUE" in capsys.readouterr().err
    assert main(["gen", "peg-board", "--param", "pegs=77",
                 "--out-dir", str(tmp_path)]) == EXIT_ERROR


# ---------------------------------------------------------------------------
# plan


def test_plan_solves_and_writes_plan_file(tiny_suite, tmp_path, capsys):
    manifest = tiny_suite / "bwp-a.json"
    code = main(["plan", str(manifest), "--mode", "sbdp*"]
                + _common(tmp_path))
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "solved=True" in out
    plan_path = tmp_path / "bwp-a.sbdp_star.json"
    assert plan_path.exists()
    doc = json.loads(plan_path.read_text())
    assert doc["mode"] == "sbdp_star" and doc["solved"] is True
    assert doc["problem_manifest"] == str(manifest)


def test_plan_reports_timeout_as_unsolved(tiny_suite, tmp_path, capsys):
    hook_dir = tmp_path / "hook"
    generate_synthetic("rotation-hook", hook_dir, name="hook-a", seed=0)
    code = main(["plan", str(hook_dir / "hook-a.json"), "--mode", "pdp_t",
                 "--timeout", "0.5"] + _common(tmp_path))
    assert code == EXIT_UNSOLVED
    assert "solved=False" in capsys.readouterr().out
    assert (tmp_path / "hook-a.pdp_t.json").exists()


def test_plan_input_errors(tiny_suite, tmp_path, capsys):
    assert main(["plan", str(tmp_path / "nope.json")]
                + _common(tmp_path)) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err
    assert main(["plan", str(tiny_suite / "bwp-a.json"), "--mode", "bogus"]
                + _common(tmp_path)) == EXIT_ERROR


# ---------------------------------------------------------------------------
# validate


def _plan_once(tiny_suite, tmp_path) -> Path:
    manifest = tiny_suite / "bwp-a.json"
    assert main(["plan", str(manifest), "--mode", "sbdp_star"]
                + _common(tmp_path)) == EXIT_OK
    return tmp_path / "bwp-a.sbdp_star.json"


def test_validate_accepts_fresh_plan(tiny_suite, tmp_path, capsys):
    plan_path = _plan_once(tiny_suite, tmp_path)
    assert main(["validate", str(plan_path), "--sdf-res", "48"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "motions ok" in out and "goal reached" in out


def test_validate_flags_corrupted_waypoints(tiny_suite, tmp_path, capsys):
    plan_path = _plan_once(tiny_suite, tmp_path)
    doc = json.loads(plan_path.read_text())
    entry = next(e for e in doc["entries"] if e["removed"])
    w0 = entry["paths"][0]["waypoints"][0]
    descent = [list(w0)]
    for _ in range(5):                   # five legal -Y steps into the bolt
        nxt = list(descent[-1])
        nxt[1] -= 0.1
        descent.append(nxt)
    entry["paths"] = [{"action": "-Y", "waypoints": descent}]
    plan_path.write_text(json.dumps(doc), encoding="utf-8")
    assert main(["validate", str(plan_path), "--sdf-res", "48"]) == EXIT_ERROR
    out = capsys.readouterr().out
    assert "invalid:" in out and "penetration" in out


def test_validate_manifest_resolution(tiny_suite, tmp_path, capsys):
    plan_path = _plan_once(tiny_suite, tmp_path)
    doc = json.loads(plan_path.read_text())
    del doc["problem_manifest"]
    orphan = tmp_path / "orphan.json"
    orphan.write_text(json.dumps(doc), encoding="utf-8")
    assert main(["validate", str(orphan)]) == EXIT_ERROR
    assert "records no manifest" in capsys.readouterr().err
    assert main(["validate", str(orphan), "--sdf-res", "48", "--manifest",
                 str(tiny_suite / "bwp-a.json")]) == EXIT_OK


# ---------------------------------------------------------------------------
# bench


def _read_rows(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_bench_writes_consistent_tables(tiny_suite, tmp_path, capsys):
    out = tmp_path / "runs"
    code = main(["bench", "--suite-dir", str(tiny_suite),
                 "--modes", "sbdp,sbdp_star,pdp_t", "--seeds", "0",
                 "--timeout", "60"] + _common(out))
    assert code == EXIT_OK
    metrics = _read_rows(out / "metrics.csv")
    assert len(metrics) == 6             # 2 problems x 3 modes x 1 seed
    assert [(r["problem"], r["mode"]) for r in metrics] == sorted(
        (r["problem"], r["mode"]) for r in metrics)
    assert all(r["solved"] == "1" for r in metrics)
    for r in metrics:
        assert (out / "plans" /
                f"{r['problem']}.{r['mode']}.s0.json").exists()

    lines = (out / "runs.jsonl").read_text().splitlines()
    assert len(lines) == 6 and all(json.loads(l)["seed"] == 0 for l in lines)

    coverage = _read_rows(out / "coverage.csv")
    assert len(coverage) == 3 * 24
    for mode in ("sbdp", "sbdp_star", "pdp_t"):
        counts = [int(r["solved"]) for r in coverage if r["mode"] == mode]
        assert counts == sorted(counts)              # cumulative
        assert counts[-1] == 2                       # everything solved

    aggregates = _read_rows(out / "aggregates.csv")
    assert [r["mode"] for r in aggregates] == ["pdp_t", "sbdp", "sbdp_star"]
    for r in aggregates:
        assert r["common_problems"] == "2"
        assert float(r["sim_mean"]) > 0.0


def test_bench_is_byte_deterministic(tiny_suite, tmp_path):
    outs = (tmp_path / "r1", tmp_path / "r2")
    for out in outs:
        assert main(["bench", "--suite-dir", str(tiny_suite),
                     "--modes", "sbdp_star,pdp_t", "--seeds", "0,1",
                     "--timeout", "60"] + _common(out)) == EXIT_OK
    for rel in ("metrics.csv", "runs.jsonl", "coverage.csv",
                "aggregates.csv", "plans/bwp-a.sbdp_star.s1.json"):
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel


def test_bench_parallel_matches_serial(tiny_suite, tmp_path):
    serial = tmp_path / "serial"
    parallel = tmp_path / "parallel"
    base = ["bench", "--suite-dir", str(tiny_suite), "--modes",
            "sbdp_star,pdp_t", "--seeds", "0", "--timeout", "60"]
    assert main(base + _common(serial)) == EXIT_OK
    assert main(base + ["--jobs", "2"] + _common(parallel)) == EXIT_OK
    for rel in ("metrics.csv", "runs.jsonl", "coverage.csv",
                "aggregates.csv"):
        assert (serial / rel).read_bytes() == (parallel / rel).read_bytes()


def test_bench_survives_a_broken_manifest(tiny_suite, tmp_path, capsys):
    broken_dir = tmp_path / "suite"
    broken_dir.mkdir()
    good = generate_synthetic("bolt-washer-pin", broken_dir, name="good",
                              seed=0)
    (broken_dir / "broken.json").write_text("{nope", encoding="utf-8")
    out = tmp_path / "runs"
    assert main(["bench", "--suite-dir", str(broken_dir), "--modes",
                 "sbdp_star", "--seeds", "0", "--timeout", "60"]
                + _common(out)) == EXIT_OK
    rows = _read_rows(out / "metrics.csv")
    by_name = {r["problem"]: r for r in rows}
    assert by_name["good"]["solved"] == "1"
    assert by_name["broken"]["solved"] == "0"
    assert by_name["broken"]["failure_reason"].startswith("error:")
    assert good.exists()


# ---------------------------------------------------------------------------
# environment fallbacks


def test_env_overrides_feed_parser_defaults(monkeypatch):
    monkeypatch.setenv("DISMANTLE_TIMEOUT", "123.5")
    monkeypatch.setenv("DISMANTLE_MODE", "pdp_r")
    monkeypatch.setenv("DISMANTLE_TIME_MODE", "virtual")
    monkeypatch.setenv("DISMANTLE_SEEDS", "3,4")
    monkeypatch.setenv("DISMANTLE_JOBS", "2")
    parser = build_parser()
    args = parser.parse_args(["plan", "x.json"])
    assert args.timeout == 123.5
    assert args.mode == "pdp_r"
    assert args.time_mode == "virtual"
    args = parser.parse_args(["bench"])
    assert args.seeds == "3,4" and args.jobs == 2
    # explicit flags still win
    args = parser.parse_args(["plan", "x.json", "--timeout", "9"])
    assert args.timeout == 9.0
