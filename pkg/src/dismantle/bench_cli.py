"""Command-line front end for planning, benchmarking and validation.

Four subcommands map onto the library layers:

    dismantle plan PROBLEM.json --mode sbdp_star
    dismantle bench --out-dir runs/ --modes sbdp,sbdp_star,pdp_t
    dismantle validate PLAN.json
    dismantle gen peg-board --param pegs=6 --out-dir problems/

Every flag has a DISMANTLE_* environment fallback so batch scripts can
pin a configuration without editing command lines.  Benchmark output is
written as sorted CSV/JSONL so that two runs with the same seeds are
byte-identical when the virtual clock is selected.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .assembly_io import (FAMILIES, ProblemError, default_suite,
                          export_metrics, export_plan, generate_synthetic,
                          load_plan, load_problem)
from .planner import (MODES, PlannerConfig, normalize_mode, plan,
                      validate_plan)
from .simulation import SimConfig

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNSOLVED = 2

COVERAGE_POINTS = 24
COVERAGE_FLOOR = 1e-2


@dataclass(frozen=True)
class RunRecord:
    """One planner execution inside a sweep."""

    problem: str
    mode: str
    seed: int
    solved: bool
    sim_count: int
    path_time: float
    total_time: float
    failure_reason: str


def _env(name: str, default):
    return os.environ.get(f"DISMANTLE_{name}", default)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=int(_env("SEED", 0)),
                   help="planner RNG seed (default 0)")
    p.add_argument("--timeout", type=float,
                   default=float(_env("TIMEOUT", 7200.0)),
                   help="global planning budget in seconds (default 7200)")
    p.add_argument("--out-dir", default=_env("OUT_DIR", "."),
                   help="where result files go (default .)")
    p.add_argument("--sdf-res", type=int, default=int(_env("SDF_RES", 64)),
                   help="SDF grid resolution along the longest axis")
    p.add_argument("--path-step", type=float,
                   default=float(_env("PATH_STEP", 0.1)),
                   help="translation step length")
    p.add_argument("--rot-step", type=float,
                   default=float(_env("ROT_STEP", 0.05)),
                   help="rotation step in radians")
    p.add_argument("--time-mode", choices=("wall", "virtual"),
                   default=_env("TIME_MODE", "wall"),
                   help="clock used for budgets and reported times")


def _planner_config(args, mode: str, seed: int = None) -> PlannerConfig:
    sim = SimConfig(path_step=args.path_step, rotation_step=args.rot_step)
    return PlannerConfig(mode=mode, global_timeout=args.timeout,
                         rng_seed=args.seed if seed is None else seed,
                         time_mode=args.time_mode, sim=sim)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dismantle",
        description="disassembly planning over watertight rigid assemblies")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one problem in one mode")
    p.add_argument("manifest", help="problem manifest JSON")
    p.add_argument("--mode", default=_env("MODE", "sbdp_star"),
                   help=f"one of {', '.join(MODES)}")
    _add_common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="sweep modes over a problem suite")
    p.add_argument("--suite-dir", default=_env("SUITE_DIR", None),
                   help="directory of problem manifests; generated when omitted")
    p.add_argument("--modes", default=_env("MODES", ",".join(MODES)),
                   help="comma-separated planner modes")
    p.add_argument("--seeds", default=_env("SEEDS", "0"),
                   help="comma-separated seeds, one sweep each")
    p.add_argument("--jobs", type=int, default=int(_env("JOBS", 1)),
                   help="worker processes (default 1)")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="replay and check a plan file")
    p.add_argument("plan", help="plan JSON written by `dismantle plan`")
    p.add_argument("--manifest", default=None,
                   help="problem manifest; defaults to the one in the plan")
    p.add_argument("--sdf-res", type=int, default=int(_env("SDF_RES", 64)))
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen", help="write synthetic problems to disk")
    p.add_argument("family", help=f"one of {', '.join(sorted(FAMILIES))}, "
                                  "or 'suite' for the benchmark set")
    p.add_argument("--param", action="append", default=[],
                   metavar="KEY=VALUE", help="family parameter, repeatable")
    p.add_argument("--name", default=None, help="problem name override")
    p.add_argument("--seed", type=int, default=int(_env("SEED", 0)))
    p.add_argument("--out-dir", default=_env("OUT_DIR", "."))
    p.set_defaults(func=cmd_gen)

    return ap


# ---------------------------------------------------------------------------
# plan


def cmd_plan(args) -> int:
    try:
        mode = normalize_mode(args.mode)
        problem = load_problem(args.manifest, sdf_resolution=args.sdf_res)
    except (ProblemError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    cfg = _planner_config(args, mode)
    result = plan(problem, cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan_path = out_dir / f"{problem.name}.{mode}.json"
    export_plan(plan_path, result, config=cfg, manifest_path=args.manifest)
    m = result.metrics
    print(f"{problem.name} {mode} solved={result.solved} sims={m['sims']} "
          f"sim_time={m['sim_time']:.3f}s total={m['total_time']:.3f}s "
          f"removed={','.join(result.plan.removal_order)} -> {plan_path}")
    return EXIT_OK if result.solved else EXIT_UNSOLVED


# ---------------------------------------------------------------------------
# bench


def _run_one(manifest: str, mode: str, seed: int, args, problem=None):
    """One sweep cell.  Never raises: failures become records."""
    plan_doc = None
    try:
        if problem is None:
            problem = load_problem(manifest, sdf_resolution=args.sdf_res)
        cfg = _planner_config(args, mode, seed=seed)
        result = plan(problem, cfg)
        record = RunRecord(problem.name, mode, seed, result.solved,
                           result.sim_count, result.sim_time,
                           result.total_time, result.failure_reason)
        plan_doc = (result, cfg)
    except Exception as exc:  # noqa: BLE001  sweep must survive bad cells
        name = Path(manifest).stem
        record = RunRecord(name, mode, seed, False, 0, 0.0, 0.0,
                           f"error: {exc}")
    return record, plan_doc


def _run_cell(payload):
    """Process-pool entry; rebuilds the problem inside the worker."""
    manifest, mode, seed, ns_dict, plans_dir = payload
    args = argparse.Namespace(**ns_dict)
    record, plan_doc = _run_one(manifest, mode, seed, args)
    if plan_doc is not None:
        result, cfg = plan_doc
        path = Path(plans_dir) / f"{record.problem}.{mode}.s{seed}.json"
        export_plan(path, result, config=cfg, manifest_path=manifest)
    return record


def _coverage_checkpoints(timeout: float) -> np.ndarray:
    hi = max(float(timeout), COVERAGE_FLOOR * 10.0)
    return np.geomspace(COVERAGE_FLOOR, hi, COVERAGE_POINTS)


def _write_coverage(records, checkpoints, path) -> None:
    modes = sorted({r.mode for r in records})
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("mode", "checkpoint_s", "solved"))
        for mode in modes:
            times = sorted(r.total_time for r in records
                           if r.mode == mode and r.solved)
            for cp in checkpoints:
                n = int(np.searchsorted(times, cp, side="right"))
                w.writerow((mode, "%.6f" % cp, n))


def _write_aggregates(records, path) -> None:
    """Table-style per-mode averages over the commonly solved problems."""
    modes = sorted({r.mode for r in records})
    solved_by_mode = {m: {r.problem for r in records if r.mode == m and r.solved}
                      for m in modes}
    common = set.intersection(*solved_by_mode.values()) if modes else set()
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("mode", "common_problems", "sim_mean", "sim_std",
                    "path_time_mean", "path_time_std",
                    "total_time_mean", "total_time_std"))
        for mode in modes:
            rows = [r for r in records if r.mode == mode and r.problem in common]
            if not rows:
                w.writerow((mode, 0, "", "", "", "", "", ""))
                continue
            sims = np.array([r.sim_count for r in rows], dtype=np.float64)
            pts = np.array([r.path_time for r in rows])
            dts = np.array([r.total_time for r in rows])
            w.writerow((mode, len(common),
                        "%.6f" % sims.mean(), "%.6f" % sims.std(),
                        "%.6f" % pts.mean(), "%.6f" % pts.std(),
                        "%.6f" % dts.mean(), "%.6f" % dts.std()))


def cmd_bench(args) -> int:
    out_dir = Path(args.out_dir)
    plans_dir = out_dir / "plans"
    plans_dir.mkdir(parents=True, exist_ok=True)

    if args.suite_dir:
        manifests = sorted(str(p) for p in Path(args.suite_dir).glob("*.json")
                           if not p.name.endswith(".plan.json"))
    else:
        manifests = [str(p) for p in default_suite(out_dir / "suite",
                                                   seed=args.seed)]
    if not manifests:
        print("error: empty suite", file=sys.stderr)
        return EXIT_ERROR
    modes = [normalize_mode(m) for m in args.modes.split(",") if m]
    seeds = [int(s) for s in str(args.seeds).split(",") if s != ""]

    cells = [(man, mode, seed) for man in manifests for mode in modes
             for seed in seeds]
    records = []
    if args.jobs > 1:
        ns = vars(args).copy()
        ns.pop("func", None)
        payloads = [(man, mode, seed, ns, str(plans_dir))
                    for man, mode, seed in cells]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_run_cell, payloads))
    else:
        # serial path shares one geometry build across modes and seeds
        cache = {}
        for man, mode, seed in cells:
            if man not in cache:
                try:
                    cache[man] = load_problem(man, sdf_resolution=args.sdf_res)
                except (ProblemError, ValueError, OSError) as exc:
                    cache[man] = exc
            prob = cache[man]
            if isinstance(prob, Exception):
                records.append(RunRecord(Path(man).stem, mode, seed, False,
                                         0, 0.0, 0.0, f"error: {prob}"))
                continue
            record, plan_doc = _run_one(man, mode, seed, args, problem=prob)
            if plan_doc is not None:
                result, cfg = plan_doc
                path = plans_dir / f"{record.problem}.{mode}.s{seed}.json"
                export_plan(path, result, config=cfg, manifest_path=man)
            records.append(record)
            print(f"  {record.problem} {mode} seed={seed} "
                  f"solved={record.solved} sims={record.sim_count}",
                  file=sys.stderr)

    records.sort(key=lambda r: (r.problem, r.mode, r.seed))

    rows = [{"problem": r.problem, "mode": r.mode, "seed": r.seed,
             "solved": r.solved, "sim_count": r.sim_count,
             "path_time_s": r.path_time, "total_time_s": r.total_time,
             "failure_reason": r.failure_reason} for r in records]
    export_metrics(rows, out_dir / "metrics.csv")
    with open(out_dir / "runs.jsonl", "w", encoding="ascii") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")
    _write_coverage(records, _coverage_checkpoints(args.timeout),
                    out_dir / "coverage.csv")
    _write_aggregates(records, out_dir / "aggregates.csv")

    solved = sum(r.solved for r in records)
    print(f"bench: {solved}/{len(records)} runs solved over "
          f"{len(manifests)} problems x {len(modes)} modes x "
          f"{len(seeds)} seeds -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args) -> int:
    try:
        doc, plan_obj = load_plan(args.plan)
        manifest = args.manifest or doc.get("problem_manifest")
        if manifest is None:
            print("error: plan records no manifest; pass --manifest",
                  file=sys.stderr)
            return EXIT_ERROR
        problem = load_problem(manifest, sdf_resolution=args.sdf_res)
    except (ProblemError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report = validate_plan(problem, plan_obj)
    claimed_solved = bool(doc.get("solved"))
    ok = report.ok and (report.goal_reached or not claimed_solved)
    for issue in report.issues:
        print(f"invalid: {issue}")
    print(f"{problem.name}: motions {'ok' if report.ok else 'BAD'}, "
          f"goal {'reached' if report.goal_reached else 'not reached'}")
    return EXIT_OK if ok else EXIT_ERROR


# ---------------------------------------------------------------------------
# gen


def _parse_params(pairs) -> dict:
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise ProblemError(f"bad --param {pair!r}, expected KEY=VALUE")
        key, raw = pair.split("=", 1)
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    return params


def cmd_gen(args) -> int:
    try:
        params = _parse_params(args.param)
        if args.family == "suite":
            paths = default_suite(args.out_dir, seed=args.seed)
            for p in paths:
                print(p)
            return EXIT_OK
        path = generate_synthetic(args.family, args.out_dir, name=args.name,
                                  seed=args.seed, **params)
    except (ProblemError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(path)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
