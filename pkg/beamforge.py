from __future__ import annotations

import argparse
import copy
import dataclasses
import itertools
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from baseline import baseline_synthesis
from codebook_io import (
    codebook_dict,
    export_plot_data,
    import_pattern,
    read_codebook,
    read_report,
    write_codebook,
    write_report,
)
from config import RunConfig, build_run_config, env_settings, load_run_config
from metrics import REPORT_COLUMNS, render_report, report, report_frame
from models import BeamforgeError, ConfigError, InvalidArgumentError, SolverError
from pattern import azimuth_cut_grid, pattern_operator, uniform_psi_grid
from solver import solve

logger = logging.getLogger("beamforge")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; usage errors are validation errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


# ---------- shared helpers ----------

def _setup_logging(quiet: bool) -> None:
    root = logging.getLogger()
    for h in [h for h in root.handlers if getattr(h, "_beamforge", False)]:
        root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    handler._beamforge = True
    root.addHandler(handler)
    root.setLevel(logging.WARNING if quiet else logging.INFO)


def _out_path(path: str | Path) -> Path:
    path = Path(path)
    return path if path.is_absolute() else env_settings().output_dir / path


def _apply_overrides(run: RunConfig, args) -> RunConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "starts", None) is not None:
        changes["n_starts"] = args.starts
    if getattr(args, "max_iters", None) is not None:
        changes["max_iters"] = args.max_iters
    if getattr(args, "trace", None):
        changes["trace_path"] = str(_out_path(args.trace))
    if changes:
        try:
            run.solver = dataclasses.replace(run.solver, **changes)
        except InvalidArgumentError as exc:
            raise ConfigError(f"command line: {exc}") from exc
    return run


def _result_summary(result) -> dict:
    return {
        "objective": float(result.objective),
        "best_start": result.best_start,
        "start_objectives": [float(v) for v in result.start_objectives],
        "accepted_steps": [len(t) for t in result.traces],
        "feasibility": result.feasibility,
    }


def _eval_grid(codebook, size: int):
    if codebook.geometry.kind == "ula":
        return uniform_psi_grid(size)
    return azimuth_cut_grid(size)


def _collect_beams(paths: list[str]):
    """ (beam_id, a, geometry) for every beam of every codebook, in order."""
    out = []
    for path in paths:
        cb = read_codebook(path)
        out += [(bid, a, cb.geometry) for bid, a in zip(cb.beam_ids, cb.beams)]
    return out


def _metric_rows(beam_paths: list[str], run: RunConfig, mean: str, threshold: float):
    beams = _collect_beams(beam_paths)
    targets = run.problem.targets
    if len(beams) != len(targets):
        raise InvalidArgumentError(
            f"{len(beams)} beams given but the config defines {len(targets)} targets"
        )
    op = pattern_operator(run.problem.geometry, run.problem.grid)
    entries = []
    for (bid, a, geom), target in zip(beams, targets):
        if geom.num_elements != run.problem.geometry.num_elements:
            raise InvalidArgumentError(f"beam {bid} has {geom.num_elements} elements, config has {run.problem.geometry.num_elements}")
        entries.append((bid, op.forward(a), target))
    return report(entries, pairs=run.pairs, threshold_db=threshold, mean=mean)


def _pattern_rows(pattern_paths: list[str], run: RunConfig, mean: str, threshold: float):
    """
    Metrics from exported pattern CSVs instead of codebooks. The CSV keeps
    gain only, so dBr exports give peak-relative average gain and sidelobe.
    """
    targets = run.problem.targets
    if len(pattern_paths) != len(targets):
        raise InvalidArgumentError(
            f"{len(pattern_paths)} patterns given but the config defines {len(targets)} targets"
        )
    psi = run.problem.grid.psi
    entries = []
    for path, target in zip(pattern_paths, targets):
        df = import_pattern(path)
        if len(df) != psi.size or not np.allclose(df["psi_rad"].to_numpy(), psi, atol=1e-9):
            raise InvalidArgumentError(f"{path} is not sampled on the config grid")
        entries.append((Path(path).stem, df["magnitude"].to_numpy(), target))
    return report(entries, pairs=run.pairs, threshold_db=threshold, mean=mean)


# ---------- subcommands ----------

def cmd_synth(args) -> int:
    run = _apply_overrides(load_run_config(args.config), args)
    result = solve(run.problem, run.solver)
    payload = codebook_dict(run.problem, result, run.beam_ids, method="optimizer", seed=run.solver.seed)
    out = _out_path(args.out)
    write_codebook(out, payload)
    result_path = _out_path(args.result) if args.result else out.with_name(out.stem + "_result.json")
    result_path.parent.mkdir(parents=True, exist_ok=True)
    result_path.write_text(json.dumps(_result_summary(result), indent=2, sort_keys=True) + "\n")
    logger.info(f"objective={result.objective:.6g} best_start={result.best_start}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    run = _apply_overrides(load_run_config(args.config), args)
    result = baseline_synthesis(run.problem, run.solver)
    payload = codebook_dict(run.problem, result, run.beam_ids, method="baseline-approx", seed=run.solver.seed)
    write_codebook(_out_path(args.out), payload)
    logger.info(f"objective={result.objective:.6g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cb = read_codebook(args.beam)
    grid = _eval_grid(cb, args.grid)
    op = pattern_operator(cb.geometry, grid)
    out = _out_path(args.out)
    for bid, a in zip(cb.beam_ids, cb.beams):
        path = out if len(cb.beams) == 1 else out.with_name(f"{out.stem}_{bid}{out.suffix}")
        export_plot_data(op.forward(a), grid, path, spacing_wl=cb.geometry.spacing_wl, dbr=args.dbr)
    return EXIT_OK


def cmd_metrics(args) -> int:
    run = load_run_config(args.spec)
    if args.patterns:
        rows = _pattern_rows(args.patterns, run, args.gain_mean, args.threshold)
    else:
        rows = _metric_rows(args.beams, run, args.gain_mean, args.threshold)
    print(render_report(rows))
    if args.out:
        write_report(rows, _out_path(args.out))
    return EXIT_OK


def _compare_side(paths: list[str], args) -> pd.DataFrame:
    # report CSVs from `metrics --out` are taken as they are; codebooks are evaluated against --spec
    if all(Path(p).suffix.lower() == ".csv" for p in paths):
        return pd.concat([read_report(p) for p in paths], ignore_index=True)
    if not args.spec:
        raise InvalidArgumentError("--spec is required when comparing codebooks")
    run = load_run_config(args.spec)
    return report_frame(_metric_rows(paths, run, args.gain_mean, args.threshold))


def cmd_compare(args) -> int:
    """
    Same metrics for two codebook sets (or two saved reports). Lower is
    better for ripple, overlap and sidelobe; higher is better for average gain.
    """
    a = _compare_side(args.a, args)
    b = _compare_side(args.b, args)
    if len(a) != len(b):
        raise InvalidArgumentError(f"side a has {len(a)} beams, side b has {len(b)}")
    higher_better = {"avg_gain_db"}

    records = []
    for i in range(len(a)):
        for metric in REPORT_COLUMNS[1:]:
            va, vb = a.loc[i, metric], b.loc[i, metric]
            if pd.isna(va) or pd.isna(vb):
                better = ""
            elif np.isclose(va, vb):
                better = "tie"
            elif (va > vb) == (metric in higher_better):
                better = "a"
            else:
                better = "b"
            records.append({"beam": i + 1, "metric": metric, "a": va, "b": vb, "better": better})
    df = pd.DataFrame(records)
    print(df.to_string(index=False, na_rep="", float_format=lambda v: f"{v:.2f}"))
    if args.out:
        out = _out_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(out, index=False)
    return EXIT_OK


def _set_dotted(raw: dict, dotted: str, value) -> None:
    node = raw
    keys = dotted.split(".")
    for key in keys[:-1]:
        node = node[int(key)] if isinstance(node, list) else node.setdefault(key, {})
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def _parse_param(spec: str) -> tuple[str, list]:
    if "=" not in spec:
        raise InvalidArgumentError(f"--param needs the form path=v1,v2,... (got {spec!r})")
    key, values = spec.split("=", 1)
    return key, [json.loads(v) for v in values.split(",")]


def cmd_sweep(args) -> int:
    """
    Cartesian product of --param values over a config template. Each job
    writes its own codebook; a summary CSV collects objective and metrics.
    """
    template_path = Path(args.config)
    try:
        template = json.loads(template_path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{template_path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        params = [_parse_param(p) for p in args.param]
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--param value is not valid JSON: {exc.msg}") from None

    keys = [k for k, _ in params]
    combos = list(itertools.product(*[v for _, v in params])) if params else [()]
    threads = env_settings().threads
    out_dir = _out_path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    for idx, combo in enumerate(combos):
        raw = copy.deepcopy(template)
        for key, value in zip(keys, combo):
            try:
                _set_dotted(raw, key, value)
            except (KeyError, IndexError, ValueError, TypeError):
                raise ConfigError(f"--param path {key!r} does not exist in the template") from None
        run = _apply_overrides(build_run_config(raw, threads=1), args)
        jobs.append((idx, combo, run))

    def run_job(job):
        idx, combo, run = job
        result = baseline_synthesis(run.problem, run.solver) if args.baseline else solve(run.problem, run.solver)
        method = "baseline-approx" if args.baseline else "optimizer"
        path = write_codebook(out_dir / f"job_{idx:03d}.json", codebook_dict(run.problem, result, run.beam_ids, method, run.solver.seed))
        op = pattern_operator(run.problem.geometry, run.problem.grid)
        rows = report(
            [(bid, op.forward(a), t) for bid, a, t in zip(run.beam_ids, result.beams, run.problem.targets)],
            pairs=run.pairs,
        )
        base = {"job": idx, **dict(zip(keys, combo)), "objective": result.objective, "codebook": path.name}
        return [{**base, **dataclasses.asdict(r)} for r in rows]

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run_job, jobs))
    else:
        records = [run_job(j) for j in jobs]

    summary = pd.DataFrame([row for rows in records for row in rows])
    summary.to_csv(out_dir / "sweep_summary.csv", index=False)
    print(summary.to_string(index=False, float_format=lambda v: f"{v:.4g}"))
    return EXIT_OK


# ---------- parser ----------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="beamforge", description="Hybrid beamforming beam synthesis.")
    parser.add_argument("--quiet", action="store_true", help="only warnings and errors on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def overrides(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--starts", type=int)
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--trace", help="CSV trace of solver progress")

    def metric_flags(p):
        p.add_argument("--gain-mean", choices=["db", "linear"], default="db", dest="gain_mean")
        p.add_argument("--threshold", type=float, default=5.0, help="overlap gap in dB")

    p = sub.add_parser("synth", help="config -> codebook + result JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="beam.json")
    p.add_argument("--result", help="result summary path (default <out>_result.json)")
    overrides(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("baseline", help="config -> baseline codebook")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="baseline.json")
    overrides(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="codebook -> pattern CSV")
    p.add_argument("--beam", required=True)
    p.add_argument("--grid", type=int, default=512)
    p.add_argument("--out", default="pattern.csv")
    p.add_argument("--dbr", action="store_true", help="normalise to a 0 dBr peak")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("metrics", help="codebooks or pattern CSVs + config -> report")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--beams", nargs="+")
    src.add_argument("--patterns", nargs="+", help="pattern CSVs from eval, one per target")
    p.add_argument("--spec", required=True)
    p.add_argument("--out")
    metric_flags(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("compare", help="two codebook sets or report CSVs -> metric comparison")
    p.add_argument("--a", nargs="+", required=True)
    p.add_argument("--b", nargs="+", required=True)
    p.add_argument("--spec", help="config for codebook inputs")
    p.add_argument("--out")
    metric_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="config template x parameter grid -> batch results")
    p.add_argument("--config", required=True)
    p.add_argument("--param", action="append", default=[], help="dotted.path=v1,v2 (JSON values)")
    p.add_argument("--out-dir", default="sweep", dest="out_dir")
    p.add_argument("--baseline", action="store_true", help="run the baseline instead of the optimizer")
    overrides(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    _setup_logging(args.quiet)
    try:
        return args.func(args)
    except (InvalidArgumentError, ConfigError) as exc:
        logger.error(f"error: {exc}")
        return EXIT_INVALID
    except (SolverError, OSError) as exc:
        logger.error(f"runtime failure: {exc}")
        return EXIT_RUNTIME
    except BeamforgeError as exc:
        logger.error(f"error: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(run_cli())
