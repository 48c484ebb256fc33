"""Command-line front end: ``run``, ``check`` and ``sweep``.

Exit codes: 0 success, 1 runtime error, 2 bad input (config, series or
arguments), 3 a check failed, 4 a check was inconclusive and none failed.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import config_from_dict, config_hash, read_config
from .errors import ConfigError, MesokinError
from .harness import (
    FAIL, INCONCLUSIVE, CheckContext, DiagnosticsRecord, run_checks, run_experiment,
)

log = logging.getLogger("mesokin")

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4
SWEEP_AXES = ("h", "dt", "N", "c", "v", "R")


# --- serialization ------------------------------------------------------------

def _num(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps(obj) -> str:
    """JSON with every float written to 17 significant digits."""
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if hasattr(obj, "item"):
        return dumps(obj.item())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def flatten(d: dict, prefix: str = "") -> dict:
    """Nested dicts become dotted keys and lists become ``name_i`` columns."""
    out = {}
    for k, v in d.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, name + "."))
        elif isinstance(v, (list, tuple)):
            for i, item in enumerate(v):
                out[f"{name}_{i}"] = item
        else:
            out[name] = v
    return out


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _num(v)
    return str(v)


def write_csv(rows: list, path: Path) -> None:
    flat = [flatten(r) for r in rows]
    columns = []
    for row in flat:
        columns.extend(k for k in row if k not in columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in flat:
            writer.writerow([_cell(row.get(c)) for c in columns])


def load_series(path) -> list:
    """Read a JSONL series; any defect raises ValueError."""
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(DiagnosticsRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if len(records) < 2:
        raise ValueError(f"{path}: a series needs at least two records, found {len(records)}")
    return records


# --- commands -----------------------------------------------------------------

def _out_dir(args, cfg, config_path) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.output:
        return Path(cfg.output)
    return Path("out") / Path(config_path).stem


def execute(cfg, raw: dict, out: Path) -> dict:
    """Run one experiment into ``out``; returns the manifest."""
    out.mkdir(parents=True, exist_ok=True)
    jsonl, csv_path = out / "series.jsonl", out / "series.csv"
    manifest = {"config_hash": config_hash(raw), "master_seed": int(cfg.master_seed),
                "code_version": __version__,
                "start_time": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                "outputs": {"series": str(jsonl), "csv": str(csv_path),
                            "manifest": str(out / "manifest.json")}}
    rows = []
    with open(jsonl, "w") as fh:
        def sink(rec):
            d = rec.to_dict()
            rows.append(d)
            fh.write(dumps(d) + "\n")
            fh.flush()
        try:
            run_experiment(cfg, sink)
        finally:
            write_csv(rows, csv_path)
            manifest["end_time"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
            manifest["records"] = len(rows)
            (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def cmd_run(args) -> int:
    try:
        cfg, raw = read_config(args.config)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = _out_dir(args, cfg, args.config)
    try:
        manifest = execute(cfg, raw, out)
    except (MesokinError, RuntimeError, ValueError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {manifest['records']} records to {manifest['outputs']['series']}")
    return EXIT_OK


def evaluate(cfg, records) -> list:
    ctx = CheckContext.from_config(cfg)
    return run_checks(records, ctx, cfg.cones, cfg.interaction_R, cfg.D_radius)


def _verdict_code(reports) -> int:
    statuses = {r.status for r in reports}
    if FAIL in statuses:
        return EXIT_FAIL
    if INCONCLUSIVE in statuses:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _summary(report) -> str:
    keys = ("max_drift", "max_residual", "margin", "tail_growth", "min_slack")
    parts = [f"{k}={report.measured[k]:.4g}" for k in keys
             if isinstance(report.measured.get(k), float)]
    return f"{report.status.upper():12s} {report.claim:13s} " + " ".join(parts)


def cmd_check(args) -> int:
    try:
        cfg, _ = read_config(args.config)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        records = load_series(args.series)
    except (OSError, ValueError) as exc:
        print(f"malformed series: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        reports = evaluate(cfg, records)
    except (KeyError, TypeError, ValueError) as exc:
        print(f"malformed series: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for rep in reports:
        print(_summary(rep))
    out = Path(args.out) if args.out else Path(args.series).parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "reports.json").write_text(dumps([r.to_dict() for r in reports]) + "\n")
    return _verdict_code(reports)


def _apply_axis(raw: dict, axis: str, value) -> dict:
    raw = copy.deepcopy(raw)
    if axis == "h":
        if "cell_size" not in raw["kernel"]:
            raise ConfigError("axis h needs a kernel with cell_size", key="kernel.cell_size")
        raw["kernel"]["cell_size"] = value
    elif axis == "dt":
        raw["dt"] = value
    elif axis == "N":
        raw["init"]["N"] = int(value)
    else:
        cones = raw.get("cones", [])
        if not cones:
            raise ConfigError(f"axis {axis} needs at least one [[cones]] table", key="cones")
        for cone in cones:
            cone[axis] = value
    return raw


def _sweep_one(job):
    raw, out, base_dir = job
    cfg = config_from_dict(raw, base_dir)
    execute(cfg, raw, out)
    reports = evaluate(cfg, load_series(out / "series.jsonl"))
    (out / "reports.json").write_text(dumps([r.to_dict() for r in reports]) + "\n")
    return [r.to_dict() for r in reports]


def _summary_row(axis, value, reports) -> dict:
    row = {axis: value}
    q = 0
    for rep in reports:
        claim = rep["claim"]
        if claim == "thm4.3":
            claim = f"thm4.3_{q}"
            row[f"gamma_time_avg_{q}"] = rep["measured"]["gamma_time_avg"]
            q += 1
        if claim in ("A-linear", "lemma3.1"):
            row[f"{claim}.residual"] = rep["measured"]["max_residual"]
        if "margin" in rep["measured"]:
            row[f"{claim}.margin"] = rep["measured"]["margin"]
        row[f"{claim}.status"] = rep["status"]
    return row


def cmd_sweep(args) -> int:
    if args.axis not in SWEEP_AXES:
        print(f"unknown axis {args.axis!r}; choose from {', '.join(SWEEP_AXES)}", file=sys.stderr)
        return EXIT_INPUT
    tokens = [v.strip() for v in (args.values or "").split(",") if v.strip()]
    if not tokens:
        print("sweep needs at least one value", file=sys.stderr)
        return EXIT_INPUT
    try:
        values = [int(v) if args.axis == "N" else float(v) for v in tokens]
    except ValueError as exc:
        print(f"bad sweep value: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg, raw = read_config(args.config)
        jobs = []
        root = _out_dir(args, cfg, args.config)
        for value, token in zip(values, tokens):
            modified = _apply_axis(raw, args.axis, value)
            config_from_dict(modified, Path(args.config).parent)
            jobs.append((modified, root / f"{args.axis}={token}", Path(args.config).parent))
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_sweep_one, jobs))
        else:
            results = [_sweep_one(job) for job in jobs]
    except (MesokinError, RuntimeError, ValueError, OSError) as exc:
        print(f"sweep failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    rows = [_summary_row(args.axis, v, reps) for v, reps in zip(values, results)]
    root.mkdir(parents=True, exist_ok=True)
    summary = root / f"sweep_{args.axis}.csv"
    write_csv(rows, summary)
    print(f"wrote {summary}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mesokin", description=__doc__.splitlines()[0])
    parser.add_argument("--jobs", type=int, default=1, help="parallel runs for sweep")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    # the same flags are accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run one experiment")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("check", parents=[common], help="certify a series")
    p.add_argument("series")
    p.add_argument("config")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("sweep", parents=[common], help="run one experiment per parameter value")
    p.add_argument("config")
    p.add_argument("--axis", required=True)
    p.add_argument("--values", default="")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
