"""Command line: single runs and parameter sweeps.

    python3 -m ftlbench run --config desk.cfg --out results/
    python3 -m ftlbench sweep --config desk.cfg --axis ftl=dftl,tpftl,learnedftl

``FTLBENCH_THREADS`` caps how many sweep cells run at once (default: CPU count).
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import KNOWN_KEYS, SimConfig
from .engine import Engine, drain
from .errors import ConfigError, SimError
from .report import SUMMARY_FIELDS, MetricsReport, build_report, headline
from .workload import GenSpec, generate, parse_trace, warmup


def build_workload(cfg: SimConfig, logical_pages: int):
    if cfg["workload.trace"]:
        path = Path(cfg["workload.trace"])
        try:
            with path.open() as fh:
                return parse_trace(fh, logical_pages,
                                   (cfg["workload.trace_scale_num"], cfg["workload.trace_scale_den"]),
                                   cfg["workload.streams"])
        except OSError as exc:
            raise ConfigError(f"cannot read trace {path}: {exc.strerror}") from None
    spec = GenSpec(cfg["workload.pattern"], cfg["workload.io_pages"], cfg["workload.streams"],
                   cfg["workload.total_requests"], cfg["seed"], cfg["workload.working_set"],
                   cfg["workload.read_fraction"])
    return generate(spec, logical_pages)


def simulate(cfg: SimConfig):
    """Warm up (if configured), run the measured workload, return ``(report, result, ftl)``."""
    ftl = cfg.make_ftl()
    engine = Engine(ftl, open_loop=cfg["workload.open_loop"], verify=cfg["verify"])
    warmup(ftl, cfg["warmup.multiplier"], seed=cfg["seed"], engine=engine,
           io_pages=cfg["warmup.io_pages"])
    requests = build_workload(cfg, ftl.logical_pages)
    result = engine.run(requests)
    drain(ftl, result)
    report = build_report(ftl, result, config_echo=cfg.echo(), seed=cfg["seed"])
    return report, result, ftl


def write_outputs(out: Path, report: MetricsReport, result, ftl) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "latency.csv").write_text("".join(f"{x!r}\n" for x in result.latencies))
    if hasattr(ftl, "gc_log_csv"):
        (out / "gc_log.csv").write_text(ftl.gc_log_csv())


def _check_report(report: MetricsReport) -> None:
    if report.oracle_mismatches:
        raise SimError(f"{report.oracle_mismatches} reads returned stale data")


def run_command(cfg: SimConfig, out: Path) -> MetricsReport:
    report, result, ftl = simulate(cfg)
    write_outputs(out, report, result, ftl)
    _check_report(report)
    return report


def _cell(args):
    cfg, out = args
    try:
        report = run_command(cfg, out)
    except (SimError, ValueError, OSError) as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return headline(report), None


def parse_axis(text: str) -> tuple[str, list[str]]:
    key, sep, values = text.partition("=")
    key = key.strip()
    if not sep or not values.strip():
        raise ConfigError(f"axis must look like key=v1,v2,...; got {text!r}")
    if key not in KNOWN_KEYS:
        raise ConfigError(f"unknown axis key {key!r}")
    return key, [v.strip() for v in values.split(",")]


def sweep_threads() -> int:
    raw = os.environ.get("FTLBENCH_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"FTLBENCH_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("FTLBENCH_THREADS must be >= 1")
    return n


def sweep_command(cfg: SimConfig, axis: str, out: Path) -> tuple[int, int]:
    """Run one cell per axis value; returns ``(cells, failures)``."""
    key, values = parse_axis(axis)
    cells = []
    for value in values:
        cells.append((cfg.replace(**{key: value}), out / f"{key}={value}"))
    workers = min(sweep_threads(), len(cells))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_cell, cells))
    else:
        outcomes = [_cell(c) for c in cells]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([key, "status", *SUMMARY_FIELDS])
    failures = 0
    for value, (row, error) in zip(values, outcomes):
        if error is None:
            writer.writerow([value, "ok", *("" if row[f] is None else row[f] for f in SUMMARY_FIELDS)])
        else:
            failures += 1
            writer.writerow([value, error, *[""] * len(SUMMARY_FIELDS)])
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(buf.getvalue())
    return len(cells), failures


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ftlbench", description="Flash translation layer simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="key = value text or JSON")
        s.add_argument("--out", default="ftlbench-out", help="output directory")
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        if name == "sweep":
            s.add_argument("--axis", required=True, help="key=v1,v2,...")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = SimConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        out = Path(args.out)
        if args.command == "run":
            run_command(cfg, out)
            return 0
        n, failed = sweep_command(cfg, args.axis, out)
    except (SimError, ValueError, OSError) as exc:
        print(f"ftlbench: error: {exc}", file=sys.stderr)
        return 1
    if failed:
        print(f"ftlbench: error: {failed} of {n} sweep cells failed (see summary.csv)", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
