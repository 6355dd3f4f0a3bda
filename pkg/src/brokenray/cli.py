"""Command-line entry points.

Subcommands: simulate, reconstruct, filter, pipeline, verify, cache-build.
Every subcommand reads one TOML config; --set section.key=value overrides
individual keys. Exit codes: 0 success, 2 parse/config error, 3 empty final
solution set under --strict, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .dataio import parse_candidates, parse_data_points, write_candidates, write_data_points
from .errors import BrokenRayError, ParseError, SchemaMismatch, StepUnderflow
from .pipeline import run_phase1, run_phase2, run_pipeline, simulate_dataset, verify_oracle, write_solutions
from .regions import build_cache, save_cache

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STRICT_EMPTY = 3
EXIT_NUMERICAL = 4


def _add_common(sub):
    sub.add_argument("--config", required=True, help="TOML config file")
    sub.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY=VALUE", help="override a config key (TOML literal value)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brokenray",
                                 description="Broken-ray travel-time obstacle reconstruction")
    ap.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sp = ap.add_subparsers(dest="command", required=True)

    s = sp.add_parser("simulate", help="synthesize a measurement dataset")
    _add_common(s)
    s.add_argument("--out", help="dataset path (default <out_dir>/dataset.txt)")

    s = sp.add_parser("reconstruct", help="phase 1: candidate points from measurements")
    _add_common(s)
    s.add_argument("--data", help="dataset path (default from [run].data)")
    s.add_argument("--out", help="candidates path (default <out_dir>/candidates.txt)")

    s = sp.add_parser("filter", help="phase 2: consensus filter of candidates")
    _add_common(s)
    s.add_argument("--data", help="dataset path")
    s.add_argument("--candidates", required=True, help="candidates file from reconstruct")
    s.add_argument("--out", help="solutions path (default <out_dir>/solutions.txt)")

    s = sp.add_parser("pipeline", help="simulate, reconstruct, filter, report")
    _add_common(s)
    s.add_argument("--strict", action="store_true",
                   help="exit 3 when the final solution set is empty")

    s = sp.add_parser("verify", help="closed-form oracle check of integrator and reconstruction")
    _add_common(s)

    s = sp.add_parser("cache-build", help="precompute the receiver-ray region table")
    _add_common(s)
    s.add_argument("--out", help="cache path (default <out_dir>/cache.txt)")
    return ap


def _out_path(cfg, arg, default_name):
    if arg:
        return Path(arg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg.out_dir / default_name


def _cmd_simulate(cfg, args):
    data = simulate_dataset(cfg)
    path = _out_path(cfg, args.out, "dataset.txt")
    write_data_points(path, data)
    print(f"wrote {len(data)} data points to {path}")
    return EXIT_OK


def _cmd_reconstruct(cfg, args):
    data_path = Path(args.data) if args.data else cfg.data_path
    if data_path is None:
        raise ParseError("no dataset: pass --data or set [run].data")
    data = parse_data_points(data_path)
    cands, statuses = run_phase1(cfg, data)
    path = _out_path(cfg, args.out, "candidates.txt")
    write_candidates(path, cands)
    solved = sum(1 for v in statuses.values() if v == "solved")
    print(f"{solved}/{len(data)} data points solved; "
          f"{len(cands)} candidates written to {path}")
    return EXIT_OK


def _cmd_filter(cfg, args):
    data_path = Path(args.data) if args.data else cfg.data_path
    if data_path is None:
        raise ParseError("no dataset: pass --data or set [run].data")
    data = parse_data_points(data_path)
    cands = parse_candidates(args.candidates)
    phase2_out = run_phase2(cfg, cands, data)
    path = _out_path(cfg, args.out, "solutions.txt")
    write_solutions(path, cfg, phase2_out)
    kept = sum(len(r["kept"]) for r in phase2_out.values())
    print(f"kept {kept} supported points across {len(phase2_out)} period(s); "
          f"solutions written to {path}")
    return EXIT_OK


def _cmd_pipeline(cfg, args):
    if args.strict:
        cfg.strict = True
    report = run_pipeline(cfg)
    for period in sorted(report.periods):
        info = report.periods[period]
        print(f"period {period}: {info['n_kept']} points kept "
              f"({info['n_candidates']} candidates, delta={info['delta_s']:.4g}s)")
    print(f"artifacts in {cfg.out_dir}")
    if cfg.strict and report.total_kept == 0:
        print("strict mode: empty final solution set", file=sys.stderr)
        return EXIT_STRICT_EMPTY
    return EXIT_OK


def _cmd_verify(cfg, args):
    report = verify_oracle(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.out_dir / "verify.json", "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
    for row in report["rows"]:
        print(f"T={row['travel_time']:<6g} expected={row['expected_xy']:.4f} "
              f"trace_err={row['trace_rel_err']:.2e} recon_err={row['recon_rel_err']:.2e}")
    print(f"integrator max rel err {report['max_trace_rel_err']:.3e} "
          f"({'PASS' if report['trace_pass_0p1pct'] else 'FAIL'} at 0.1%)")
    print(f"reconstruction max rel err {report['max_recon_rel_err']:.3e} "
          f"({'PASS' if report['recon_pass_1pct'] else 'FAIL'} at 1%)")
    return EXIT_OK if report["recon_pass_1pct"] and report["trace_pass_0p1pct"] else EXIT_NUMERICAL


def _cmd_cache_build(cfg, args):
    if cfg.mesh is None:
        raise ParseError("cache-build needs a [mesh] section")
    if cfg.simulate is None:
        raise ParseError("cache-build takes receivers from [simulate].receivers")
    budget = cfg.cache_budget
    if budget is None:
        raise ParseError("cache-build needs [mesh].budget")
    table = build_cache(cfg.simulate.receivers, cfg.recon.grid, budget, cfg.step,
                        cfg.domain, cfg.field, cfg.mesh, cfg.cache_n_r)
    path = _out_path(cfg, args.out, "cache.txt")
    save_cache(path, table)
    print(f"cached {len(table)} receiver-ray points to {path}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "reconstruct": _cmd_reconstruct,
    "filter": _cmd_filter,
    "pipeline": _cmd_pipeline,
    "verify": _cmd_verify,
    "cache-build": _cmd_cache_build,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        return _COMMANDS[args.command](cfg, args)
    except (ParseError, SchemaMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepUnderflow, BrokenRayError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
