"""Command line front end: denoise, verify, and sweep subcommands.

Flags override the config file; the resolved values are echoed in the
report so a run can be reproduced from its output alone.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .harness import (
    SUITES,
    USAGE_ERROR,
    ConfigError,
    load_config,
    run_denoise,
    run_sweep,
    run_verify,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fractv",
        description="Fractional-kernel total variation denoising and "
                    "verification experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help="TOML run configuration")
        p.add_argument("--out", help="output directory (overrides [output])")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--log-every", type=int, dest="log_every",
                       help="solver progress print interval, 0 for silent")

    p_den = sub.add_parser("denoise", help="solve and write u plus a report")
    common(p_den)

    p_ver = sub.add_parser("verify", help="run verification suites")
    common(p_ver)
    p_ver.add_argument("--suite", action="append", dest="suites",
                       metavar="NAME",
                       help=f"suite to run, repeatable; one of {SUITES}")

    p_sw = sub.add_parser("sweep", help="verify across a parameter range")
    common(p_sw)
    p_sw.add_argument("--param", required=True,
                      help="parameter to sweep: s, beta, or h")
    p_sw.add_argument("--values", required=True,
                      help="comma separated numeric values")
    return parser


def _apply_overrides(cfg, args):
    if args.out is not None:
        cfg = replace(cfg, outdir=args.out)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "log_every", None) is not None:
        cfg = replace(cfg, solver=replace(cfg.solver,
                                          log_every=args.log_every))
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "denoise":
            report, code = run_denoise(cfg)
            print(f"denoise: converged={report['converged']} "
                  f"gap={report['gap']:.3e} -> {cfg.outdir}/report.json")
            return code
        if args.command == "verify":
            report, code = run_verify(cfg, args.suites)
            for name, res in report["suites"].items():
                verdict = "pass" if res["passed"] else "FAIL"
                print(f"{name:>14s}: {verdict}")
            print(f"verify: {'pass' if report['passed'] else 'FAIL'} "
                  f"-> {cfg.outdir}/report.json")
            return code
        values = [v for v in args.values.split(",") if v.strip()]
        try:
            values = [float(v) for v in values]
        except ValueError:
            raise ConfigError(f"bad --values list: {args.values!r}") from None
        rows, code = run_sweep(cfg, args.param, values)
        for v, rep in rows:
            verdict = "pass" if rep["passed"] else "FAIL"
            print(f"{args.param}={v:g}: {verdict}")
        return code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
