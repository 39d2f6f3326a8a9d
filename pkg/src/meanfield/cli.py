"""Command-line entry point ``meanfield``.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys

from .basis import DimensionCapError
from .config import ConfigError, load_config
from .suites import SUITES, validate_suites
from .sweep import ResourceCapError, rate_table, read_results, resource_info, run_sweep

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3


def _cmd_validate(args) -> int:
    try:
        reports = validate_suites(args.suite)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    for r in reports:
        print(r.line())
        for c in r.checks:
            if not c.passed:
                print(f"    failed: {c.name}: {c.value:.3e} vs {c.bound:.1e}")
    ok = all(r.passed for r in reports)
    print("all suites passed" if ok else "validation FAILED")
    return EXIT_OK if ok else EXIT_VALIDATION


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.workers:
        config.workers = args.workers
    out = args.out or config.out
    if out is None:
        raise ConfigError(f"{args.config}: no output directory (use --out or the 'out' key)")
    result = run_sweep(config, out_dir=out, dyson=args.dyson)
    print(f"wrote {len(result.rows)} rows to {result.files['results']}")
    for diag in result.manifest["per_eps"]:
        line = (f"eps={diag['eps']:.6g} n_max={diag['n_max']} dim={diag['fock_dimension']} "
                f"tail={diag['tail_mass']:.2e} {diag['runtime_ms']:.0f} ms")
        for rep in diag.get("dyson", []):
            line += f" dyson(t={rep['t']:g})={rep['abs_residual']:.2e}"
        print(line)
    return EXIT_OK


def _cmd_rate(args) -> int:
    try:
        rows = read_results(args.input)
    except OSError as exc:
        raise ConfigError(f"{args.input}: cannot read results ({exc.strerror})") from exc
    try:
        table = rate_table(rows, args.column)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{args.input}: {exc}") from exc
    print("family,t,quantity,points,slope,residual,note")
    for e in table:
        slope = "" if e["slope"] is None else f"{e['slope']:.6f}"
        resid = f"{e['residual']:.3e}" if e.get("residual") is not None else ""
        note = e["note"]
        if e.get("excluded"):
            note += f"; excluded non-positive gaps at eps={e['excluded']}"
        print(f"{e['family']},{e['t']:g},{e['quantity']},{e['points']},{slope},{resid},{note}")
    return EXIT_OK


def _cmd_info(args) -> int:
    config = load_config(args.config)
    info = resource_info(config)
    print(json.dumps(info, indent=2))
    return EXIT_OK if all(e["within_cap"] for e in info["per_eps"]) else EXIT_RESOURCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meanfield", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="run the seeded invariant suites")
    p.add_argument("--suite", default="all", help=f"one of: all, {', '.join(SUITES)}")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("run", help="run an eps sweep from a JSON configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides the config 'out' key)")
    p.add_argument("--dyson", action="store_true", help="also check the integral formula per eps")
    p.add_argument("--workers", type=int, default=0, help="process count over eps values")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("rate", help="fit log(gap) against log(eps) from a results file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--column", default="abs_gap")
    p.set_defaults(func=_cmd_rate)

    p = sub.add_parser("info", help="print truncation, dimensions and memory estimates")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResourceCapError, DimensionCapError) as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
