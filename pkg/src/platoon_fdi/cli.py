"""Command line: ``run`` a scenario, list the ``catalog``, ``verify`` invariants."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .scenario import MODES, ScenarioError, catalog, resolve_scenario, run, serialize


def _cmd_run(args) -> int:
    spec = resolve_scenario(args.scenario)
    if args.dt is not None:
        spec = replace(spec, dt=args.dt)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.noise is not None:
        spec = replace(spec, noise=args.noise)
    out = Path(args.out) if args.out else None
    report = run(spec, args.mode, out)
    sys.stdout.write(report.text())
    return 0


def _cmd_catalog(args) -> int:
    for spec in catalog():
        if args.verbose:
            sys.stdout.write(serialize(spec) + "\n")
        else:
            f = spec.fault
            print(f"{spec.name:16s} {spec.platoon.architecture.value}  n={spec.platoon.n} "
                  f"k={f.k} driver={f.driver.value} t_f={f.t_f:g}"
                  + ("  blend" if spec.blend else ""))
    return 0


def _cmd_verify(args) -> int:
    try:
        import pytest
    except ImportError:
        print("verify needs pytest (install the test extra)", file=sys.stderr)
        return 2
    root = Path(__file__).resolve().parents[2] / "tests"
    if not root.is_dir():
        print(f"test suite not found at {root}", file=sys.stderr)
        return 2
    extra = [] if args.slow else ["-m", "not slow"]
    return int(pytest.main([str(root), "-q", *extra]))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platoon-fdi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and identify the fault")
    p.add_argument("--scenario", required=True, help="scenario file or catalog name")
    p.add_argument("--mode", choices=MODES, default="full-bank")
    p.add_argument("--out", help="directory for CSV artifacts and report")
    p.add_argument("--dt", type=float, help="override the time step (s)")
    p.add_argument("--seed", type=int, help="override the noise seed")
    p.add_argument("--noise", type=float, help="override the measurement noise sigma (m)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("catalog", help="list the shipped scenarios")
    p.add_argument("-v", "--verbose", action="store_true", help="print full scenario text")
    p.set_defaults(func=_cmd_catalog)

    p = sub.add_parser("verify", help="run the invariant and acceptance suites")
    p.add_argument("--slow", action="store_true", help="include long-running suites")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
