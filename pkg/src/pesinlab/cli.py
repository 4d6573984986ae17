"""Command line: run, validate, list-experiments."""
from __future__ import annotations

import argparse
import sys

from .errors import PesinLabError
from .experiments import COLUMNS
from .runner import run_scenario
from .scenario import SCHEMAS, load_scenario


def _cmd_run(args):
    s = load_scenario(args.scenario)
    report = run_scenario(s, args.output_dir)
    for v in report.verdicts:
        print(f"{'PASS' if v['passed'] else 'FAIL'}  {v['name']}")
    print(f"digest {report.scenario_digest}  wall {report.wall_time:.2f}s")
    for path in report.artifacts:
        print(f"wrote {path}")
    return 0 if report.passed else 2


def _cmd_validate(args):
    s = load_scenario(args.scenario)
    print(f"ok: {s.experiment} scenario, digest {s.digest()}")
    return 0


def _cmd_list(args):
    for name, schema in SCHEMAS.items():
        print(f"{name}: params {', '.join(schema)}")
        print(f"    csv columns {', '.join(COLUMNS[name])}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="pesinlab", description="Run boundary-dynamics experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario")
    run.add_argument("--output-dir", default=None, help="override the scenario's output directory")
    run.set_defaults(func=_cmd_run)
    val = sub.add_parser("validate", help="check a scenario file without running it")
    val.add_argument("scenario")
    val.set_defaults(func=_cmd_validate)
    lst = sub.add_parser("list-experiments", help="list experiments with their parameters")
    lst.set_defaults(func=_cmd_list)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PesinLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # numerical failures outside the error hierarchy
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
