"""Command-line front end.

    mdmasim <experiment> [--config scenario.yaml] [--seed N] [--out file.csv]
                         [--trials N] [--check] ...

Experiments: sir, hardening, ber, speff, beacon, callsetup. Exit codes:
0 success, 2 configuration error, 3 acceptance-threshold violation under
--check.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import acquisition, callsetup, experiments
from .errors import ConfigError
from .frames import save_iq
from .results import require
from .scenario import Scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK_FAILED = 3

_RUNNERS = {
    "sir": (experiments.run_sir_experiment, experiments.check_sir),
    "hardening": (experiments.run_hardening_experiment, experiments.check_hardening),
    "ber": (experiments.run_ber_experiment, experiments.check_ber),
    "speff": (experiments.run_spectral_efficiency, experiments.check_speff),
    "beacon": (acquisition.run_beacon_experiment, acquisition.check_beacon),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdmasim",
                                     description="Multipath-division multiple access simulator")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in (*_RUNNERS, "callsetup"):
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="YAML scenario file")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="write results CSV here")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--check", action="store_true",
                       help="validate results against the documented thresholds")
        if name == "callsetup":
            p.add_argument("--trace", help="write the protocol event trace here")
        if name == "beacon":
            p.add_argument("--export-iq",
                           help="write one clean beacon capture as interleaved "
                                "little-endian float32 I/Q pairs")
    return parser


def load_scenario(args: argparse.Namespace) -> Scenario:
    scenario = Scenario.from_yaml(args.config) if args.config else Scenario()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if overrides:
        scenario = dataclasses.replace(scenario, **overrides)
    return scenario


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.experiment == "callsetup":
            run = callsetup.run_call_setup(scenario)
            result, checks = run.experiment, callsetup.check_callsetup(run.experiment, scenario)
            if args.trace:
                with open(args.trace, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(run.trace.render())
            print(f"call setup {'succeeded' if run.success else 'FAILED'} "
                  f"({len(run.sessions)} user(s))")
        else:
            runner, checker = _RUNNERS[args.experiment]
            if args.experiment == "beacon" and getattr(args, "export_iq", None):
                from .rng import rng_for
                rx, cell, _, _ = acquisition.make_capture(scenario, rng_for(scenario.seed))
                save_iq(args.export_iq, rx)
                print(f"wrote beacon capture for cell {cell} to {args.export_iq}")
            result = runner(scenario)
            checks = checker(result, scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    for key in sorted(result.summary):
        print(f"{key} = {result.summary[key]}")
    if args.out:
        result.write_csv(args.out)
        print(f"wrote {len(result.records)} records to {args.out}")
    if args.check:
        for check in checks:
            print(check.line())
        if not require(checks):
            return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
