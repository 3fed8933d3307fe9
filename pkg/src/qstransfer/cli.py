"""Command-line entry points: simulate, params, validate.

Exit codes: 0 on success, 2 for configuration errors, 3 for
integration failures or failed validation checks.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from . import __version__
from .errors import ConfigError, IntegrationError, QstError
from .experiments import (OMEGA_HF, SCENARIOS, parse_config, run_scenario,
                          run_validation)
from .params import magnetic_chain, parameter_chain

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qstransfer",
        description="Qubit-to-atomic-ensemble state transfer simulator.")
    parser.add_argument("--version", action="version",
                        version=f"qstransfer {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a named scenario")
    sim.add_argument("scenario", choices=SCENARIOS)
    sim.add_argument("--config", help="config file (`key = value` lines)")
    sim.add_argument("--out", help="output directory root")
    sim.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override one config key (repeatable)")

    sub.add_parser("params",
                   help="print the derived physical-parameter chain")
    sub.add_parser("validate", help="run the quick invariant self-checks")
    return parser


def _split_sets(items: Sequence[str]) -> list[tuple[str, str]]:
    pairs = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        pairs.append((key, value))
    return pairs


def _cmd_simulate(args) -> int:
    text = ""
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    config = parse_config(text, extra=_split_sets(args.set),
                          scenario=args.scenario, out_dir=args.out)
    summary = run_scenario(config)
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def _cmd_params(args) -> int:
    print("derived parameter chain (electric-coupling scheme)")
    for row in parameter_chain():
        print("  " + row.display())
    print()
    print("derived parameter chain (magnetic-coupling scheme)")
    for row in magnetic_chain(OMEGA_HF):
        print("  " + row.display())
    return EXIT_OK


def _cmd_validate(args) -> int:
    failures = 0
    for name, ok, detail in run_validation():
        status = "PASS" if ok else "FAIL"
        print(f"{status}  {name}: {detail}")
        failures += 0 if ok else 1
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_INTEGRATION
    print("all checks passed")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler = {"simulate": _cmd_simulate, "params": _cmd_params,
               "validate": _cmd_validate}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"integration error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except QstError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
