"""Command line entry point: ``hybridres <command> [--config PATH] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .scenario import StageError, run_scenario, write_electrolyzer_curve, write_power_curve, write_weather


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario TOML file (default: packaged defaults)")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--out", type=Path, help="output directory (default: run.out_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="hybridres", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate-weather", parents=[common], help="wind and cloud-cover traces")
    sub.add_parser("power-curve", parents=[common], help="optimal turbine operating points for v in [0, 27] m/s")
    sub.add_parser("electrolyzer-curve", parents=[common], help="U-I, Faraday efficiency and production curve")
    sub.add_parser("run", parents=[common], help="full scenario with dispatch optimisation")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        try:
            cfg = load_config(args.config).with_overrides(
                seed=args.seed, out_dir=str(args.out) if args.out is not None else None)
        except ConfigError as exc:
            raise StageError("config", exc) from exc
        out = Path(cfg.run.out_dir)
        if args.command == "simulate-weather":
            print(write_weather(cfg, out))
        elif args.command == "power-curve":
            print(write_power_curve(cfg, out))
        elif args.command == "electrolyzer-curve":
            print(write_electrolyzer_curve(cfg, out))
        else:
            report = run_scenario(cfg).report
            print(f"profit {report.profit:.2f}, solver {report.solver_status} "
                  f"after {report.solver_iterations} iterations, unserved {report.unserved_MWh:.3f} MWh")
            for name in report.files:
                print(out / name)
    except StageError as exc:
        print(f"hybridres {args.command}: error {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
