"""Command line: ``gaitmppi <experiment> --config FILE --seed N --out DIR``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import KINDS, ConfigError, ExperimentConfig, load_config
from .harness import OracleCheck, RampResult, SpeedTable, TrainResult, run_experiment


def _print_table(t: SpeedTable) -> None:
    print("cost of transport")
    print("  " + "".join(f"{h:>10}" for h in t.header()))
    for method, *vals in t.rows("cot"):
        print(f"  {method:>10}" + "".join(f"{v:10.3f}" for v in vals))


def _report(result) -> int:
    if isinstance(result, SpeedTable):
        _print_table(result)
    elif isinstance(result, TrainResult):
        _print_table(result.table)
        print(f"dynamics normalized mse {result.report.dynamics_normalized_mse:.3g}, "
              f"reload identical: {result.reload_identical}")
    elif isinstance(result, RampResult):
        for k, v in result.summary().items():
            print(f"{k:>22} {v:.4f}")
    elif isinstance(result, list) and all(isinstance(c, OracleCheck) for c in result):
        for c in result:
            print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.measured:.3g} (threshold {c.threshold:g})")
        return 0 if all(c.passed for c in result) else 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gaitmppi", description=__doc__)
    parser.add_argument("experiment", choices=KINDS)
    parser.add_argument("--config", help="flat 'section.key = value' config file")
    parser.add_argument("--seed", type=int, help="overrides experiment.seed")
    parser.add_argument("--out", help="output directory (overrides experiment.out)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = cfg.with_overrides(kind=args.experiment, seed=args.seed, out=args.out)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    result = run_experiment(cfg)
    print(f"wrote {cfg.experiment.out}")
    return _report(result)


if __name__ == "__main__":
    sys.exit(main())
