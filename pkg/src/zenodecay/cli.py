"""Command line: ``zenodecay <experiment> [--config PATH] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import EXPERIMENTS, default_config, parse_config, validate
from .exceptions import ConfigError, OutputError, ZenoDecayError

EXIT_STATUS_HELP = """\
exit status:
  0  success
  2  configuration error (unknown key, malformed number, failed precondition)
  3  numerical-validation error
  4  I/O error
  5  non-convergence
"""

DESCRIPTIONS = {
    "qze": "compound survival for commuting state/projector pairs (Zeno case)",
    "compound": "convergence of the compound product to exp(-rate t), both branches",
    "ensemble": "Monte Carlo survival ensemble over stochastic subspace sequences, with exponential fit",
    "fgr": "golden-rule rate vs exact-dynamics fit on a discretized continuum",
    "channels": "per-channel rates, additivity and the product of channel exponentials",
    "lineshape": "continuum populations and Lorentzian fit",
    "contrast": "exact unitary survival vs exp(-Gamma t) vs the quadratic short-time law",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="zenodecay",
        description="Reproducible decay experiments.",
        epilog=EXIT_STATUS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=DESCRIPTIONS[name], description=DESCRIPTIONS[name],
                           epilog=EXIT_STATUS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", metavar="PATH", help="configuration file (defaults used if omitted)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", metavar="DIR", help="override the configured output directory")
    return parser


def load_config(args):
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise OutputError(f"cannot read config {args.config}: {exc}") from exc
        cfg = parse_config(text, experiment=args.experiment)
    else:
        cfg = default_config(args.experiment)
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
        validate(cfg)
    return cfg


def main(argv=None):
    from .experiments import run_experiment

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        manifest = run_experiment(cfg)
    except ZenoDecayError as exc:
        print(f"zenodecay {args.experiment}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_status
    for name in sorted(manifest.artifacts):
        print(f"{manifest.artifacts[name]}  {name}")
    print(f"wrote {len(manifest.artifacts)} artifacts + manifest.json to {manifest.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
