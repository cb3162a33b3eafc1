"""Command-line entry point: ``epopinf {simulate,train,evaluate,reproduce}``.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 missing input.
"""

import argparse
import logging
import sys

import numpy as np

from .config import PROBLEMS, PROFILES, ConfigError, builtin_config, load_config
from .pipeline import FIGURES, run_evaluate, run_reproduce, run_simulate, run_train

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_MISSING = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="TOML experiment config (default: built-in profile)")
    p.add_argument("--output", help="output directory (default: output_dir from the config)")
    p.add_argument("--seed", type=int, help="override the test-IC sampling seed")
    p.add_argument("--profile", choices=PROFILES, default="desk",
                   help="built-in config used when --config is absent")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="epopinf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("simulate", "simulate training trajectories"),
                        ("train", "fit POD basis and reduced operators at r_max"),
                        ("evaluate", "score reduced models for every r in r_list")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--problem", choices=PROBLEMS,
                       help="problem for the built-in profile (required without --config)")
    p = sub.add_parser("reproduce", help="emit the data behind one figure")
    p.add_argument("figure", choices=sorted(FIGURES))
    _common(p)
    return parser


def _resolve_config(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        problem = FIGURES[args.figure][0] if args.command == "reproduce" else args.problem
        if problem is None:
            raise ConfigError("either --config or --problem is required")
        cfg = builtin_config(problem, args.profile)
    return cfg.with_overrides(seed=args.seed, output_dir=args.output)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        out = cfg.output_dir
        if args.command == "simulate":
            run_simulate(cfg, out)
        elif args.command == "train":
            run_train(cfg, out)
        elif args.command == "evaluate":
            run_evaluate(cfg, out)
        else:
            for path in run_reproduce(args.figure, cfg, out):
                print(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
