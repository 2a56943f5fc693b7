"""``lab <config> [--output-dir D] [--seed N] [--threads K]``.

Exit codes: 0 all assertions passed, 1 an assertion failed, 2 config
error, 3 runtime error inside the experiment.
"""

import argparse
import logging
import sys

from . import _kernels
from .config import load_config
from .errors import ConfigError
from .experiments import RunError, run
from .grid import set_workers

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("gslab")


def build_parser():
    ap = argparse.ArgumentParser(prog="lab", description="Run one gslab experiment config.")
    ap.add_argument("config", help="path to a key=value experiment config")
    ap.add_argument("--output-dir", help="directory for CSV, plot data and manifest")
    ap.add_argument("--seed", type=int, help="seed for random ensembles (overrides the config)")
    ap.add_argument("--threads", type=int, default=1, help="FFT and kernel threads")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, output_dir=args.output_dir, seed=args.seed)
    except ConfigError as exc:
        for line, msg in exc.problems:
            where = f"{args.config}:{line}: " if line else f"{args.config}: "
            print(where + msg, file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("--threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    set_workers(args.threads)
    _kernels.set_threads(args.threads)

    try:
        man = run(cfg)
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for a in man.assertions:
        print(f"{'PASS' if a.passed else 'FAIL'}  {a.name}  {a.detail}".rstrip())
    print(f"{cfg.experiment}: {man.status} ({man.elapsed:.1f} s) -> {cfg.output_dir}")
    return EXIT_OK if man.all_passed else EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
