#!/usr/bin/env python3
"""Run the bundled dimension-sweep experiment and print the comparison.

Equivalent to `raresum run configs/fig1.cfg`; kept as a script so the
experiment can be launched (and its output path adjusted) without touching
the configuration file.
"""

import argparse
import sys
from pathlib import Path

from raresum.cli import run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None, help="CSV output path override")
    parser.add_argument("--seed", type=int, default=None, help="base seed override")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()
    cfg = ROOT / "configs" / "fig1.cfg"
    return run_experiment(str(cfg), threads=args.threads, out=args.out,
                          seed=args.seed)


if __name__ == "__main__":
    sys.exit(main())
