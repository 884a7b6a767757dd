#!/usr/bin/env python3
"""Run the deviation-inequality suite for the empirical mean of a
Lipschitz observable.

Usage: scripts/run_concentration.py [configs/concentration.cfg] [extra gmsim args]
"""

import pathlib
import sys

from gmsim.cli import run_cli

ROOT = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    args = sys.argv[1:]
    config = args.pop(0) if args and not args[0].startswith("-") else str(
        ROOT / "configs" / "concentration.cfg"
    )
    if "--seed" not in args:
        args += ["--seed", "31"]
    raise SystemExit(run_cli(["concentration", "--config", config, *args]))
