#!/usr/bin/env python3
"""Run a coupled-distance decay experiment from a config file.

Usage: scripts/run_decay.py [configs/quartic_decay.cfg] [extra gmsim args]
"""

import pathlib
import sys

from gmsim.cli import run_cli

ROOT = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    args = sys.argv[1:]
    config = args.pop(0) if args and not args[0].startswith("-") else str(
        ROOT / "configs" / "quartic_decay.cfg"
    )
    if "--seed" not in args:
        args += ["--seed", "11"]
    raise SystemExit(run_cli(["decay", "--config", config, *args]))
