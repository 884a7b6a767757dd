#!/usr/bin/env python3
"""Run the propagation-of-chaos rate scan.

Usage: scripts/run_chaos_scan.py [configs/chaos_scan.cfg] [extra gmsim args]
Takes a few minutes at the default sizes.
"""

import pathlib
import sys

from gmsim.cli import run_cli

ROOT = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    args = sys.argv[1:]
    config = args.pop(0) if args and not args[0].startswith("-") else str(
        ROOT / "configs" / "chaos_scan.cfg"
    )
    if "--seed" not in args:
        args += ["--seed", "11"]
    raise SystemExit(run_cli(["chaos-scan", "--config", config, *args]))
