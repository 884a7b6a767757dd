#!/usr/bin/env python3
"""Probe the declared convexity/growth conditions of a config's potentials.

Usage: scripts/check_potentials.py [configs/quartic_decay.cfg]
Exit code 2 if a declared condition fails its numeric probe.
"""

import pathlib
import sys

from gmsim.cli import run_cli

ROOT = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    config = sys.argv[1] if len(sys.argv) > 1 else str(
        ROOT / "configs" / "quartic_decay.cfg"
    )
    raise SystemExit(run_cli(["check-potential", "--config", config,
                              "--seed", "0", "--unchecked"]))
