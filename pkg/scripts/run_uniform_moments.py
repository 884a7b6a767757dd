#!/usr/bin/env python3
"""Long-horizon moment stability: track E|Y^1|^2 over the horizon and test
the second half of the series for a zero linear trend at 95%.

Usage: scripts/run_uniform_moments.py [configs/uniform_moments.cfg]
Exit code 2 if the zero-trend test rejects.
"""

import json
import pathlib
import sys

from gmsim.config import parse_config
from gmsim.experiments import uniform_moment_experiment

ROOT = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    config = sys.argv[1] if len(sys.argv) > 1 else str(
        ROOT / "configs" / "uniform_moments.cfg"
    )
    cfg = parse_config(pathlib.Path(config).read_text())
    series, info = uniform_moment_experiment(cfg)
    print(json.dumps({
        "times": list(series.times),
        "values": [float(v) for v in series.values],
        **{k: (bool(v) if k == "accepted" else float(v))
           for k, v in info.items()},
    }, indent=2))
    raise SystemExit(0 if info["accepted"] else 2)
