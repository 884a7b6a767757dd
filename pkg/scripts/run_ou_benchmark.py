#!/usr/bin/env python3
"""Closed-form benchmark for the exponential square-moment estimator.

With a quadratic confinement of curvature 1 and no interaction, each
particle is an independent linear-drift diffusion and the squared distance
between two independent copies started at 0 is 2(1 - e^{-2t}) chi^2_d in
law, so E exp(delta |X - Y|^2) = (1 - 4 delta (1 - e^{-2t}))^{-d/2}.

Usage: scripts/run_ou_benchmark.py [configs/ou_benchmark.cfg]
Exit code 2 if any estimate misses the closed form by more than three
standard errors or exceeds the a-priori bound.
"""

import json
import math
import pathlib
import sys
from dataclasses import replace

import numpy as np

from gmsim.config import parse_config
from gmsim.experiments import simulate_batch
from gmsim.metrics import exp_square_moment, exp_square_moment_bound

ROOT = pathlib.Path(__file__).resolve().parent.parent
DELTA = 0.1

if __name__ == "__main__":
    config = sys.argv[1] if len(sys.argv) > 1 else str(
        ROOT / "configs" / "ou_benchmark.cfg"
    )
    cfg = parse_config(pathlib.Path(config).read_text())
    times, pos_x = simulate_batch(cfg)
    _, pos_y = simulate_batch(replace(cfg, seed=cfg.seed + 1))
    sq = np.sum((pos_x - pos_y) ** 2, axis=-1).reshape(len(times), -1)
    series = exp_square_moment(sq, DELTA, times=list(times))
    bound = exp_square_moment_bound(DELTA, lam=1.0, C=0.0,
                                    diffusion_bound_A=2.0, dim=cfg.dim)
    rows, ok = [], True
    for t, est, se in zip(times, series.values, series.stderr):
        closed = (1.0 - 4.0 * DELTA * (1.0 - math.exp(-2.0 * t))) ** (-cfg.dim / 2.0)
        rows.append({"time": float(t), "estimate": float(est),
                     "stderr": float(se), "closed_form": closed,
                     "bound": bound})
        ok = ok and bool(abs(est - closed) <= 3.0 * se and est < bound)
    print(json.dumps({"delta": DELTA, "rows": rows, "accepted": ok}, indent=2))
    raise SystemExit(0 if ok else 2)
