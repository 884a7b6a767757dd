"""Command-line surface.

Subcommands: check-potential, simulate, decay, chaos-scan, concentration,
report.  Exit codes: 0 success, 1 usage/config errors, 2 experiment-bound
violations.  Human diagnostics go to stderr; machine output goes to files
and stdout only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import experiments, io as gio
from .config import ConfigError, SimConfig, canonical_text, config_hash, parse_config, validate_potentials
from .metrics import series_to_csv_rows
from .potentials import check_declared

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BOUND = 2


def _build_parser():
    p = argparse.ArgumentParser(prog="gmsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="config file path")
        sp.add_argument("--seed", required=True, type=int, help="master seed (mandatory)")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", default=None, help="output directory override")
        sp.add_argument("--unchecked", action="store_true",
                        help="skip the declared-condition checkers")
        sp.add_argument("--format", choices=("csv", "jsonl", "bin"), default=None,
                        help="restrict output to one format")

    common(sub.add_parser("check-potential", help="probe the declared conditions"))
    sp = sub.add_parser("simulate", help="run the particle system")
    common(sp)
    sp.add_argument("--positions", action="store_true", help="include positions in JSONL")
    sp = sub.add_parser("decay", help="coupled Wasserstein-decay experiment")
    common(sp)
    sp.add_argument("--coupling", default="comonotone-1d",
                    choices=("independent", "comonotone-1d", "optimal-small-n"))
    sp = sub.add_parser("chaos-scan", help="propagation-of-chaos rate scan")
    common(sp)
    sp.add_argument("--n-values", default="8,16,32,64")
    sp.add_argument("--m-reference", type=int, default=512)
    sp.add_argument("--runs-per-n", type=int, default=32)
    sp = sub.add_parser("concentration", help="deviation-inequality suite")
    common(sp)
    sp.add_argument("--function", default="coordinate",
                    choices=sorted(experiments.LIPSCHITZ_FUNCTIONS))
    sp.add_argument("--trials", type=int, default=400)
    sp.add_argument("--time", type=float, default=None)
    sp = sub.add_parser("report", help="summarize experiment outputs")
    common(sp, config_required=False)
    return p


def _load_config(args) -> SimConfig:
    with open(args.config) as fh:
        cfg = parse_config(fh.read())
    cfg = replace(cfg, seed=int(args.seed))
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    if args.format:
        cfg = replace(cfg, output_formats=(args.format,))
    if not args.unchecked:
        validate_potentials(cfg)
    return cfg


def _cmd_check_potential(args) -> int:
    cfg = _load_config(args) if not args.unchecked else _load_config(args)
    reports = []
    ok = True
    for name, pot in (("potential_V", cfg.potential_V), ("potential_W", cfg.potential_W)):
        if pot.is_zero:
            continue
        for rep in check_declared(pot):
            reports.append({"potential": name, **rep.to_json()})
            ok = ok and rep.satisfied
    print(json.dumps(reports, indent=2))
    return EXIT_OK if ok else EXIT_BOUND


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    times, pos = experiments.simulate_batch(cfg, threads=args.threads)
    h = config_hash(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    base = os.path.join(cfg.output_dir, f"simulate-{h}")
    if "jsonl" in cfg.output_formats:
        with open(base + ".jsonl", "w") as fh:
            for ti, t in enumerate(times):
                for r in range(pos.shape[1]):
                    rec = {
                        "time": float(t),
                        "run": r,
                        "observables": {
                            "mean_sq": float(np.mean(np.sum(pos[ti, r] ** 2, axis=-1))),
                        },
                    }
                    if args.positions:
                        rec["positions"] = pos[ti, r].tolist()
                    fh.write(json.dumps(rec) + "\n")
    if "csv" in cfg.output_formats:
        rows = [
            (float(t), float(np.mean(np.sum(pos[ti] ** 2, axis=-1))), "", "simulate", "")
            for ti, t in enumerate(times)
        ]
        gio.write_series_csv(base + ".csv", ("time", "value", "stderr", "method", "p"), rows)
    if "bin" in cfg.output_formats:
        for r in range(pos.shape[1]):
            gio.write_positions_bin(f"{base}-run{r}.bin", pos[-1, r], float(times[-1]))
    print(base)
    return EXIT_OK


def _cmd_decay(args) -> int:
    cfg = _load_config(args)
    uniform = cfg.potential_W.declared_alpha == 0.0
    fn = experiments.uniform_convex_decay if uniform else experiments.decay_experiment
    res = fn(cfg, coupling=args.coupling, threads=args.threads)
    flags = {
        "monotone": res.monotonicity_defect <= 3.0 * float(np.max(res.xi_stderr)) + 5.0 * cfg.step_policy.dt,
        "envelope_ok": res.envelope_ok,
    }
    rows = [
        (float(t), float(v), float(s), "coupled-upper", 2)
        for t, v, s in zip(res.times, res.xi, res.xi_stderr)
    ]
    jp, cp = experiments.write_experiment_outputs(
        cfg, "decay", res, flags, rows, ("time", "value", "stderr", "method", "p")
    )
    print(jp)
    return EXIT_OK if all(flags.values()) else EXIT_BOUND


def _cmd_chaos_scan(args) -> int:
    cfg = _load_config(args)
    n_values = [int(v) for v in args.n_values.split(",")]
    res = experiments.chaos_scan(
        cfg, n_values, args.m_reference, args.runs_per_n, threads=args.threads
    )
    errs = np.asarray(res.errors)
    ses = np.asarray(res.stderrs)
    flags = {
        "errors_decreasing": bool(np.all(np.diff(errs) <= 2.0 * (ses[:-1] + ses[1:]))),
        "slope_fast_enough": res.fitted_slope <= res.predicted_slope + 0.15,
        "proxy_bias_ok": not res.proxy_bias_warning,
    }
    rows = [
        (n, e, s, "chaos-scan", 2)
        for n, e, s in zip(res.N_values, res.errors, res.stderrs)
    ]
    jp, _ = experiments.write_experiment_outputs(
        cfg, "chaos-scan", res, flags, rows, ("N", "value", "stderr", "method", "p")
    )
    print(jp)
    return EXIT_OK if flags["errors_decreasing"] and flags["slope_fast_enough"] else EXIT_BOUND


def _cmd_concentration(args) -> int:
    cfg = _load_config(args)
    res = experiments.concentration_suite(
        cfg, f_name=args.function, T=args.time, trials=args.trials, threads=args.threads
    )
    holds = res.empirical_tail <= res.bound + 1e-12
    flags = {"bound_holds": bool(np.all(holds[~res.unreliable]))}
    rows = [
        (float(r), float(t), "", "tail", "")
        for r, t in zip(res.r_grid, res.empirical_tail)
    ]
    jp, _ = experiments.write_experiment_outputs(
        cfg, "concentration", res, flags, rows, ("r", "value", "stderr", "method", "p")
    )
    print(jp)
    return EXIT_OK if all(flags.values()) else EXIT_BOUND


def _cmd_report(args) -> int:
    out_dir = args.out or "out"
    ok = True
    for name in sorted(os.listdir(out_dir)):
        if not name.endswith(".json"):
            continue
        with open(os.path.join(out_dir, name)) as fh:
            summary = json.load(fh)
        flags = summary.get("flags", {})
        ok = ok and all(flags.values())
        line = ", ".join(f"{k}={'pass' if v else 'FAIL'}" for k, v in flags.items())
        print(f"{summary.get('experiment', name)} [{summary.get('config_hash', '')}]: {line}")
    return EXIT_OK if ok else EXIT_BOUND


_COMMANDS = {
    "check-potential": _cmd_check_potential,
    "simulate": _cmd_simulate,
    "decay": _cmd_decay,
    "chaos-scan": _cmd_chaos_scan,
    "concentration": _cmd_concentration,
    "report": _cmd_report,
}


def run_cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    raise SystemExit(run_cli())


if __name__ == "__main__":
    main()
