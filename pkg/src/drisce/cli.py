"""Command-line front end: simulate / estimate / bench / plot-data.

Exit codes: 0 on success, 1 for configuration problems, 2 for runtime
failures.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench
from .bench import ConfigError
from .geometry import draw_realization


def _add_common(parser):
    parser.add_argument("--config", required=True, help="TOML config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config base seed")
    parser.add_argument("--out", default=None, help="output file path")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="drisce",
        description="Double-RIS two-timescale channel estimation benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw one channel realization and dump it")
    _add_common(p_sim)

    p_est = sub.add_parser("estimate", help="run one trial with per-stage reports")
    _add_common(p_est)
    p_est.add_argument("--schemes", default=None,
                       help="comma-separated large-timescale scheme list override")
    p_est.add_argument("--power", type=float, default=None,
                       help="uplink power in dBm (default: first sweep point)")
    p_est.add_argument("--q", type=int, default=None,
                       help="pilot budget (default: first sweep point)")

    p_bench = sub.add_parser("bench", help="run the full Monte Carlo sweep")
    _add_common(p_bench)
    p_bench.add_argument("--schemes", default=None,
                         help="comma-separated large-timescale scheme list override")
    p_bench.add_argument("--format", choices=("csv", "plot_data"), default="csv")
    p_bench.add_argument("--workers", type=int, default=None,
                         help=f"worker processes (default: ${bench.WORKERS_ENV} or cores)")
    p_bench.add_argument("--no-timing", action="store_true",
                         help="emit runtime_ms as 0 so repeated runs are bit-identical")

    p_plot = sub.add_parser("plot-data", help="aggregate an existing results CSV")
    p_plot.add_argument("results", help="CSV produced by `drisce bench`")
    p_plot.add_argument("--out", default=None, help="output file path")
    return parser


def _load(args):
    cfg = bench.load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if getattr(args, "schemes", None):
        overrides["schemes"] = tuple(s.strip() for s in args.schemes.split(","))
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
        bench._validate(cfg)
    return cfg


def cmd_simulate(args):
    cfg = _load(args)
    rng = np.random.default_rng(cfg.base_seed)
    chan = draw_realization(rng, cfg.bs_geom(), cfg.ris_geom(), cfg.deployment(),
                            cfg.users, paths_f=cfg.paths_bs_ris,
                            paths_d=cfg.paths_ris_ris, paths_h=cfg.paths_ris_user,
                            budget_offsets={"bs_ris": cfg.budget_bs_ris_db,
                                            "ris_ris": cfg.budget_ris_ris_db,
                                            "ris_user": cfg.budget_ris_user_db},
                            shared_class=cfg.path_profile == "shared")
    out = args.out or "realization.npz"
    np.savez(out, F1=chan.F1, F2=chan.F2, D=chan.D, h=chan.h,
             user_positions=chan.user_positions)
    for name, mat in (("F1", chan.F1), ("F2", chan.F2), ("D", chan.D)):
        print(f"{name}: shape {mat.shape}, |.|_F = {np.linalg.norm(mat):.4e}")
    print(f"h: shape {chan.h.shape}, |.|_F = {np.linalg.norm(chan.h):.4e}")
    print(f"wrote {out}")
    return 0


def cmd_estimate(args):
    cfg = _load(args)
    power = args.power if args.power is not None else cfg.power_dbm[0]
    q = args.q if args.q is not None else cfg.q_pilot[0]
    rows = bench.run_trial(cfg, power, q, trial=0)
    print(f"power {power} dBm, q {q}, noise {cfg.noise_power_dbm():.1f} dBm")
    print(f"{'scheme':44s} {'channel':8s} {'NMSE (dB)':>10s} {'ms':>9s}")
    for r in rows:
        nmse_db = 10 * np.log10(r.nmse) if np.isfinite(r.nmse) and r.nmse > 0 else float("nan")
        print(f"{r.scheme:44s} {r.channel:8s} {nmse_db:10.2f} {r.runtime_ms:9.1f}")
    if args.out:
        bench.emit_results(rows, args.out, "csv")
        print(f"wrote {args.out}")
    return 0


def cmd_bench(args):
    cfg = _load(args)
    rows = bench.run_sweep(cfg, workers=args.workers, keep_timing=not args.no_timing)
    out = args.out or "results.csv"
    bench.emit_results(rows, out, args.format)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_plot_data(args):
    rows = bench.read_results(args.results)
    out = args.out or "plot_data.csv"
    bench.emit_results(rows, out, "plot_data")
    print(f"wrote {out}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"simulate": cmd_simulate, "estimate": cmd_estimate,
               "bench": cmd_bench, "plot-data": cmd_plot_data}[args.command]
    try:
        return handler(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
