"""Command-line entry point: ``abwlab {sweep,estimate,uncertainty,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import results, uncertainty
from .harness import ConfigError, ExperimentConfig, run_session, run_sweep
from .simnet import write_trace_csv

log = logging.getLogger("abwlab")


def _load_config(path):
    if path is None:
        return ExperimentConfig()
    return ExperimentConfig.load(path)


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    if args.out:
        config.output_dir = str(args.out)
    if not config.output_dir:
        raise ConfigError("no output directory: pass --out or set output_dir")
    res = run_sweep(config, workers=args.workers)
    paths = results.write_results(res, config.output_dir)
    print(results.summarize(res.rows), end="")
    print(f"results written to {paths['raw'].parent}")
    return 0


def cmd_estimate(args) -> int:
    config = _load_config(args.config)
    rate = args.cross_rate_mbps * 1e6 if args.cross_rate_mbps is not None else config.cross_rates_bps[0]
    records = [] if args.trace else None
    row = run_session(config, args.tool, rate, args.session, records=records)
    if args.trace:
        try:
            write_trace_csv(records, args.trace)
        except OSError as err:
            raise results.ResultsError(f"cannot write trace {args.trace}: {err.strerror or err}") from err
    print("tool,value_bps,low_bps,high_bps,bytes_sent,duration_s,status")
    print(",".join(results._fmt(v) for v in (row.tool, row.value_bps, row.low_bps, row.high_bps,
                                               row.bytes_sent, row.duration_s, row.status)))
    return 0


def _uncertainty_rows(args):
    c = args.capacity_mbps * 1e6
    if args.din_us is not None and args.din_us <= 0:
        raise ValueError("--din-us must be > 0")
    if args.tool == "spruce":
        if args.din_us is not None and args.dout_us is not None:
            d_in, d_out = args.din_us, args.dout_us
            abw = (2.0 - d_out / d_in) * c
        else:
            d_in, d_out = (v / 1000 for v in uncertainty.spruce_operating_point(
                args.abw_mbps * 1e6, c, args.probe_size_bytes * 8))
            abw = args.abw_mbps * 1e6
        delta = uncertainty.spruce_uncertainty(c, d_in, d_out, args.delta_din_us)
        inputs = [("capacity (Mbps)", c / 1e6), ("D_in (us)", d_in), ("D_out (us)", d_out),
                  ("D_out/D_in", d_out / d_in), ("delta D_in (us)", args.delta_din_us)]
    else:
        if args.gap_ratio is not None:
            ratio = args.gap_ratio
        elif args.din_us is not None and args.dout_us is not None:
            ratio = args.dout_us / args.din_us
        else:
            rate = uncertainty.igi_default_probe_rate(c, args.probe_size_bytes * 8)
            ratio = uncertainty.igi_gap_ratio(args.abw_mbps * 1e6, c, rate)
        abw = args.abw_mbps * 1e6
        delta = uncertainty.igi_uncertainty(1.0, ratio, args.delta_capacity_mbps * 1e6)
        inputs = [("capacity (Mbps)", c / 1e6), ("D_out/D_in", ratio),
                  ("delta C (Mbps)", args.delta_capacity_mbps)]
    inputs.append(("A (Mbps)", abw / 1e6))
    pct = 100.0 * delta / abw if abw > 0 else float("nan")
    return inputs + [("delta A (Mbps)", delta / 1e6), ("delta A / A (%)", pct)]


def cmd_uncertainty(args) -> int:
    try:
        rows = _uncertainty_rows(args)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    width = max(len(k) for k, _ in rows)
    for key, value in rows:
        print(f"{key:<{width}}  {value:.4f}")
    return 0


def cmd_report(args) -> int:
    raw = Path(args.inp) / "raw.csv"
    try:
        rows = results.read_raw(raw)
    except FileNotFoundError as err:
        raise results.ResultsError(f"{raw}: no such file") from err
    if not rows:
        print(f"{raw}: no sessions recorded")
        return 0
    print(results.summarize(rows), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abwlab", description="Available-bandwidth estimation lab.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a cross-traffic sweep and write results")
    p.add_argument("--config", type=Path, help="JSON experiment config (defaults if omitted)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--workers", type=int, default=None, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("estimate", help="run one measurement session")
    p.add_argument("--tool", required=True, choices=["spruce", "igi", "pathload", "pathchirp"])
    p.add_argument("--config", type=Path)
    p.add_argument("--cross-rate-mbps", type=float, default=None,
                   help="cross-traffic rate (default: first rate of the config)")
    p.add_argument("--session", type=int, default=0)
    p.add_argument("--trace", type=Path, help="write the probe trace CSV here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("uncertainty", help="first-order error of the gap-model formulas")
    p.add_argument("--tool", required=True, choices=["spruce", "igi"])
    p.add_argument("--capacity-mbps", type=float, default=97.5)
    p.add_argument("--abw-mbps", type=float, default=50.0)
    p.add_argument("--probe-size-bytes", type=int, default=None)
    p.add_argument("--din-us", type=float, default=None)
    p.add_argument("--dout-us", type=float, default=None)
    p.add_argument("--delta-din-us", type=float, default=10.0)
    p.add_argument("--gap-ratio", type=float, default=None, help="D_out/D_in (igi)")
    p.add_argument("--delta-capacity-mbps", type=float, default=20.0)
    p.set_defaults(func=cmd_uncertainty)

    p = sub.add_parser("report", help="summarize a results directory")
    p.add_argument("--in", dest="inp", required=True, type=Path)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "probe_size_bytes", 0) is None:
        args.probe_size_bytes = 1500 if args.tool == "spruce" else 700
    try:
        return args.func(args)
    except (ConfigError, ValueError) as err:
        print(f"abwlab: config error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"abwlab: I/O error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
