"""Command-line interface: sweeps, stability runs, spectra, calibration."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness, postproc, timetags
from .postproc import process_stream, throughput_benchmark
from .scenarios import load_scenario
from .source import SymbolStream


def _parse_ob(spec: str):
    if ":" in spec:
        start, stop, step = (float(v) for v in spec.split(":"))
        return (start, stop, step)
    return float(spec)


def _add_scenario_arg(parser):
    parser.add_argument("--scenario", required=True,
                        help="preset name (few_mode_shortwave, "
                             "single_mode_shortwave, single_mode_cband) "
                             "or a scenario YAML file")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="swqkd",
        description="Shortwave/C-band QKD and classical datacom co-existence "
                    "simulator")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("sweep", help="optical-budget sweep (analytic, optional MC)")
    _add_scenario_arg(p)
    p.add_argument("--ob", default=None, help="budget grid start:stop:step (dB)")
    p.add_argument("--mc", action="store_true", help="cross-check with Monte Carlo")
    p.add_argument("--duration", type=float, default=None,
                   help="simulated seconds per MC point")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("stability", help="long-duration run, per-interval report")
    _add_scenario_arg(p)
    p.add_argument("--duration", type=float, default=3600.0,
                   help="simulated run length in seconds")
    p.add_argument("--interval", type=float, default=10.0,
                   help="report interval in seconds")
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("spectrum", help="export the composite PSD at a tap point")
    _add_scenario_arg(p)
    p.add_argument("--tap", required=True,
                   choices=["alpha", "beta", "gamma", "delta"])
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")

    p = sub.add_parser("calibrate", help="fit system parameters and write them")
    p.add_argument("--out", default="calibrated_params.yaml")

    p = sub.add_parser("simulate", help="write a simulated QTT1 timetag file")
    _add_scenario_arg(p)
    p.add_argument("--ob", type=float, default=None, help="optical budget (dB)")
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--out", required=True, help="QTT1 output path")

    p = sub.add_parser("sift", help="run the processing stack on a tag stream")
    _add_scenario_arg(p)
    p.add_argument("--in", dest="infile", default=None,
                   help="QTT1 file (omit with --stdin)")
    p.add_argument("--stdin", action="store_true",
                   help="read a length-prefixed framed stream from stdin")
    p.add_argument("--duration", type=float, required=True,
                   help="stream duration in seconds (rate denominator)")
    p.add_argument("--ob", type=float, default=0.0, help="budget label for CSV rows")
    p.add_argument("--csv", action="store_true", help="emit CSV rows only")

    p = sub.add_parser("benchmark", help="single-core pipeline throughput")
    p.add_argument("--tags", type=int, default=8_000_000)

    args = parser.parse_args(argv)

    if args.cmd == "sweep":
        scenario = load_scenario(args.scenario, seed=args.seed)
        if args.ob is not None:
            from dataclasses import replace
            scenario = replace(scenario, ob_db=_parse_ob(args.ob))
        report = harness.run_sweep(scenario, mc=args.mc,
                                   mc_duration_s=args.duration,
                                   workers=args.workers, outdir=args.out)
        th = report.threshold
        if th.status == "crossed":
            print(f"QBER threshold crossing at OB {th.ob_db:.2f} dB")
        elif th.status == "above_at_zero":
            print("QBER above threshold already at OB 0 dB")
        else:
            print("QBER threshold never crossed within the modeled range")
        print(f"wrote outputs for {len(report.points)} grid points to {args.out}")
        return 0

    if args.cmd == "stability":
        scenario = load_scenario(args.scenario, seed=args.seed)
        report = harness.run_stability(scenario, args.duration, args.interval,
                                       outdir=args.out)
        rates = [r.raw_kbps for r in report.intervals]
        qbers = [r.qber for r in report.intervals]
        print(f"{len(report.intervals)} intervals; mean rate "
              f"{np.mean(rates):.2f} kb/s; QBER "
              f"{min(qbers):.4f}..{max(qbers):.4f}")
        return 0

    if args.cmd == "spectrum":
        scenario = load_scenario(args.scenario, seed=args.seed)
        grid, psd = harness.export_tap_spectrum(scenario, args.tap, args.out)
        if args.out is None:
            print("wavelength_nm,psd_dbm_per_nm")
            for wl, value in zip(grid, psd):
                print(f"{wl:.1f},{value:.4f}")
        else:
            print(f"wrote {len(grid)} grid points to {args.out}")
        return 0

    if args.cmd == "calibrate":
        params = harness.run_calibration(args.out)
        print(params.to_yaml(), end="")
        print(f"wrote {args.out}")
        return 0

    if args.cmd == "simulate":
        scenario = load_scenario(args.scenario, seed=args.seed)
        ob = args.ob if args.ob is not None else float(scenario.ob_db)
        duration = args.duration if args.duration is not None else scenario.duration_s
        noise = scenario.noise_budget()
        records, _ = harness.simulate_tags(scenario, ob, duration,
                                           (scenario.seed, 0x0B, 0), noise)
        timetags.write_qtt(args.out, records)
        print(f"wrote {len(records)} tags ({duration:g} s simulated) to {args.out}")
        return 0

    if args.cmd == "sift":
        scenario = load_scenario(args.scenario, seed=args.seed)
        if args.stdin:
            records = timetags.read_framed(sys.stdin.buffer)
        elif args.infile:
            _, records = timetags.read_qtt(args.infile)
        else:
            parser.error("sift needs --in FILE or --stdin")
        alice = SymbolStream(scenario.source)
        _, result = process_stream(records, alice, scenario.processor,
                                   args.duration, label=scenario.name)
        if args.csv:
            print(postproc.SIFT_CSV_HEADER)
            for row in postproc.sift_csv_rows(result, args.ob):
                print(row)
        else:
            print(postproc.format_summary(result))
        return 0

    if args.cmd == "benchmark":
        stats = throughput_benchmark(args.tags)
        print(f"pipeline: {stats['tags_per_s'] / 1e6:.2f} Mtags/s "
              f"(parse {stats['parse_s']:.3f} s, gate+sift "
              f"{stats['gate_sift_s']:.3f} s for {stats['n_tags']} tags; "
              f"acquisition adds {stats['sync_s']:.3f} s)")
        return 0

    return 1


if __name__ == "__main__":
    raise SystemExit(main())
