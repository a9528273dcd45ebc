"""Command-line entry point: ``hcfbidi <subcommand> ...``.

Exit codes: 0 success, 1 comparison failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from .channel_plan import BAND_NAMES
from .constellation import gmi_monte_carlo, load_constellation, optimize_shaping, save_constellation, square_qam
from .errors import ConfigError, HcfError
from .reporting import (
    DEFAULT_TOLERANCES,
    compare,
    load_reference,
    load_scenario,
    bundled_scenario,
    rows_csv,
    run,
    scenario_gmi_table,
    sweep,
)
from .waveform_engine import DspConfig, ImpairmentSpec, measure_channel

EXIT_OK, EXIT_COMPARE_FAIL, EXIT_CONFIG = 0, 1, 2


def _scenario(args):
    sc = load_scenario(args.scenario) if args.scenario else bundled_scenario()
    if args.seed is not None or args.mode is not None:
        sc = sc.with_overrides(seed=args.seed, mode=args.mode)
    return sc


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError("expected a comma-separated list of numbers", [("values", text)]) from exc


def _constellation(spec: str):
    """A CSV path, or ``square:M`` for Gray square QAM."""
    if spec.startswith("square:"):
        return square_qam(int(spec.split(":", 1)[1]))
    if not Path(spec).is_file():
        raise ConfigError("constellation file not found", [("constellation", spec)])
    return load_constellation(spec)


# -- subcommands -----------------------------------------------------------

def cmd_plan(args) -> int:
    sc = _scenario(args)
    plan = sc.plan
    lines = ["channel_id,band,freq_hz,excluded"]
    for i in range(plan.n_channels):
        lines.append(f"{i},{plan.band_of(i).name},{float(plan.frequencies[i]):.1f},"
                     f"{'true' if plan.is_excluded(i) else 'false'}")
    if args.out:
        _write(args.out, "\n".join(lines) + "\n")
    counts = plan.counts()
    order = [b for b in BAND_NAMES if b in counts]
    print(f"channels: {plan.n_channels} per direction, total bandwidth {float(plan.total_bandwidth) / 1e12:.4g} THz")
    for b in order:
        print(f"  {b}: {counts[b]} channels")
    print(f"excluded: {list(plan.excluded_channels)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    out = args.out or "results"
    res = run(sc, out, jobs=args.jobs)
    for d, t in sorted(res.table.directions.items()):
        print(f"{d}: GMI {t.gmi / 1e12:.1f} Tb/s, decoded {t.decoded / 1e12:.1f} Tb/s")
    t = res.table.total
    print(f"total: GMI {t.gmi / 1e12:.1f} Tb/s, decoded {t.decoded / 1e12:.1f} Tb/s")
    print(f"Bi-Di penalty: mean {res.penalty['mean_db']:.3f} dB, max {res.penalty['max_db']:.3f} dB")
    print(f"wrote {', '.join(str(p) for p in res.files.values())}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    values = [json.loads(v) for v in args.values.split(",")]
    table = scenario_gmi_table(sc, args.jobs)
    rows = sweep(sc, args.param, values, table, jobs=args.jobs)
    _write(args.out, rows_csv(rows))
    return EXIT_OK


def cmd_gmi(args) -> int:
    c = _constellation(args.constellation)
    lines = ["snr_db,gmi,std_error,n_samples"]
    seed = args.seed if args.seed is not None else 0
    for i, s in enumerate(_floats(args.snr_db)):
        est = gmi_monte_carlo(c, s, args.samples, seed=np.random.SeedSequence([seed, i]))
        lines.append(f"{s:.6g},{est.gmi:.6g},{est.std_error:.6g},{est.n_samples}")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def _from_dict(cls, d: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"unknown {path} fields", [(f"{path}.{k}", "unknown") for k in unknown])
    return cls(**d)


def cmd_waveform(args) -> int:
    cfg_raw = {}
    if args.config:
        p = Path(args.config)
        if not p.is_file():
            raise ConfigError("waveform config not found", [("config", args.config)])
        try:
            cfg_raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("waveform config is not valid JSON", [(f"line {exc.lineno}", exc.msg)]) from exc
    dsp = _from_dict(DspConfig, cfg_raw.get("dsp", {}), "dsp")
    imp_raw = dict(cfg_raw.get("impairments", {}))
    if imp_raw.get("snr_awgn") is None:
        imp_raw["snr_awgn"] = math.inf
    if "gla_lines" in imp_raw:
        from .fiber_model import GasLine
        imp_raw["gla_lines"] = tuple(GasLine(**ln) for ln in imp_raw["gla_lines"])
    imp = _from_dict(ImpairmentSpec, imp_raw, "impairments")
    c = _constellation(args.constellation)
    seed = args.seed if args.seed is not None else 0
    m = measure_channel(dsp, imp, c, n_traces=int(cfg_raw.get("n_traces", 5)), seed=seed)
    report = {
        "constellation": c.name,
        "seed": seed,
        "snr_db": m.snr,
        "gmi": m.gmi.gmi,
        "gmi_std_error": m.gmi.std_error,
        "trace_snr_db": m.trace_snr,
        "best_traces": m.best,
        "stages": [t.stage_snr for t in m.traces],
        "convergence_mse_db": [t.mse_trace for t in m.traces],
    }
    _write(args.out, json.dumps(report, indent=2, default=float) + "\n")
    return EXIT_OK


def cmd_shape(args) -> int:
    seed = args.seed if args.seed is not None else 0
    c = optimize_shaping(args.bits, args.snr_db, iterations=args.iterations, step=args.step, seed=seed)
    meta = dict(c.metadata)
    print(f"{c.name}: GMI {meta.get('gmi', float('nan')):.4f} vs square {meta.get('baseline_gmi', float('nan')):.4f}"
          f" at {args.snr_db} dB" + (" (no improvement)" if meta.get("no_improvement") else ""))
    if args.out:
        save_constellation(c, args.out, target_snr_db=args.snr_db, seed=seed)
    return EXIT_OK


def cmd_compare(args) -> int:
    path = Path(args.results)
    if path.is_dir():
        path = path / "aggregate.json"
    if not path.is_file():
        raise ConfigError("results not found", [("results", str(path))])
    results = json.loads(path.read_text())
    ref = load_reference(args.reference)
    tol = dict(DEFAULT_TOLERANCES)
    if args.tol_gmi is not None:
        tol["gmi_tbps"] = args.tol_gmi
    if args.tol_decoded is not None:
        tol["decoded_tbps"] = args.tol_decoded
    report = compare(results, ref, tol)
    for line in report.lines():
        print(line)
    if args.out:
        _write(args.out, json.dumps(report.to_json(), indent=2) + "\n")
    print("PASS" if report.passed else f"FAIL ({len(report.failures)} cells)")
    return EXIT_OK if report.passed else EXIT_COMPARE_FAIL


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario JSON (default: bundled 60 km OESCL scenario)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--mode", choices=("bidi", "unidi"), help="transmission mode override")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")

    ap = argparse.ArgumentParser(prog="hcfbidi", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("plan", parents=[common], help="channel plan summary and CSV")
    sub.add_parser("simulate", parents=[common], help="evaluate every channel, write CSV/JSON/manifest")

    p = sub.add_parser("sweep", parents=[common], help="totals versus one scenario parameter")
    p.add_argument("--param", required=True, help="dotted path, e.g. fiber.length_km")
    p.add_argument("--values", required=True, help="comma-separated JSON values")

    p = sub.add_parser("gmi", parents=[common], help="Monte-Carlo GMI of one constellation")
    p.add_argument("--constellation", required=True, help="CSV file or square:M")
    p.add_argument("--snr-db", required=True, help="comma-separated SNRs in dB")
    p.add_argument("--samples", type=int, default=100_000)

    p = sub.add_parser("waveform", parents=[common], help="best-3-of-5 waveform measurement of one channel")
    p.add_argument("--config", help="JSON with 'dsp', 'impairments' and optional 'n_traces'")
    p.add_argument("--constellation", required=True, help="CSV file or square:M")

    p = sub.add_parser("shape", parents=[common], help="optimise a geometrically shaped constellation")
    p.add_argument("--bits", type=int, required=True, help="bits per 2D symbol (4, 6, 8 or 10)")
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--iterations", type=int, default=300)
    p.add_argument("--step", type=float, default=0.1)

    p = sub.add_parser("compare", parents=[common], help="compare aggregate results with reference values")
    p.add_argument("--results", required=True, help="aggregate.json or the run directory")
    p.add_argument("--reference", help="reference CSV (default: bundled)")
    p.add_argument("--tol-gmi", type=float)
    p.add_argument("--tol-decoded", type=float)
    return ap


COMMANDS = {
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "gmi": cmd_gmi,
    "waveform": cmd_waveform,
    "shape": cmd_shape,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (HcfError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
