"""Scenario files, full evaluations, persisted results and reference comparison."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import platform
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType

import numpy as np

from . import __version__
from .channel_plan import ChannelPlan, plan_from_dict
from .constellation import GmiTable, build_gmi_table, load_constellation
from .errors import ConfigError, HcfError
from .fiber_model import FiberProfile, data_path, load_profile
from .link_budget import AmplifierSpec, DirectionalScenario, calibrate_trx_snr, combine_snr, evaluate_scenario
from .rate_adaptation import (
    ChannelResult,
    FecModel,
    ThroughputTable,
    aggregate,
    decoded_data_rate,
    gmi_data_rate,
)

MODES = ("bidi", "unidi")
CSV_COLUMNS = (
    "channel_id", "direction", "band", "freq_hz", "snr_db", "format", "code_rate", "gmi_gbps",
    "decoded_gbps", "excluded", "snr_trx_db", "snr_ase_db", "snr_rb_db", "snr_leak_db", "gmi_bits",
)


# -- scenario ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    mode: str
    seed: int
    plan: ChannelPlan
    fiber: FiberProfile
    amplifiers: dict  # band -> AmplifierSpec
    trx_snr: dict  # band -> dB
    circulator_directivity: float
    extras_loss: float
    pilot_overhead: float
    fec: FecModel
    constellations: dict  # cardinality -> Constellation
    gmi_samples: int
    gmi_snr_grid: tuple
    trx_source: str = "scenario"
    raw: dict = field(default_factory=dict, repr=False)
    base_dir: Path | None = None

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def directional(self, direction: str = "FW") -> DirectionalScenario:
        return DirectionalScenario(
            plan=self.plan,
            fiber=self.fiber,
            amplifiers=self.amplifiers,
            trx_snr=self.trx_snr,
            circulator_directivity=self.circulator_directivity,
            direction=direction,
            extras_loss=self.extras_loss,
            unidi=self.mode == "unidi",
        )

    def with_overrides(self, *, seed: int | None = None, mode: str | None = None,
                       trx_snr: dict | None = None, ngmi_gap: float | None = None) -> "Scenario":
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = int(seed)
        if mode is not None:
            raw["mode"] = mode
        if trx_snr is not None:
            raw["trx_snr"] = {b: float(v) for b, v in trx_snr.items()}
        if ngmi_gap is not None:
            raw.setdefault("fec", {})["ngmi_gap"] = float(ngmi_gap)
        return scenario_from_dict(raw, self.base_dir)


def _resolve(name, base_dir: Path | None) -> Path | None:
    p = Path(name)
    candidates = [p] if p.is_absolute() else ([base_dir / p] if base_dir else []) + [p, data_path(str(p))]
    for c in candidates:
        if c.is_file():
            return c
    return None


def _number(section: dict, key: str, path: str, errors: list, *, default=None, check=None, msg=""):
    if key not in section:
        if default is None:
            errors.append((path, "missing"))
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append((path, f"must be a number, got {v!r}"))
        return default
    if check is not None and not check(v):
        errors.append((path, msg or f"invalid value {v!r}"))
        return default
    return float(v)


_BAND_FIELDS = ("name", "start_frequency_hz", "bandwidth_hz", "channel_count", "launch_power_fw_dbm")


def _load_plan(sec, mode, errors):
    if not isinstance(sec, dict):
        errors.append(("plan", "missing or not an object"))
        return None, []
    bands = sec.get("bands", [])
    if not isinstance(bands, list):
        errors.append(("plan.bands", "must be a list"))
        return None, []
    names, ok = [], True
    bands = copy.deepcopy(bands)
    for i, b in enumerate(bands):
        if not isinstance(b, dict):
            errors.append((f"plan.bands[{i}]", "must be an object"))
            ok = False
            continue
        for key in _BAND_FIELDS:
            if key not in b:
                errors.append((f"plan.bands[{i}].{key}", "missing"))
                ok = False
        if "launch_power_bw_dbm" not in b:
            if mode == "bidi":
                errors.append((f"plan.bands[{i}].launch_power_bw_dbm", "required in bidi mode"))
                ok = False
            else:
                b["launch_power_bw_dbm"] = b.get("launch_power_fw_dbm", 0.0)
        if "name" in b:
            names.append(str(b["name"]))
    if not ok:
        return None, names
    try:
        return plan_from_dict({**sec, "bands": bands}), names
    except ConfigError as exc:
        errors.extend(exc.errors or [("plan", str(exc))])
    except (HcfError, ValueError, TypeError) as exc:
        errors.append(("plan", str(exc)))
    return None, names


def _load_fiber(sec, base_dir, errors):
    if not isinstance(sec, dict):
        errors.append(("fiber", "missing or not an object"))
        return None
    length = _number(sec, "length_km", "fiber.length_km", errors, check=lambda v: v >= 0, msg="must be >= 0")
    files = {}
    for key, required in (("attenuation_csv", True), ("rb_csv", True), ("gas_lines_csv", False)):
        if key not in sec:
            if required:
                errors.append((f"fiber.{key}", "missing"))
            continue
        path = _resolve(sec[key], base_dir)
        if path is None:
            errors.append((f"fiber.{key}", f"file not found: {sec[key]}"))
        files[key] = path
    rb_column = sec.get("rb_column", "hcf")
    if rb_column not in ("hcf", "smf"):
        errors.append(("fiber.rb_column", f"must be 'hcf' or 'smf', got {rb_column!r}"))
    if length is None or None in files.values() or "attenuation_csv" not in files or "rb_csv" not in files:
        return None
    try:
        return load_profile(files["attenuation_csv"], files["rb_csv"], files.get("gas_lines_csv"),
                            length=length, rb_column=rb_column)
    except ConfigError as exc:
        errors.extend((f"fiber.{p}", m) for p, m in (exc.errors or [("", str(exc))]))
    except (KeyError, ValueError, HcfError) as exc:
        errors.append(("fiber", f"could not parse data files: {exc}"))
    return None


def scenario_from_dict(raw: dict, base_dir: Path | None = None) -> Scenario:
    """Validate a scenario mapping, reporting every problem at once."""
    errors: list[tuple[str, str]] = []
    if not isinstance(raw, dict):
        raise ConfigError("invalid scenario", [("", "top level must be an object")])
    mode = raw.get("mode", "bidi")
    if mode not in MODES:
        errors.append(("mode", f"must be one of {MODES}, got {mode!r}"))
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        errors.append(("seed", "must be a non-negative integer"))

    plan, band_names = _load_plan(raw.get("plan"), mode, errors)
    if plan is not None:
        band_names = [b.name for b in plan.bands]
    fiber = _load_fiber(raw.get("fiber"), base_dir, errors)

    amps = {}
    amp_sec = raw.get("amplifiers", {})
    if not isinstance(amp_sec, dict):
        errors.append(("amplifiers", "must be an object"))
        amp_sec = {}
    for b in band_names:
        a = amp_sec.get(b)
        if not isinstance(a, dict):
            errors.append((f"amplifiers.{b}", "missing"))
            continue
        nf = _number(a, "noise_figure_db", f"amplifiers.{b}.noise_figure_db", errors,
                     check=lambda v: v > 0, msg="must be > 0")
        pmax = _number(a, "max_output_power_dbm", f"amplifiers.{b}.max_output_power_dbm", errors)
        if nf is not None and pmax is not None:
            amps[b] = AmplifierSpec(b, nf, pmax, a.get("gain_mode", "fixed-output-power"))

    trx = {}
    trx_sec = raw.get("trx_snr", {})
    if not isinstance(trx_sec, dict):
        errors.append(("trx_snr", "must be an object"))
        trx_sec = {}
    for b in band_names:
        v = _number(trx_sec, b, f"trx_snr.{b}", errors)
        if v is not None:
            trx[b] = v

    directivity = _number(raw, "circulator_directivity_db", "circulator_directivity_db", errors, default=50.0,
                          check=lambda v: v > 0, msg="must be > 0")
    extras = _number(raw, "extras_loss_db", "extras_loss_db", errors, default=4.0,
                     check=lambda v: v >= 0, msg="must be >= 0")
    overhead = _number(raw, "pilot_overhead", "pilot_overhead", errors, default=0.04,
                       check=lambda v: 0 <= v < 1, msg="must lie in [0, 1)")

    fec = None
    fec_sec = raw.get("fec", {})
    try:
        fec = FecModel(**fec_sec)
    except ConfigError as exc:
        errors.extend(exc.errors or [("fec", str(exc))])
    except TypeError as exc:
        errors.append(("fec", str(exc)))

    consts = {}
    for key, name in (raw.get("constellations") or {}).items():
        path = _resolve(name, base_dir)
        if path is None:
            errors.append((f"constellations.{key}", f"file not found: {name}"))
            continue
        try:
            c = load_constellation(path)
        except (HcfError, ValueError, KeyError) as exc:
            errors.append((f"constellations.{key}", str(exc)))
            continue
        if str(c.cardinality) != str(key):
            errors.append((f"constellations.{key}", f"file holds {c.cardinality} points"))
            continue
        consts[c.cardinality] = c
    if not consts:
        errors.append(("constellations", "at least one constellation is required"))

    gmi_sec = raw.get("gmi", {})
    samples = gmi_sec.get("samples", 100_000)
    if isinstance(samples, bool) or not isinstance(samples, int) or samples < 1:
        errors.append(("gmi.samples", "must be a positive integer"))
    grid = gmi_sec.get("snr_grid_db", list(range(0, 34, 2)))
    if not isinstance(grid, list) or len(grid) < 2 or not all(isinstance(g, (int, float)) for g in grid):
        errors.append(("gmi.snr_grid_db", "need at least two numbers"))
        grid = []

    if errors:
        raise ConfigError("invalid scenario", errors)
    return Scenario(
        name=str(raw.get("name", "scenario")),
        mode=mode,
        seed=seed,
        plan=plan,
        fiber=fiber,
        amplifiers=amps,
        trx_snr=trx,
        circulator_directivity=directivity,
        extras_loss=extras,
        pilot_overhead=overhead,
        fec=fec,
        constellations=consts,
        gmi_samples=samples,
        gmi_snr_grid=tuple(float(g) for g in grid),
        trx_source=str(raw.get("trx_calibration_source", "scenario")),
        raw=copy.deepcopy(raw),
        base_dir=base_dir,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("scenario file not found", [("", str(path))])
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("scenario is not valid JSON", [(f"line {exc.lineno}", exc.msg)]) from exc
    return scenario_from_dict(raw, path.resolve().parent)


def bundled_scenario() -> Scenario:
    """The bundled 60 km OESCL bi-directional scenario."""
    return load_scenario(data_path("paper.json"))


# -- evaluation -------------------------------------------------------------

def scenario_gmi_table(scenario: Scenario, jobs: int = 1) -> GmiTable:
    return build_gmi_table(scenario.constellations.values(), scenario.gmi_snr_grid,
                           scenario.gmi_samples, seed=scenario.seed, jobs=jobs)


def assign_rates(results, table: GmiTable, scenario: Scenario) -> None:
    """Fill format, code rate and data rates of included channels in place."""
    live = [r for r in results if not r.excluded]
    if not live:
        return
    M, g, rate = table.best_format_array(np.array([r.snr_total for r in live]), scenario.fec)
    rs = scenario.plan.symbol_rate
    for r, Mi, gi, ri in zip(live, M, g, rate):
        m = table.constellations[int(Mi)].m
        r.format = int(Mi)
        r.code_rate = float(ri)
        r.gmi_bits = float(gi)
        r.gmi_rate = gmi_data_rate(rs, float(gi), scenario.pilot_overhead)
        r.decoded_rate = decoded_data_rate(rs, m, float(ri), scenario.pilot_overhead)


def evaluate(scenario: Scenario, table: GmiTable, jobs: int = 1) -> list[ChannelResult]:
    results = evaluate_scenario(scenario.directional("FW"), unidi=scenario.mode == "unidi", jobs=jobs)
    for r in results:
        r.scenario_id = scenario.config_hash[:12]
    assign_rates(results, table, scenario)
    return results


def penalty_summary(results) -> dict:
    """Mean and max Bi-Di SNR penalty (dB) over included channels."""
    pen = [combine_snr(r.snr.snr_trx, r.snr.snr_ase) - r.snr_total for r in results if not r.excluded]
    if not pen:
        return {"mean_db": 0.0, "max_db": 0.0, "n": 0}
    return {"mean_db": float(np.mean(pen)), "max_db": float(np.max(pen)), "n": len(pen)}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return f"{v:.6g}"


def results_csv(results, table: GmiTable | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        s = r.snr
        if not r.format:
            name = "none"
        elif table is not None and r.format in table.constellations:
            name = table.constellations[r.format].name
        else:
            name = str(r.format)
        row = [r.channel_id, r.direction, r.band, r.frequency, r.snr_total, name, r.code_rate,
               r.gmi_rate / 1e9, r.decoded_rate / 1e9, r.excluded, s.snr_trx, s.snr_ase, s.snr_rb, s.snr_leak,
               r.gmi_bits]
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def aggregate_json(scenario: Scenario, table: ThroughputTable, penalty: dict) -> dict:
    out = {"scenario": scenario.name, "config_hash": scenario.config_hash, "mode": scenario.mode,
           "seed": scenario.seed}
    out.update(table.to_json())
    out["bidi_penalty"] = penalty
    return out


def _versions() -> dict:
    import numba
    import scipy

    return {"hcfbidi": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


@dataclass
class RunResult:
    results: list
    table: ThroughputTable
    penalty: dict
    gmi_table: GmiTable
    files: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    @property
    def csv_text(self) -> str:
        return results_csv(self.results, self.gmi_table)


def run(scenario: Scenario, out_dir=None, *, jobs: int = 1, gmi_table: GmiTable | None = None) -> RunResult:
    """Evaluate every channel and, with ``out_dir``, write CSV, aggregate JSON and manifest."""
    table = gmi_table if gmi_table is not None else scenario_gmi_table(scenario, jobs)
    results = evaluate(scenario, table, jobs)
    agg = aggregate(results)
    pen = penalty_summary(results)
    res = RunResult(results, agg, pen, table)
    if out_dir is None:
        return res
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    texts = {
        "channels.csv": res.csv_text,
        "aggregate.json": json.dumps(aggregate_json(scenario, agg, pen), indent=2, sort_keys=True) + "\n",
    }
    for name, text in texts.items():
        (out / name).write_text(text)
        res.files[name] = out / name
    res.manifest = {
        "scenario": scenario.name,
        "config_hash": scenario.config_hash,
        "seed": scenario.seed,
        "mode": scenario.mode,
        "config": scenario.raw,
        "versions": _versions(),
        "outputs": {n: hashlib.sha256(t.encode()).hexdigest() for n, t in texts.items()},
    }
    (out / "manifest.json").write_text(json.dumps(res.manifest, indent=2, sort_keys=True) + "\n")
    res.files["manifest.json"] = out / "manifest.json"
    return res


# -- reference values and comparison ----------------------------------------

METRICS = ("gmi_tbps", "decoded_tbps")


@dataclass(frozen=True)
class ReferenceTable:
    bands: MappingProxyType  # band -> {metric: Tb/s}
    directions: MappingProxyType  # direction -> {metric: Tb/s}
    penalty_bound_db: float
    provenance: tuple = ()

    @property
    def total(self) -> dict:
        return {m: sum(v[m] for v in self.bands.values()) for m in METRICS}


def _freeze(d: dict) -> MappingProxyType:
    return MappingProxyType({k: MappingProxyType(dict(v)) for k, v in d.items()})


def load_reference(path=None) -> ReferenceTable:
    """Read a reference CSV (``kind,key,metric,value``; ``#`` lines are provenance)."""
    path = Path(path) if path is not None else data_path("reference.csv")
    if not path.is_file():
        raise ConfigError("reference file not found", [("reference", str(path))])
    provenance, rows = [], []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            provenance.append(line.lstrip("# ").rstrip())
        elif line.strip():
            rows.append(line)
    bands, dirs, bound, errors = {}, {}, None, []
    for i, r in enumerate(csv.DictReader(rows)):
        try:
            kind, key, metric, value = r["kind"], r["key"], r["metric"], float(r["value"])
        except (KeyError, TypeError, ValueError):
            errors.append((f"row {i + 1}", "need kind,key,metric,value"))
            continue
        if kind == "band" and metric in METRICS:
            bands.setdefault(key, {})[metric] = value
        elif kind == "direction" and metric in METRICS:
            dirs.setdefault(key, {})[metric] = value
        elif kind == "penalty" and key == "mean":
            bound = value
        else:
            errors.append((f"row {i + 1}", f"unknown entry {kind}/{key}/{metric}"))
    for name, group in (("band", bands), ("direction", dirs)):
        for k, v in group.items():
            if set(v) != set(METRICS):
                errors.append((f"{name}.{k}", f"need both {METRICS}"))
    if errors:
        raise ConfigError("invalid reference table", errors)
    return ReferenceTable(_freeze(bands), _freeze(dirs), bound if bound is not None else math.nan,
                          tuple(provenance))


@dataclass(frozen=True)
class CompareCell:
    kind: str
    key: str
    metric: str
    value: float
    reference: float
    rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.rel_error <= self.tolerance

    @property
    def label(self) -> str:
        return f"{self.kind}.{self.key}.{self.metric}"


@dataclass(frozen=True)
class CompareReport:
    cells: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cells)

    @property
    def failures(self) -> list:
        return [c for c in self.cells if not c.passed]

    def lines(self) -> list[str]:
        return [f"{'PASS' if c.passed else 'FAIL'} {c.label}: {c.value:.2f} vs {c.reference:.2f} "
                f"({100 * c.rel_error:.2f} % {'<=' if c.passed else '>'} {100 * c.tolerance:.2f} %)" for c in self.cells]

    def to_json(self) -> dict:
        return {"passed": self.passed,
                "cells": [{"cell": c.label, "value": c.value, "reference": c.reference,
                           "rel_error": c.rel_error, "tolerance": c.tolerance, "passed": c.passed}
                          for c in self.cells]}


def _as_nested(results) -> dict:
    if isinstance(results, ThroughputTable):
        results = results.to_json()
    return {"band": results.get("bands", {}), "direction": results.get("directions", {})}


def _tolerance(tolerances, kind: str, metric: str) -> float:
    if isinstance(tolerances, (int, float)):
        return float(tolerances)
    for key in (f"{kind}.{metric}", metric, "default"):
        if key in tolerances:
            return float(tolerances[key])
    raise ConfigError("no tolerance for cell", [(f"tolerances.{kind}.{metric}", "missing")])


DEFAULT_TOLERANCES = MappingProxyType({"gmi_tbps": 0.02, "decoded_tbps": 0.03})


def compare(results, reference: ReferenceTable, tolerances=DEFAULT_TOLERANCES, *, kinds=("band", "direction"),
            metrics=METRICS) -> CompareReport:
    """Relative error of every (band or direction, metric) cell against ``reference``.

    ``results`` is a ThroughputTable or its JSON form. Cells are ordered by
    name, so the verdict does not depend on band order.
    """
    got = _as_nested(results)
    ref = {"band": reference.bands, "direction": reference.directions}
    if "band" in kinds and set(got["band"]) != set(ref["band"]):
        raise ConfigError("band sets differ", [("bands", f"results {sorted(got['band'])} vs reference "
                                                          f"{sorted(ref['band'])}")])
    cells = []
    for kind in kinds:
        for key in sorted(ref[kind]):
            if key not in got[kind]:
                raise ConfigError("missing result group", [(f"{kind}.{key}", "missing")])
            for metric in metrics:
                v, r = float(got[kind][key][metric]), float(ref[kind][key][metric])
                err = abs(v - r) / abs(r) if r else (0.0 if v == 0 else math.inf)
                cells.append(CompareCell(kind, key, metric, v, r, err, _tolerance(tolerances, kind, metric)))
    return CompareReport(tuple(cells))


# -- calibration ------------------------------------------------------------

@dataclass(frozen=True)
class Calibration:
    trx_snr: dict  # band -> dB
    ngmi_gap: float
    band_gmi_tbps: dict
    decoded_total_tbps: float


def band_gmi_metric(table: GmiTable, scenario: Scenario, fec: FecModel):
    """Band GMI throughput (Tb/s) of an array of channel SNRs, for :func:`calibrate_trx_snr`."""
    scale = 2 * scenario.plan.symbol_rate * (1 - scenario.pilot_overhead) / 1e12

    def metric(snr):
        _, g, _ = table.best_format_array(snr, fec)
        return float(np.sum(g)) * scale
    return metric


def _decoded_total_fn(scenario: Scenario, table: GmiTable):
    """Decoded total (Tb/s) as a function of the FEC gap; channel SNRs do not depend on it."""
    res = evaluate_scenario(scenario.directional("FW"), unidi=scenario.mode == "unidi")
    snr = np.array([r.snr_total for r in res if not r.excluded])
    scale = 2 * scenario.plan.symbol_rate * (1 - scenario.pilot_overhead) / 1e12
    m_of = {M: c.m for M, c in table.constellations.items()}

    def total(gap):
        M, _, r = table.best_format_array(snr, replace(scenario.fec, ngmi_gap=gap))
        return float(np.sum(np.array([m_of[int(x)] for x in M]) * r)) * scale
    return total


def _bisect(f, target, lo, hi, increasing=True, tol=1e-6, max_iter=200):
    """Root of f(x) = target on [lo, hi]; clamps to the nearer end when unbracketed."""
    sign = 1 if increasing else -1
    if sign * (target - f(lo)) <= 0:
        return lo
    if sign * (target - f(hi)) >= 0:
        return hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if sign * (f(mid) - target) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def calibrate(scenario: Scenario, reference: ReferenceTable, table: GmiTable, *, rounds: int = 3,
              gap_bounds=(0.0, 0.4)) -> Calibration:
    """Fit the per-band transceiver SNR to the reference band GMI totals, then one global FEC gap.

    Format selection depends on the gap, which changes the GMI of the chosen
    format, so the two fits alternate for ``rounds`` rounds.
    """
    targets = {b: v["gmi_tbps"] for b, v in reference.bands.items()}
    target_decoded = sum(v["decoded_tbps"] for v in reference.directions.values())
    sc = scenario
    for _ in range(rounds):
        cal = calibrate_trx_snr(sc.directional("FW"), targets, unidi=sc.mode == "unidi",
                                band_metric=band_gmi_metric(table, sc, sc.fec))
        sc = sc.with_overrides(trx_snr=cal.trx_snr)
        total = _decoded_total_fn(sc, table)
        gap = _bisect(total, target_decoded, *gap_bounds, increasing=False, tol=1e-6)
        sc = sc.with_overrides(ngmi_gap=gap)
    return Calibration(
        trx_snr=dict(sc.trx_snr),
        ngmi_gap=sc.fec.ngmi_gap,
        band_gmi_tbps=dict(cal.achieved),
        decoded_total_tbps=_decoded_total_fn(sc, table)(sc.fec.ngmi_gap),
    )


# -- sweeps -----------------------------------------------------------------

def _set_path(raw: dict, dotted: str, value) -> None:
    node = raw
    parts = dotted.split(".")
    for p in parts[:-1]:
        if isinstance(node, list):
            node = node[int(p)]
        else:
            node = node.setdefault(p, {})
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def sweep(scenario: Scenario, param: str, values, table: GmiTable, jobs: int = 1) -> list[dict]:
    """Totals and Bi-Di penalty versus one scenario parameter given as a dotted path."""
    rows = []
    for v in values:
        raw = copy.deepcopy(scenario.raw)
        _set_path(raw, param, v)
        sc = scenario_from_dict(raw, scenario.base_dir)
        res = evaluate(sc, table, jobs)
        agg = aggregate(res)
        pen = penalty_summary(res)
        row = {"param": param, "value": v}
        for d in ("FW", "BW"):
            t = agg.directions.get(d)
            row[f"gmi_tbps_{d}"] = t.gmi / 1e12 if t else 0.0
            row[f"decoded_tbps_{d}"] = t.decoded / 1e12 if t else 0.0
        row["penalty_mean_db"] = pen["mean_db"]
        row["penalty_max_db"] = pen["max_db"]
        rows.append(row)
    return rows


def rows_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(rows[0]))
    for r in rows:
        w.writerow([_fmt(v) for v in r.values()])
    return buf.getvalue()
