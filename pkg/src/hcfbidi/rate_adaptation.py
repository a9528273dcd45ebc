"""GMI/NGMI to net data rate, with code-rate puncturing and throughput sums."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidArgument

_EPS = 1e-9


@dataclass(frozen=True)
class FecModel:
    """Threshold FEC: rate ``R`` decodes iff ``NGMI >= R + ngmi_gap``."""

    rate_granularity: float = 0.01
    min_rate: float = 0.50
    max_rate: float = 0.95
    ngmi_gap: float = 0.02

    def __post_init__(self):
        if not 0 < self.min_rate <= self.max_rate < 1:
            raise ConfigError("invalid FEC rate bounds",
                              [("fec", f"need 0 < min_rate <= max_rate < 1, got {self.min_rate}, {self.max_rate}")])
        if self.rate_granularity <= 0:
            raise ConfigError("invalid FEC granularity", [("fec.rate_granularity", "must be > 0")])
        if self.ngmi_gap < 0:
            raise ConfigError("invalid FEC gap", [("fec.ngmi_gap", "must be >= 0")])


@dataclass
class ChannelResult:
    channel_id: int
    direction: str
    band: str
    frequency: float
    snr: object = None  # link_budget.SnrBreakdown
    format: int = 0  # cardinality of the selected constellation, 0 if none
    gmi_rate: float = 0.0  # bit/s
    decoded_rate: float = 0.0  # bit/s
    code_rate: float = 0.0
    gmi_bits: float = 0.0  # GMI per 2D symbol of the selected format
    excluded: bool = False
    scenario_id: str = ""

    @property
    def snr_total(self) -> float:
        return self.snr.snr_total if self.snr is not None else math.nan


def max_code_rate(ngmi: float, fec: FecModel) -> float:
    """Largest punctured code rate on the grid that still decodes; 0 if none."""
    headroom = ngmi - fec.ngmi_gap - fec.min_rate
    if headroom < -_EPS:
        return 0.0
    k_max = math.floor((fec.max_rate - fec.min_rate) / fec.rate_granularity + _EPS)
    k = min(math.floor(headroom / fec.rate_granularity + _EPS), k_max)
    return round(fec.min_rate + k * fec.rate_granularity, 12)


def code_rate_grid(fec: FecModel) -> np.ndarray:
    """All punctured rates ``min_rate + k * granularity`` up to ``max_rate``."""
    k_max = math.floor((fec.max_rate - fec.min_rate) / fec.rate_granularity + _EPS)
    return np.array([round(fec.min_rate + k * fec.rate_granularity, 12) for k in range(k_max + 1)])


def max_code_rate_array(ngmi_values, fec: FecModel) -> np.ndarray:
    """Vectorised :func:`max_code_rate`."""
    grid = code_rate_grid(fec)
    headroom = np.asarray(ngmi_values, dtype=float) - fec.ngmi_gap - fec.min_rate
    k = np.minimum(np.floor(headroom / fec.rate_granularity + _EPS), len(grid) - 1)
    ok = headroom >= -_EPS
    return np.where(ok, grid[np.clip(k, 0, None).astype(int)], 0.0)


def ngmi(gmi: float, m: int) -> float:
    """Normalised GMI ``1 - (m - gmi)/m``, clipped to [0, 1]."""
    return min(max(1.0 - (m - gmi) / m, 0.0), 1.0)


def gmi_data_rate(symbol_rate: float, gmi_2d: float, pilot_overhead: float) -> float:
    """Dual-polarisation GMI rate in bit/s, net of pilots."""
    if not 0 <= pilot_overhead < 1:
        raise InvalidArgument("pilot overhead must lie in [0, 1)")
    return 2.0 * symbol_rate * gmi_2d * (1.0 - pilot_overhead)


def decoded_data_rate(symbol_rate: float, m: int, code_rate: float, pilot_overhead: float) -> float:
    if not 0 <= pilot_overhead < 1:
        raise InvalidArgument("pilot overhead must lie in [0, 1)")
    return 2.0 * symbol_rate * m * code_rate * (1.0 - pilot_overhead)


@dataclass
class Throughput:
    gmi: float = 0.0  # bit/s
    decoded: float = 0.0

    def add(self, r: ChannelResult) -> None:
        self.gmi += r.gmi_rate
        self.decoded += r.decoded_rate

    def as_tbps(self) -> dict:
        return {"gmi_tbps": self.gmi / 1e12, "decoded_tbps": self.decoded / 1e12}


@dataclass
class ThroughputTable:
    bands: dict = field(default_factory=dict)  # band -> Throughput, both directions
    directions: dict = field(default_factory=dict)  # direction -> Throughput
    band_direction: dict = field(default_factory=dict)  # (band, direction) -> Throughput
    total: Throughput = field(default_factory=Throughput)

    def to_json(self) -> dict:
        return {
            "bands": {b: t.as_tbps() for b, t in self.bands.items()},
            "directions": {d: t.as_tbps() for d, t in self.directions.items()},
            "band_direction": {f"{b}/{d}": t.as_tbps() for (b, d), t in self.band_direction.items()},
            "total": self.total.as_tbps(),
        }


_BAND_ORDER = {b: i for i, b in enumerate("OESCL")}


def aggregate(results, grouping: str = "all") -> ThroughputTable:
    """Sum GMI and decoded rates of non-excluded channels.

    ``grouping`` is one of ``band``, ``direction``, ``total`` or ``all``; the
    table always carries the grand total.
    """
    if grouping not in ("band", "direction", "total", "all"):
        raise InvalidArgument(f"unknown grouping {grouping!r}")
    ids = {r.scenario_id for r in results}
    if len(ids) > 1:
        raise ConfigError("results from different scenarios", [("scenario_id", ", ".join(sorted(ids)))])

    ordered = sorted(results, key=lambda r: (_BAND_ORDER.get(r.band, 99), r.band, r.direction, r.channel_id))
    table = ThroughputTable()
    for r in ordered:
        if r.excluded:
            continue
        table.total.add(r)
        if grouping in ("band", "all"):
            table.bands.setdefault(r.band, Throughput()).add(r)
        if grouping in ("direction", "all"):
            table.directions.setdefault(r.direction, Throughput()).add(r)
        if grouping == "all":
            table.band_direction.setdefault((r.band, r.direction), Throughput()).add(r)
    return table
