"""WDM channel plan: bands, grid slots and the 3-channel sliding test band."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, NotFound, PlanInconsistent, PlanOverlap

BAND_NAMES = ("O", "E", "S", "C", "L")

#: 33.33 GHz grid, kept as the exact rational 100/3 GHz.
DEFAULT_GRID_HZ = Fraction(100_000_000_000, 3)


def as_fraction(value) -> Fraction:
    """Exact rational from an int, float, Fraction or a string like ``"1e11/3"``."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        if "/" in value:
            num, den = value.split("/")
            return as_fraction(num.strip()) / as_fraction(den.strip())
        return Fraction(value.strip())
    # floats such as 33333333333.333332 snap to the nearest ratio with a small denominator
    return Fraction(value).limit_denominator(1000)


@dataclass(frozen=True)
class BandSpec:
    name: str
    start_frequency: float  # Hz, low-frequency (long-wavelength) edge
    bandwidth: float  # Hz
    channel_count: int
    launch_power_fw: float  # dBm, band total
    launch_power_bw: float  # dBm, band total

    def launch_power(self, direction: str) -> float:
        if direction == "FW":
            return self.launch_power_fw
        if direction == "BW":
            return self.launch_power_bw
        raise ValueError(f"unknown direction {direction!r}")


@dataclass(frozen=True)
class ChannelPlan:
    grid_spacing: Fraction
    symbol_rate: float
    guard_band: float
    rolloff: float
    bands: tuple[BandSpec, ...]
    excluded_channels: tuple[int, ...] = ()
    # derived, one entry per channel ordered by frequency
    frequencies: np.ndarray = field(repr=False, default=None, compare=False)
    band_index: np.ndarray = field(repr=False, default=None, compare=False)

    @property
    def n_channels(self) -> int:
        return 0 if self.frequencies is None else len(self.frequencies)

    @property
    def total_bandwidth(self) -> Fraction:
        return sum((Fraction(b.bandwidth) for b in self.bands), Fraction(0))

    def band_of(self, channel_id: int) -> BandSpec:
        _check_id(self, channel_id)
        return self.bands[int(self.band_index[channel_id])]

    def band_channels(self, name: str) -> np.ndarray:
        """Channel ids of one band, in frequency order."""
        for i, b in enumerate(self.bands):
            if b.name == name:
                return np.flatnonzero(self.band_index == i)
        raise NotFound(name)

    def is_excluded(self, channel_id: int) -> bool:
        return channel_id in self._excluded_set

    @property
    def _excluded_set(self) -> frozenset:
        return frozenset(self.excluded_channels)

    def counts(self) -> dict[str, int]:
        return {b.name: b.channel_count for b in self.bands}


def grid_slots(bandwidth, grid_spacing) -> int:
    """Number of whole grid slots in ``bandwidth`` (floor division, exact)."""
    return math.floor(as_fraction(bandwidth) / as_fraction(grid_spacing))


def build_plan(
    bands,
    grid_spacing=DEFAULT_GRID_HZ,
    symbol_rate: float = 32e9,
    *,
    guard_band: float = 1.33e9,
    rolloff: float = 0.01,
    excluded_channels=(),
) -> ChannelPlan:
    """Lay channels on the grid, band by band, and validate the result.

    Channel ids are global and increase with frequency. Channel ``k`` of a
    band sits at ``start + (k + 1/2) * grid_spacing``.
    """
    grid = as_fraction(grid_spacing)
    if grid <= 0:
        raise ConfigError("grid spacing must be positive", [("grid_spacing_hz", str(grid_spacing))])
    if grid < Fraction(symbol_rate) * (1 + Fraction(rolloff)):
        raise ConfigError(
            "grid spacing narrower than the occupied signal bandwidth",
            [("grid_spacing_hz", f"{float(grid):.6g} < {symbol_rate * (1 + rolloff):.6g}")],
        )

    bands = sorted(bands, key=lambda b: b.start_frequency)
    problems = []
    for b in bands:
        if b.channel_count < 1:
            problems.append((f"bands.{b.name}.channel_count", "must be >= 1"))
            continue
        slots = Fraction(b.bandwidth) / grid
        if abs(slots - b.channel_count) > 1:
            problems.append(
                (f"bands.{b.name}.channel_count",
                 f"{b.channel_count} channels vs {float(slots):.3f} grid slots")
            )
    if problems:
        raise PlanInconsistent("channel counts inconsistent with bandwidth", problems)

    for lo, hi in zip(bands, bands[1:]):
        lo_end = Fraction(lo.start_frequency) + lo.channel_count * grid
        if Fraction(hi.start_frequency) < lo_end:
            raise PlanOverlap(
                "bands overlap",
                [(f"bands.{hi.name}.start_frequency_hz", f"starts inside band {lo.name}")],
            )

    freqs, idx = [], []
    for i, b in enumerate(bands):
        k = np.arange(b.channel_count)
        freqs.append(b.start_frequency + (k + 0.5) * float(grid))
        idx.append(np.full(b.channel_count, i))
    frequencies = np.concatenate(freqs) if freqs else np.zeros(0)
    band_index = np.concatenate(idx) if idx else np.zeros(0, dtype=int)

    n = len(frequencies)
    bad = [c for c in excluded_channels if not 0 <= int(c) < n]
    if bad:
        raise ConfigError("excluded channel ids outside plan", [("excluded_channels", str(bad))])

    return ChannelPlan(
        grid_spacing=grid,
        symbol_rate=float(symbol_rate),
        guard_band=float(guard_band),
        rolloff=float(rolloff),
        bands=tuple(bands),
        excluded_channels=tuple(sorted(int(c) for c in excluded_channels)),
        frequencies=frequencies,
        band_index=band_index,
    )


def _check_id(plan: ChannelPlan, channel_id: int) -> None:
    if not 0 <= channel_id < plan.n_channels:
        raise NotFound(f"channel {channel_id} not in plan of {plan.n_channels}")


def channel_frequency(plan: ChannelPlan, channel_id: int) -> float:
    _check_id(plan, channel_id)
    return float(plan.frequencies[channel_id])


def sliding_test_band(plan: ChannelPlan, cut_id: int) -> list[int]:
    """Channel under test plus two neighbours, clipped to stay inside its band."""
    _check_id(plan, cut_id)
    members = plan.band_channels(plan.band_of(cut_id).name)
    first, last = int(members[0]), int(members[-1])
    if last - first < 2:
        return list(range(first, last + 1))
    lo = min(max(cut_id - 1, first), last - 2)
    return [lo, lo + 1, lo + 2]


def plan_from_dict(section: dict) -> ChannelPlan:
    """Build a plan from the ``plan`` section of a scenario file."""
    bands = [
        BandSpec(
            name=b["name"],
            start_frequency=float(b["start_frequency_hz"]),
            bandwidth=float(b["bandwidth_hz"]),
            channel_count=int(b["channel_count"]),
            launch_power_fw=float(b["launch_power_fw_dbm"]),
            launch_power_bw=float(b["launch_power_bw_dbm"]),
        )
        for b in section.get("bands", [])
    ]
    return build_plan(
        bands,
        section.get("grid_spacing_hz", DEFAULT_GRID_HZ),
        float(section.get("symbol_rate_baud", 32e9)),
        guard_band=float(section.get("guard_band_hz", 1.33e9)),
        rolloff=float(section.get("rolloff", 0.01)),
        excluded_channels=section.get("excluded_channels", ()),
    )
