"""Per-channel SNR budget for same-wavelength bi-directional transmission.

The received channel is degraded by four independent, power-additive terms:
the back-to-back transceiver floor, receiver preamplifier ASE, Rayleigh
backscatter of the counter-propagating channel and circulator port 1->3
leakage of the local transmitter. Uni-directional operation removes the
last two.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .channel_plan import BandSpec, ChannelPlan
from .errors import CalibrationInfeasible, ConfigError, ExcludedChannel, InvalidArgument
from .fiber_model import (
    FiberProfile,
    attenuation_at,
    link_loss,
    rb_interference_power,
    wavelength_nm,
)

PLANCK = 6.62607015e-34  # J s
DIRECTIONS = ("FW", "BW")


def other_direction(direction: str) -> str:
    return {"FW": "BW", "BW": "FW"}[direction]


def db_to_lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def combine_snr(*terms_db: float) -> float:
    """Total SNR (dB) of independent impairments: inverse sum in linear units."""
    inv = 0.0
    for t in terms_db:
        if t == math.inf:
            continue
        inv += 10.0 ** (-t / 10.0)
    return math.inf if inv == 0.0 else -10.0 * math.log10(inv)


@dataclass(frozen=True)
class AmplifierSpec:
    band: str
    noise_figure: float  # dB
    max_output_power: float  # dBm
    gain_mode: str = "fixed-output-power"

    def __post_init__(self):
        if self.noise_figure < 3.0:
            warnings.warn(f"{self.band}-band amplifier noise figure {self.noise_figure} dB is below 3 dB",
                          stacklevel=3)


@dataclass(frozen=True)
class SnrBreakdown:
    snr_trx: float
    snr_ase: float
    snr_rb: float
    snr_leak: float
    snr_total: float

    @classmethod
    def from_terms(cls, trx, ase, rb, leak, extra=math.inf):
        return cls(trx, ase, rb, leak, combine_snr(trx, ase, rb, leak, extra))


@dataclass(frozen=True)
class DirectionalScenario:
    plan: ChannelPlan
    fiber: FiberProfile
    amplifiers: dict  # band -> AmplifierSpec
    trx_snr: dict  # band -> dB
    circulator_directivity: float = 50.0
    direction: str = "FW"
    extras_loss: float = 4.0  # couplers + circulator insertion, dB
    unidi: bool = False
    # optional (channel_id, direction) -> SNR dB of an extra term, e.g. silica NLI
    penalty_hook: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        problems = []
        if self.direction not in DIRECTIONS:
            problems.append(("direction", f"must be FW or BW, got {self.direction!r}"))
        if not self.circulator_directivity > 0:
            problems.append(("circulator_directivity_db", "must be > 0"))
        for b in self.plan.bands:
            if b.name not in self.amplifiers:
                problems.append((f"amplifiers.{b.name}", "missing"))
            if b.name not in self.trx_snr:
                problems.append((f"trx_snr.{b.name}", "missing"))
        if problems:
            raise ConfigError("invalid directional scenario", problems)

    def flipped(self) -> "DirectionalScenario":
        return replace(self, direction=other_direction(self.direction))


def per_channel_launch_power(band: BandSpec, direction: str) -> float:
    """Flat per-channel launch (dBm) from the band-total launch power."""
    return band.launch_power(direction) - 10 * math.log10(band.channel_count)


def ase_snr(rx_power: float, nf: float, photon_energy: float, noise_bandwidth: float) -> float:
    """Receiver-preamplifier ASE-limited SNR in dB (high-gain approximation)."""
    if noise_bandwidth <= 0:
        raise InvalidArgument("noise bandwidth must be positive")
    p = 1e-3 * 10 ** (rx_power / 10)
    noise = photon_energy * 10 ** (nf / 10) * noise_bandwidth
    return 10 * math.log10(p / noise)


def leakage_interference(tx_power_same_port: float, directivity: float) -> float:
    """Local transmitter power (dBm) leaking into the co-located receiver."""
    if not directivity > 0:
        raise InvalidArgument("directivity must be > 0")
    return tx_power_same_port - directivity


def _breakdown(sc: DirectionalScenario, channel_id: int) -> SnrBreakdown:
    band = sc.plan.band_of(channel_id)
    f = float(sc.plan.frequencies[channel_id])
    wl = float(wavelength_nm(f))
    launch = per_channel_launch_power(band, sc.direction)
    counter = per_channel_launch_power(band, other_direction(sc.direction))

    loss = link_loss(sc.fiber, wl, bandwidth=sc.plan.symbol_rate)
    at_fibre_end = launch - loss
    amp = sc.amplifiers[band.name]
    snr_ase = ase_snr(at_fibre_end - sc.extras_loss, amp.noise_figure, PLANCK * f, sc.plan.symbol_rate)

    if sc.unidi:
        snr_rb = snr_leak = math.inf
    else:
        alpha = attenuation_at(sc.fiber, wl)
        beta = sc.fiber.rb_coefficient.get(band.name)
        if beta is None:
            raise ConfigError("missing RB coefficient", [(f"fiber.rb.{band.name}", "missing")])
        snr_rb = at_fibre_end - rb_interference_power(counter, beta, alpha, sc.fiber.length)
        snr_leak = at_fibre_end - leakage_interference(counter, sc.circulator_directivity)

    extra = math.inf
    if sc.penalty_hook is not None:
        extra = sc.penalty_hook(channel_id, sc.direction)
    return SnrBreakdown.from_terms(float(sc.trx_snr[band.name]), snr_ase, snr_rb, snr_leak, extra)


def evaluate_channel(scenario: DirectionalScenario, channel_id: int) -> SnrBreakdown:
    if scenario.plan.is_excluded(channel_id):
        raise ExcludedChannel(f"channel {channel_id} is excluded")
    return _breakdown(scenario, channel_id)


def bidi_penalty(scenario: DirectionalScenario, channel_id: int) -> float:
    """SNR lost (dB) by running both directions on the same wavelength."""
    uni = evaluate_channel(replace(scenario, unidi=True), channel_id).snr_total
    bi = evaluate_channel(replace(scenario, unidi=False), channel_id).snr_total
    return uni - bi


def _evaluate_chunk(args):
    sc, ids = args
    return [(int(i), _breakdown(sc, int(i))) for i in ids]


def evaluate_breakdowns(scenario: DirectionalScenario, ids=None, jobs: int = 1) -> list[SnrBreakdown]:
    """Breakdowns for ``ids`` (default: all channels, excluded ones included)."""
    ids = np.arange(scenario.plan.n_channels) if ids is None else np.asarray(ids)
    if jobs <= 1 or len(ids) < 2 * jobs:
        return [b for _, b in _evaluate_chunk((scenario, ids))]
    chunks = np.array_split(ids, jobs)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_evaluate_chunk, [(scenario, c) for c in chunks]))
    merged = dict(pair for part in parts for pair in part)
    return [merged[int(i)] for i in ids]


def evaluate_scenario(fw: DirectionalScenario, bw: DirectionalScenario | None = None,
                      *, unidi: bool = False, jobs: int = 1):
    """SNR-populated ChannelResults for every (channel, direction).

    Uni-directional mode returns the FW direction only, with the RB and
    leakage terms set to infinity.
    """
    from .rate_adaptation import ChannelResult

    if bw is None:
        bw = replace(fw, direction="BW")
    if fw.plan != bw.plan:
        raise ConfigError("plan mismatch between directions", [("plan", "FW and BW plans differ")])
    fw = replace(fw, direction="FW", unidi=unidi)
    bw = replace(bw, direction="BW", unidi=unidi)
    todo = [fw] if unidi else [fw, bw]
    plan = fw.plan
    out = []
    for sc in todo:
        for cid, bd in enumerate(evaluate_breakdowns(sc, jobs=jobs)):
            out.append(ChannelResult(
                channel_id=cid,
                direction=sc.direction,
                band=plan.bands[int(plan.band_index[cid])].name,
                frequency=float(plan.frequencies[cid]),
                snr=bd,
                excluded=plan.is_excluded(cid),
            ))
    out.sort(key=lambda r: (r.channel_id, DIRECTIONS.index(r.direction)))
    return out



# -- transceiver calibration ------------------------------------------------

_TERMS = ("ase", "rb", "leak")


@dataclass(frozen=True)
class TrxCalibration:
    trx_snr: dict  # band -> dB, +inf on the infeasible boundary
    achieved: dict  # band -> fitted metric
    boundary: tuple = ()  # bands whose target equals the trx-free ceiling


def _inv(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.isinf(x), 0.0, 10 ** (-np.where(np.isinf(x), 0.0, x) / 10))


def band_mean_snr(snr_db) -> float:
    return float(np.mean(snr_db))


def calibrate_trx_snr(fw: DirectionalScenario, targets: dict, *, bw: DirectionalScenario | None = None,
                      unidi: bool = False, band_metric: Callable | None = None, tol: float = 0.005,
                      bounds=(-10.0, 80.0)) -> TrxCalibration:
    """Per-band transceiver SNR reproducing ``targets`` by monotone bisection.

    By default the target is the band mean of ``snr_total`` (dB) over the
    included channels of both directions. ``band_metric`` maps the array of
    those SNRs to any other non-decreasing band figure, e.g. a GMI
    throughput. A target within ``tol`` (relative) of the value reached with
    an ideal transceiver returns ``+inf`` and lists the band in ``boundary``;
    beyond it CalibrationInfeasible names the dominant remaining term.
    """
    metric = band_metric or band_mean_snr
    results = evaluate_scenario(fw, bw, unidi=unidi)
    live = [r for r in results if not r.excluded]
    bands = np.array([r.band for r in live])
    terms = {t: np.array([getattr(r.snr, f"snr_{t}") for r in live]) for t in _TERMS}
    inv_other = sum(_inv(v) for v in terms.values())

    trx, achieved, boundary = {}, {}, []
    for band, target in targets.items():
        sel = bands == band
        if not sel.any():
            raise ConfigError("calibration target for a band without channels", [(f"targets.{band}", "no channels")])
        inv_b = inv_other[sel]

        def f(x, inv_b=inv_b):
            with np.errstate(divide="ignore"):
                snr = -10 * np.log10(10 ** (-x / 10) + inv_b)
            return metric(snr)

        with np.errstate(divide="ignore"):
            ceiling = metric(-10 * np.log10(inv_b))
        floor = f(bounds[0])
        if target - ceiling > tol * abs(ceiling):
            means = {t: float(np.mean(_inv(terms[t][sel]))) for t in _TERMS}
            raise CalibrationInfeasible(
                f"{band}-band target {target:g} exceeds the {ceiling:g} reachable with an ideal transceiver",
                band=band, limiting_term=max(means, key=means.get))
        if abs(target - ceiling) <= tol * abs(target):
            trx[band], achieved[band] = math.inf, float(ceiling)
            boundary.append(band)
            continue
        if target < floor:
            raise CalibrationInfeasible(f"{band}-band target {target:g} is below the floor {floor:g}",
                                        band=band, limiting_term="trx")
        lo, hi = bounds
        if f(hi) < target:  # ceiling beyond the search range but within reach
            hi = 200.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if f(mid) < target:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-7:
                break
        trx[band] = 0.5 * (lo + hi)
        achieved[band] = float(f(trx[band]))
    return TrxCalibration(trx, achieved, tuple(boundary))
