"""Hollow-core fibre span: attenuation, Rayleigh backscatter and gas absorption."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidArgument, OutOfRange

C_LIGHT = 299_792_458.0  # m/s
DB_PER_NEPER = 10.0 / math.log(10.0)  # power attenuation: dB = DB_PER_NEPER * nepers


def wavelength_nm(frequency_hz):
    return C_LIGHT / np.asarray(frequency_hz, dtype=float) * 1e9


def frequency_hz(wavelength):
    return C_LIGHT / (np.asarray(wavelength, dtype=float) * 1e-9)


@dataclass(frozen=True)
class GasLine:
    center_frequency: float  # Hz
    fwhm: float  # Hz
    peak_loss: float  # dB over the whole span

    def __post_init__(self):
        if self.fwhm <= 0:
            raise InvalidArgument(f"gas line fwhm must be > 0, got {self.fwhm}")
        if self.peak_loss < 0:
            raise InvalidArgument(f"gas line peak loss must be >= 0, got {self.peak_loss}")


@dataclass(frozen=True, eq=False)
class FiberProfile:
    length: float  # km
    wavelengths: np.ndarray  # nm, strictly increasing
    attenuation: np.ndarray  # dB/km
    rb_coefficient: dict  # band -> dB/km
    gas_lines: tuple = ()
    rb_reference: dict = field(default_factory=dict)  # SMF column, for comparison only

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=float)
        att = np.asarray(self.attenuation, dtype=float)
        problems = []
        if wl.ndim != 1 or wl.shape != att.shape or len(wl) < 2:
            problems.append(("attenuation_curve", "need >= 2 matching (wavelength, attenuation) samples"))
        elif np.any(np.diff(wl) <= 0):
            problems.append(("attenuation_curve", "wavelengths must be strictly increasing"))
        elif np.any((att <= 0) | (att >= 1)):
            problems.append(("attenuation_curve", "attenuation must lie in (0, 1) dB/km"))
        if not self.length >= 0:
            problems.append(("length_km", f"must be >= 0, got {self.length}"))
        if problems:
            raise ConfigError("invalid fibre profile", problems)
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "attenuation", att)

    def with_rb(self, rb: dict) -> "FiberProfile":
        return FiberProfile(self.length, self.wavelengths, self.attenuation, dict(rb),
                            self.gas_lines, self.rb_reference)

    def with_length(self, length: float) -> "FiberProfile":
        return FiberProfile(length, self.wavelengths, self.attenuation, self.rb_coefficient,
                            self.gas_lines, self.rb_reference)


def attenuation_at(profile: FiberProfile, wavelength) -> float | np.ndarray:
    """Piecewise-linear attenuation (dB/km) at ``wavelength`` in nm."""
    wl = np.asarray(wavelength, dtype=float)
    lo, hi = profile.wavelengths[0], profile.wavelengths[-1]
    if np.any((wl < lo) | (wl > hi)):
        raise OutOfRange(f"wavelength outside sampled range [{lo}, {hi}] nm")
    out = np.interp(wl, profile.wavelengths, profile.attenuation)
    return float(out) if out.ndim == 0 else out


def lorentzian_loss_db(lines, freqs) -> np.ndarray:
    """Summed Lorentzian loss (dB) of ``lines`` at absolute frequencies ``freqs``."""
    freqs = np.asarray(freqs, dtype=float)
    loss = np.zeros_like(freqs)
    for ln in lines:
        x = 2.0 * (freqs - ln.center_frequency) / ln.fwhm
        loss += ln.peak_loss / (1.0 + x * x)
    return loss


def gas_absorption_response(lines, channel_center: float, bandwidth: float, n_points: int) -> np.ndarray:
    """Gas loss in dB on ``n_points`` uniform bins spanning the channel."""
    if n_points < 2:
        raise InvalidArgument("n_points must be >= 2")
    f = np.linspace(channel_center - bandwidth / 2, channel_center + bandwidth / 2, n_points)
    return lorentzian_loss_db(lines, f)


def channel_gas_loss(lines, channel_center: float, bandwidth: float, n_points: int = 257) -> float:
    """Power-averaged gas loss (dB) over a channel bandwidth."""
    if not lines:
        return 0.0
    loss = gas_absorption_response(lines, channel_center, bandwidth, n_points)
    return float(-10 * np.log10(np.mean(10 ** (-loss / 10))))


def link_loss(profile: FiberProfile, wavelength, bandwidth: float | None = None):
    """Span loss in dB: attenuation times length plus gas absorption.

    With ``bandwidth`` the gas term is power-averaged over the channel,
    otherwise it is the Lorentzian loss at the centre wavelength.
    """
    base = np.asarray(attenuation_at(profile, wavelength)) * profile.length
    f = frequency_hz(wavelength)
    if bandwidth is None:
        gas = lorentzian_loss_db(profile.gas_lines, f)
    else:
        gas = np.array([channel_gas_loss(profile.gas_lines, fc, bandwidth) for fc in np.atleast_1d(f)])
        gas = gas.reshape(np.shape(f))
    out = base + gas
    return float(out) if np.ndim(out) == 0 else out


def effective_backscatter_length(alpha: float, length: float) -> float:
    """Integral of exp(-2 alpha z) over the span, in km.

    ``alpha`` is the power attenuation in dB/km.
    """
    if alpha < 0 or length < 0:
        raise InvalidArgument(f"alpha and length must be >= 0 (got {alpha}, {length})")
    a = alpha / DB_PER_NEPER
    if a == 0.0:
        return float(length)
    return float(-np.expm1(-2 * a * length) / (2 * a))


def rb_interference_power(counter_launch: float, rb_coefficient: float, alpha: float, length: float) -> float:
    """Backscattered power (dBm) of the counter-propagating channel at the near end."""
    leff = effective_backscatter_length(alpha, length)
    if leff == 0.0 or rb_coefficient == -math.inf:
        return -math.inf
    return counter_launch + rb_coefficient + 10 * math.log10(leff)


# -- file loaders -----------------------------------------------------------

def _rows(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    return list(csv.DictReader(lines))


def data_path(name: str) -> Path:
    return Path(str(resources.files("hcfbidi") / "data" / name))


def load_attenuation_csv(path):
    rows = _rows(path)
    wl = np.array([float(r["wavelength_nm"]) for r in rows])
    att = np.array([float(r["attenuation_db_per_km"]) for r in rows])
    return wl, att


def load_rb_csv(path) -> tuple[dict, dict]:
    rows = _rows(path)
    hcf = {r["band"].strip(): float(r["beta_hcf_db_per_km"]) for r in rows}
    smf = {r["band"].strip(): float(r["beta_smf_db_per_km"]) for r in rows}
    return hcf, smf


def load_gas_lines_csv(path) -> tuple[GasLine, ...]:
    return tuple(
        GasLine(float(r["center_hz"]), float(r["fwhm_hz"]), float(r["peak_loss_db"]))
        for r in _rows(path)
    )


def load_profile(attenuation_csv, rb_csv, gas_lines_csv=None, length: float = 60.0,
                 rb_column: str = "hcf") -> FiberProfile:
    wl, att = load_attenuation_csv(attenuation_csv)
    hcf, smf = load_rb_csv(rb_csv)
    lines = load_gas_lines_csv(gas_lines_csv) if gas_lines_csv else ()
    if rb_column == "hcf":
        rb, ref = hcf, smf
    elif rb_column == "smf":
        rb, ref = smf, hcf
    else:
        raise ConfigError("unknown rb column", [("fiber.rb_column", rb_column)])
    return FiberProfile(length, wl, att, rb, lines, ref)


def default_profile(length: float = 60.0, rb_column: str = "hcf") -> FiberProfile:
    """The bundled 60 km HCF profile."""
    return load_profile(
        data_path("hcf_attenuation.csv"),
        data_path("rb_coefficients.csv"),
        data_path("gas_lines.csv"),
        length=length,
        rb_column=rb_column,
    )
