"""Single-channel dual-polarisation waveform simulation and pilot-aided receiver.

All filtering is cyclic (FFT based), so a frame is a periodic signal and the
receiver sees neither edge transients nor filter truncation. Symbol ``k`` of the matched-filter output
sits at sample ``k * samples_per_symbol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .constellation import Constellation, gmi_monte_carlo
from .errors import EqualizerDiverged, InvalidArgument, MeasurementFailed
from .fiber_model import GasLine, lorentzian_loss_db

PILOT_SEED = 0x5EED
NEGLIGIBLE_RESPONSE = 1e-9  # |1 - H| below this counts as a flat channel


@dataclass(frozen=True)
class DspConfig:
    samples_per_symbol: int = 2
    rrc_rolloff: float = 0.01
    rrc_span: int | None = None  # symbols; None shapes with the exact (untruncated) response
    pilot_ratio: float = 0.04
    mimo_taps: int = 31
    mimo_step: float = 1e-3  # normalised LMS step, decision-directed pass
    mimo_train_step: float = 0.3  # normalised LMS step of the first pilot-directed pass
    train_passes: int = 3
    mimo_dd_start_step: float = 1e-2  # first decision-directed pass; later ones anneal to mimo_step
    dd_passes: int = 2
    pll_gain: float = 0.05
    pll_freq_gain: float = 5e-4
    cpr_window: int = 16  # pilots averaged by carrier phase recovery
    gla_enabled: bool = False
    n_symbols: int = 2 ** 16
    symbol_rate: float = 32e9

    def __post_init__(self):
        if self.samples_per_symbol < 2:
            raise InvalidArgument("samples_per_symbol must be >= 2")
        if not 0 < self.pilot_ratio < 1:
            raise InvalidArgument("pilot_ratio must lie in (0, 1)")
        if self.mimo_taps % 2 == 0 or not 1 <= self.mimo_taps <= 163:
            raise InvalidArgument("mimo_taps must be odd and in [1, 163]")
        if self.train_passes < 0 or self.dd_passes < 1:
            raise InvalidArgument("need train_passes >= 0 and dd_passes >= 1")
        if self.cpr_window < 1:
            raise InvalidArgument("cpr_window must be >= 1")
        if self.rrc_span is not None and (self.rrc_span < 1 or (self.rrc_span * self.samples_per_symbol) % 2):
            raise InvalidArgument("rrc_span must be >= 1 with an even span * samples_per_symbol")

    @property
    def sample_rate(self) -> float:
        return self.samples_per_symbol * self.symbol_rate


@dataclass(frozen=True)
class ImpairmentSpec:
    snr_awgn: float = math.inf  # dB, against waveform power over the full sample bandwidth
    laser_linewidth: float = 0.0  # Hz
    polarization_rotation: float = 0.0  # rad
    frequency_offset: float = 0.0  # Hz
    gla_lines: tuple = ()  # GasLine with centre frequency relative to the carrier

    def __post_init__(self):
        vals = (self.laser_linewidth, self.polarization_rotation, self.frequency_offset)
        if self.laser_linewidth < 0 or not all(math.isfinite(v) for v in vals):
            raise InvalidArgument("impairments must be finite and linewidth >= 0")


def awgn_for_symbol_snr(snr_db: float, sps: int) -> float:
    """Waveform AWGN setting that yields ``snr_db`` per symbol after matched filtering."""
    return snr_db - 10 * math.log10(sps)


def to_baseband(lines, carrier: float) -> tuple:
    return tuple(GasLine(l.center_frequency - carrier, l.fwhm, l.peak_loss) for l in lines)


# -- pulse shaping ----------------------------------------------------------

def rrc_taps(rolloff: float, span: int, sps: int) -> np.ndarray:
    """Unit-energy root-raised-cosine taps, ``span * sps + 1`` long."""
    if not 0 < rolloff <= 1 or span < 1 or sps < 1 or (span * sps) % 2:
        raise InvalidArgument("need 0 < rolloff <= 1, span >= 1, sps >= 1 and even span*sps")
    b = rolloff
    t = (np.arange(span * sps + 1) - span * sps / 2) / sps
    h = np.empty_like(t)
    at_zero = np.isclose(t, 0.0)
    at_sing = np.isclose(np.abs(t), 1 / (4 * b))
    reg = ~(at_zero | at_sing)
    tr = t[reg]
    h[reg] = (np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))) / (
        np.pi * tr * (1 - (4 * b * tr) ** 2))
    h[at_zero] = 1 - b + 4 * b / np.pi
    h[at_sing] = b / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
                                   + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b)))
    return h / np.sqrt(np.sum(h ** 2))


# -- frames -----------------------------------------------------------------

@dataclass
class Frame:
    symbols: np.ndarray  # (2, n) complex
    payload_index: np.ndarray  # (2, n) index into the constellation, -1 at pilots
    pilot_positions: np.ndarray  # (n_p,)
    constellation: Constellation

    @property
    def pilot_symbols(self) -> np.ndarray:
        return self.symbols[:, self.pilot_positions]

    @property
    def pilot_mask(self) -> np.ndarray:
        m = np.zeros(self.symbols.shape[1], dtype=bool)
        m[self.pilot_positions] = True
        return m


def pilot_stride(cfg: DspConfig) -> int:
    return int(round(1 / cfg.pilot_ratio))


def generate_frame(c: Constellation, cfg: DspConfig, seed) -> Frame:
    """Dual-polarisation frame: fixed QPSK pilots every ``1/pilot_ratio`` symbols."""
    n = cfg.n_symbols
    stride = pilot_stride(cfg)
    if n < stride:
        raise InvalidArgument("n_symbols must be >= 1/pilot_ratio")
    pos = np.arange(0, n - n % stride, stride)
    prng = np.random.default_rng(PILOT_SEED)
    qpsk = (prng.choice([-1.0, 1.0], (2, len(pos))) + 1j * prng.choice([-1.0, 1.0], (2, len(pos)))) / np.sqrt(2)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, c.cardinality, (2, n))
    sym = c.points[idx]
    idx[:, pos] = -1
    sym[:, pos] = qpsk
    return Frame(sym, idx, pos, c)


def rrc_spectrum(n: int, sps: int, rolloff: float) -> np.ndarray:
    """Root-raised-cosine response on an ``n``-point FFT grid, unit pulse energy.

    Used for cyclic shaping, where it is the untruncated counterpart of
    :func:`rrc_taps`.
    """
    if not 0 < rolloff <= 1:
        raise InvalidArgument("rolloff must lie in (0, 1]")
    f = np.abs(np.fft.fftfreq(n, 1 / sps))  # in units of the symbol rate
    lo, hi = (1 - rolloff) / 2, (1 + rolloff) / 2
    rc = np.where(f <= lo, 1.0, 0.0)
    edge = (f > lo) & (f < hi)
    rc[edge] = 0.5 * (1 + np.cos(np.pi / rolloff * (f[edge] - lo)))
    return np.sqrt(rc * sps)


def _spectral_filter(x: np.ndarray, H: np.ndarray) -> np.ndarray:
    return np.fft.ifft(np.fft.fft(x, axis=-1) * H, axis=-1)


def pulse_response(n: int, cfg: DspConfig) -> np.ndarray:
    """Transmit (and matched) filter response on an ``n``-point FFT grid."""
    sps = cfg.samples_per_symbol
    if cfg.rrc_span is None:
        return rrc_spectrum(n, sps, cfg.rrc_rolloff)
    taps = rrc_taps(cfg.rrc_rolloff, cfg.rrc_span, sps)
    if len(taps) > n:
        raise InvalidArgument("filter longer than the frame")
    k = np.zeros(n)
    half = len(taps) // 2
    k[:half + 1] = taps[half:]
    k[n - half:] = taps[:half]
    return np.fft.fft(k).real  # symmetric taps, centred: real response


def shape(frame: Frame, cfg: DspConfig) -> np.ndarray:
    sps = cfg.samples_per_symbol
    up = np.zeros((2, frame.symbols.shape[1] * sps), dtype=complex)
    up[:, ::sps] = frame.symbols
    return _spectral_filter(up, pulse_response(up.shape[-1], cfg))


def matched_filter(waveform: np.ndarray, cfg: DspConfig) -> np.ndarray:
    return _spectral_filter(waveform, pulse_response(waveform.shape[-1], cfg))


# -- impairments ------------------------------------------------------------

def gla_response(lines, n: int, sample_rate: float) -> np.ndarray:
    """Amplitude response on the FFT grid of an ``n``-sample baseband waveform."""
    f = np.fft.fftfreq(n, 1 / sample_rate)
    return 10 ** (-lorentzian_loss_db(lines, f) / 20)


def apply_impairments(waveform: np.ndarray, spec: ImpairmentSpec, seed, sample_rate: float) -> np.ndarray:
    """GLA, polarisation rotation, frequency offset, Wiener phase noise, AWGN, in that order."""
    out = waveform
    n = waveform.shape[-1]
    pn_seed, noise_seed = np.random.SeedSequence(seed).spawn(2)
    if spec.gla_lines:
        out = np.fft.ifft(np.fft.fft(out, axis=-1) * gla_response(spec.gla_lines, n, sample_rate), axis=-1)
    if spec.polarization_rotation:
        a = spec.polarization_rotation
        rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        out = rot @ out
    phase = np.zeros(n)
    if spec.frequency_offset:
        phase += 2 * np.pi * spec.frequency_offset * np.arange(n) / sample_rate
    if spec.laser_linewidth:
        var = 2 * np.pi * spec.laser_linewidth / sample_rate
        phase += np.cumsum(np.random.default_rng(pn_seed).normal(0.0, math.sqrt(var), n))
    if spec.frequency_offset or spec.laser_linewidth:
        out = out * np.exp(1j * phase)
    if math.isfinite(spec.snr_awgn):
        p = np.mean(np.abs(out) ** 2)
        sigma2 = p / 10 ** (spec.snr_awgn / 10)
        g = np.random.default_rng(noise_seed).standard_normal((2,) + out.shape)
        out = out + (g[0] + 1j * g[1]) * math.sqrt(sigma2 / 2)
    return out


def gla_compensate(waveform: np.ndarray, response: np.ndarray, regularization: float) -> np.ndarray:
    """Regularised frequency-domain inverse of a known line response.

    The filter ``(H* + r) / (|H|^2 + r)`` is the zero-forcing inverse for
    ``r -> 0``, tends to identity for ``r -> inf`` and is exactly one where
    ``H = 1``. A flat response returns the input object untouched.
    """
    H = np.asarray(response)
    if np.max(np.abs(1 - H)) < NEGLIGIBLE_RESPONSE:
        return waveform
    if math.isinf(regularization):
        return waveform
    W = (np.conj(H) + regularization) / (np.abs(H) ** 2 + regularization)
    return np.fft.ifft(np.fft.fft(waveform, axis=-1) * W, axis=-1)


# -- adaptive MIMO equaliser ------------------------------------------------

@numba.njit(cache=True)
def _nlms_pass(x, h, ref, has_ref, points, dd, mu, sps, pll1, pll2, y_out, err2, got_ref):
    ns = x.shape[1]
    n_sym = y_out.shape[1]
    ntaps = h.shape[2]
    half = ntaps // 2
    theta = np.zeros(2)
    freq = np.zeros(2)
    win = np.empty((2, ntaps), dtype=np.complex128)
    for k in range(n_sym):
        c0 = k * sps
        pw = 0.0
        for q in range(2):
            for n in range(ntaps):
                v = x[q, (c0 - half + n) % ns]
                win[q, n] = v
                pw += v.real * v.real + v.imag * v.imag
        for p in range(2):
            acc = 0j
            for q in range(2):
                for n in range(ntaps):
                    acc += h[p, q, n] * win[q, n]
            y_out[p, k] = acc
            rot = np.exp(-1j * theta[p])
            z = acc * rot
            if has_ref[k]:
                d = ref[p, k]
            elif dd:
                best = 1e300
                d = points[0]
                for j in range(points.shape[0]):
                    dist = abs(z - points[j])
                    if dist < best:
                        best = dist
                        d = points[j]
            else:
                theta[p] += freq[p]
                continue
            e = d - z
            err2[p, k] = e.real * e.real + e.imag * e.imag
            got_ref[p, k] = True
            perr = np.angle(z * np.conj(d)) if abs(d) > 0 else 0.0
            freq[p] += pll2 * perr
            theta[p] += pll1 * perr + freq[p]
            g = mu * e * np.conj(rot) / (pw + 1e-12)
            for q in range(2):
                for n in range(ntaps):
                    h[p, q, n] += g * np.conj(win[q, n])


@dataclass
class EqualizerOutput:
    symbols: np.ndarray  # (2, n_symbols), not phase corrected
    taps: np.ndarray  # (2, 2, ntaps)
    mse_trace: list  # block MSE per pass, dB


def _block_mse(err2, got, block):
    n = err2.shape[1]
    out = []
    for s in range(0, n, block):
        g = got[:, s:s + block]
        out.append(float(err2[:, s:s + block][g].mean()) if g.any() else math.nan)
    return out


def mimo_equalize(rx: np.ndarray, frame: Frame, cfg: DspConfig, block: int = 1024) -> EqualizerOutput:
    """2x2 fractionally spaced NLMS: pilot-directed passes, then a decision-directed pass.

    Raises EqualizerDiverged when the block MSE exceeds the reference power
    for three consecutive blocks of the final pass.
    """
    n_sym = frame.symbols.shape[1]
    ntaps = cfg.mimo_taps
    h = np.zeros((2, 2, ntaps), dtype=np.complex128)
    h[0, 0, ntaps // 2] = h[1, 1, ntaps // 2] = 1.0
    ref = np.zeros((2, n_sym), dtype=np.complex128)
    ref[:, frame.pilot_positions] = frame.pilot_symbols
    has_ref = frame.pilot_mask
    x = np.ascontiguousarray(rx, dtype=np.complex128)
    points = np.ascontiguousarray(frame.constellation.points)
    trace = []
    y = np.empty((2, n_sym), dtype=np.complex128)
    # each phase anneals geometrically; pilot-only passes hand over to the DD start step
    train = np.geomspace(cfg.mimo_train_step, cfg.mimo_dd_start_step, cfg.train_passes + 1)[:-1]
    dd = np.geomspace(cfg.mimo_dd_start_step, cfg.mimo_step, cfg.dd_passes) if cfg.dd_passes > 1 else [cfg.mimo_step]
    passes = [(False, float(mu)) for mu in train] + [(True, float(mu)) for mu in dd]
    for dd, mu in passes:
        err2 = np.zeros((2, n_sym))
        got = np.zeros((2, n_sym), dtype=np.bool_)
        _nlms_pass(x, h, ref, has_ref, points, dd, mu, cfg.samples_per_symbol,
                   cfg.pll_gain, cfg.pll_freq_gain, y, err2, got)
        trace.append([10 * math.log10(v) if v > 0 else -math.inf for v in _block_mse(err2, got, block)])
    ref_power = float(np.mean(np.abs(frame.symbols) ** 2))
    run = 0
    for v in trace[-1]:
        run = run + 1 if v > 10 * math.log10(ref_power) else 0
        if run >= 3:
            raise EqualizerDiverged("equaliser MSE above input power for 3 consecutive blocks")
    return EqualizerOutput(y, h, trace)


# -- carrier phase recovery -------------------------------------------------

def carrier_phase_recovery(symbols: np.ndarray, pilot_positions: np.ndarray, pilot_symbols: np.ndarray,
                           window: int):
    """Pilot-aided phase removal.

    Per polarisation, pilot phase errors are averaged (as phasors) over a
    centred window of ``window`` pilots, unwrapped, linearly interpolated to
    every symbol and removed. Returns ``(derotated, phase)``.
    """
    if window < 1:
        raise InvalidArgument("window must be >= 1")
    symbols = np.atleast_2d(symbols)
    pilot_symbols = np.atleast_2d(pilot_symbols)
    n = symbols.shape[1]
    idx = np.arange(n)
    phase = np.empty(symbols.shape)
    for p in range(symbols.shape[0]):
        r = symbols[p, pilot_positions] * np.conj(pilot_symbols[p])
        if window > 1:
            kernel = np.ones(window)
            # centred moving sum; ends use the pilots that exist
            r = np.convolve(r, kernel, mode="full")[(window - 1) // 2:(window - 1) // 2 + len(pilot_positions)]
        ph = np.unwrap(np.angle(r))
        phase[p] = np.interp(idx, pilot_positions, ph)
    return symbols * np.exp(-1j * phase), phase


# -- frequency offset -------------------------------------------------------

def estimate_frequency_offset(symbols: np.ndarray, symbol_rate: float) -> float:
    """Blind 4th-power estimate (Hz) from symbol-spaced samples.

    Square QAM and the shaped constellations keep a quarter-turn symmetry, so
    ``x**4`` carries a spectral line at four times the offset. The range is
    ``|f| < symbol_rate / 8``.
    """
    x = np.atleast_2d(symbols)
    n = x.shape[1]
    spec = np.abs(np.fft.fft(np.sum(x ** 4, axis=0), 4 * n)) ** 2
    k = int(np.argmax(spec))
    # parabolic refinement of the peak
    a, b, c = spec[k - 1], spec[k], spec[(k + 1) % len(spec)]
    den = a - 2 * b + c
    delta = 0.5 * (a - c) / den if den != 0 else 0.0
    f4 = np.fft.fftfreq(len(spec), 1 / symbol_rate)[k] + delta * symbol_rate / len(spec)
    return float(f4 / 4)


def remove_frequency_offset(waveform: np.ndarray, offset: float, sample_rate: float) -> np.ndarray:
    if offset == 0.0:
        return waveform
    t = np.arange(waveform.shape[-1]) / sample_rate
    return waveform * np.exp(-2j * np.pi * offset * t)


# -- measurement ------------------------------------------------------------

def estimate_snr(rx: np.ndarray, tx: np.ndarray, mask=None) -> float:
    """Data-aided SNR (dB): per-polarisation LS gain, error power averaged."""
    sig, noise = 0.0, 0.0
    for p in range(tx.shape[0]):
        y, x = rx[p], tx[p]
        if mask is not None:
            y, x = y[mask], x[mask]
        g = np.vdot(x, y) / np.vdot(x, x)
        sig += abs(g) ** 2 * np.mean(np.abs(x) ** 2)
        noise += np.mean(np.abs(y - g * x) ** 2)
    return 10 * math.log10(sig / noise) if noise > 0 else math.inf


@dataclass
class TraceResult:
    snr: float  # dB after the full chain
    stage_snr: dict
    mse_trace: list
    diverged: bool = False


def run_trace(cfg: DspConfig, impairments: ImpairmentSpec, frame: Frame, seed) -> TraceResult:
    """Transmit ``frame`` once through the impaired channel and the receiver."""
    fs = cfg.sample_rate
    tx = shape(frame, cfg)
    rx = apply_impairments(tx, impairments, seed, fs)
    if cfg.gla_enabled and impairments.gla_lines:
        H = gla_response(impairments.gla_lines, rx.shape[-1], fs)
        # regularise with the in-band (symbol) SNR
        snr_lin = 10 ** (impairments.snr_awgn / 10) * cfg.samples_per_symbol
        rx = gla_compensate(rx, H, 1 / snr_lin)
    sps = cfg.samples_per_symbol
    mf = matched_filter(rx, cfg)
    f_est = estimate_frequency_offset(mf[:, ::sps], cfg.symbol_rate)
    if f_est != 0.0:
        mf = matched_filter(remove_frequency_offset(rx, f_est, fs), cfg)
    stages = {"matched_filter": estimate_snr(mf[:, ::sps], frame.symbols)}
    try:
        eq = mimo_equalize(mf, frame, cfg)
    except EqualizerDiverged:
        return TraceResult(-math.inf, stages, [], diverged=True)
    stages["mimo"] = estimate_snr(eq.symbols, frame.symbols)
    out, _ = carrier_phase_recovery(eq.symbols, frame.pilot_positions, frame.pilot_symbols, cfg.cpr_window)
    payload = ~frame.pilot_mask
    stages["cpr"] = estimate_snr(out, frame.symbols, payload)
    return TraceResult(stages["cpr"], stages, eq.mse_trace)


@dataclass
class Measurement:
    snr: float  # dB, mean of the best three traces
    gmi: object  # GmiEstimate at ``snr``
    trace_snr: list
    best: list  # indices of traces averaged
    traces: list = field(repr=False, default_factory=list)


def measure_channel(cfg: DspConfig, impairments: ImpairmentSpec, c: Constellation, n_traces: int = 5,
                    seed: int = 0, gmi_samples: int = 20_000) -> Measurement:
    """Best three of ``n_traces`` captures of one frame; trace ``i`` uses noise seed ``seed + i``."""
    if n_traces < 3:
        raise InvalidArgument("n_traces must be >= 3")
    frame = generate_frame(c, cfg, seed)
    traces = [run_trace(cfg, impairments, frame, seed + i) for i in range(n_traces)]
    valid = [i for i, t in enumerate(traces) if not t.diverged]
    if len(valid) < 3:
        raise MeasurementFailed(f"only {len(valid)} of {n_traces} traces converged")
    best = sorted(valid, key=lambda i: traces[i].snr, reverse=True)[:3]
    snr = float(np.mean([traces[i].snr for i in best]))
    gmi = gmi_monte_carlo(c, min(snr, 60.0), gmi_samples, seed=seed)
    return Measurement(snr, gmi, [t.snr for t in traces], sorted(best), traces)
