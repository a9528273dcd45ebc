"""Labelled 2D constellations, GMI estimation and geometric shaping.

Two GMI routes are provided and kept independent of each other:

* ``gmi_monte_carlo`` draws symbols and AWGN and averages the bit-metric
  log-likelihood ratio with a matched Gaussian metric;
* ``gmi_quadrature`` integrates the same quantity deterministically on a
  trapezoidal grid in the received-signal plane.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import BadCardinality, BadLabeling, InvalidArgument

LOG2E = 1.0 / math.log(2.0)


@dataclass(frozen=True, eq=False)
class Constellation:
    points: np.ndarray  # complex, unit mean energy
    labels: np.ndarray  # integer label of each point, MSB first
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).ravel()
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        M = len(pts)
        if M < 2 or M & (M - 1):
            raise BadCardinality(f"cardinality {M} is not a power of two >= 2")
        if len(labels) != M:
            raise BadCardinality(f"{len(labels)} labels for {M} points")
        if len(np.unique(labels)) != M:
            raise BadLabeling("labels are not unique")
        if labels.min() < 0 or labels.max() >= M:
            raise BadLabeling(f"labels must lie in [0, {M})")
        energy = np.mean(np.abs(pts) ** 2)
        if not energy > 0:
            raise InvalidArgument("constellation has zero energy")
        object.__setattr__(self, "points", pts / np.sqrt(energy))
        object.__setattr__(self, "labels", labels)

    @property
    def cardinality(self) -> int:
        return len(self.points)

    @property
    def m(self) -> int:
        return self.cardinality.bit_length() - 1

    @property
    def bits(self) -> np.ndarray:
        """(M, m) array of label bits, MSB first."""
        shifts = np.arange(self.m - 1, -1, -1)
        return ((self.labels[:, None] >> shifts) & 1).astype(np.int8)

    def label_strings(self) -> list[str]:
        return [format(int(l), f"0{self.m}b") for l in self.labels]

    def with_points(self, points, **metadata) -> "Constellation":
        return Constellation(points, self.labels, self.name, {**self.metadata, **metadata})


def _gray(n: int) -> np.ndarray:
    k = np.arange(n)
    return k ^ (k >> 1)


def square_qam(M: int) -> Constellation:
    """Gray-labelled square QAM (QPSK for ``M = 4``)."""
    side = math.isqrt(M)
    if side * side != M or M < 4:
        raise BadCardinality(f"square QAM needs a square cardinality >= 4, got {M}")
    half = side.bit_length() - 1
    levels = 2 * np.arange(side) - (side - 1)
    gray = _gray(side)
    ii, qq = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    points = levels[ii] + 1j * levels[qq]
    labels = (gray[ii] << half) | gray[qq]
    return Constellation(points.ravel(), labels.ravel(), name=f"{M}QAM")


# -- file I/O ---------------------------------------------------------------

def load_constellation(source) -> Constellation:
    """Read a ``label_bits, i, q`` CSV; ``#`` lines carry ``key: value`` metadata."""
    text = Path(source).read_text() if not isinstance(source, io.TextIOBase) else source.read()
    meta, body = {}, []
    for ln in text.splitlines():
        s = ln.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, sep, val = s.lstrip("# ").partition(":")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        body.append(s)
    rows = list(csv.DictReader(body))
    if not rows:
        raise BadCardinality("empty constellation file")
    widths = {len(r["label_bits"].strip()) for r in rows}
    if len(widths) != 1:
        raise BadLabeling("label_bits have inconsistent lengths")
    m = widths.pop()
    if len(rows) != 2 ** m:
        raise BadCardinality(f"{len(rows)} points for {m}-bit labels")
    labels = []
    for r in rows:
        bits = r["label_bits"].strip()
        if set(bits) - {"0", "1"}:
            raise BadLabeling(f"label {bits!r} is not a bit string")
        labels.append(int(bits, 2))
    points = np.array([float(r["i"]) + 1j * float(r["q"]) for r in rows])
    name = meta.pop("name", Path(str(source)).stem if not isinstance(source, io.TextIOBase) else "")
    return Constellation(points, np.array(labels), name=name, metadata=meta)


def save_constellation(c: Constellation, path, **metadata) -> None:
    meta = {"name": c.name, **c.metadata, **metadata}
    with open(path, "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\n")
        fh.write("label_bits,i,q\n")
        for lab, p in sorted(zip(c.label_strings(), c.points)):
            fh.write(f"{lab},{p.real:.12f},{p.imag:.12f}\n")


# -- GMI --------------------------------------------------------------------

@dataclass(frozen=True)
class GmiEstimate:
    gmi: float  # bits per 2D symbol
    std_error: float
    n_samples: int
    snr: float  # dB


def noise_variance(snr_db: float) -> float:
    """Complex AWGN variance for unit-energy symbols."""
    return 10.0 ** (-snr_db / 10.0)


def _bitwise_llr_terms(c: Constellation, y: np.ndarray, tx: np.ndarray, n0: float) -> np.ndarray:
    """Per-sample sum over bits of log2(sum_all q / sum_{bit=c} q)."""
    x = c.points
    bits = c.bits.astype(float)
    d = np.abs(y[:, None] - x[None, :]) ** 2
    L = -d / n0
    L -= L.max(axis=1, keepdims=True)
    E = np.exp(L)
    s_all = E.sum(axis=1)
    s1 = E @ bits
    s0 = E @ (1.0 - bits)
    tx_bits = c.bits[tx].astype(bool)
    s_c = np.where(tx_bits, s1, s0)
    bad = np.any(s_c <= 0.0, axis=1)
    out = np.empty(len(y))
    out[~bad] = np.sum(np.log2(s_all[~bad, None] / s_c[~bad]), axis=1)
    if np.any(bad):
        # subset sums underflowed; redo those rows in the log domain
        Lb = L[bad]
        lse_all = logsumexp(Lb, axis=1)
        acc = np.zeros(len(Lb))
        for i in range(c.m):
            mask = c.bits[:, i][None, :] == c.bits[tx[bad], i][:, None]
            acc += lse_all - logsumexp(np.where(mask, Lb, -np.inf), axis=1)
        out[bad] = acc * LOG2E
    return out


def gmi_monte_carlo(c: Constellation, snr: float, n_samples: int = 100_000, seed=0,
                    chunk: int | None = None, proposal_scale: float = 1.5) -> GmiEstimate:
    """Monte-Carlo GMI over AWGN with a matched Gaussian bit metric.

    Noise is drawn from a Gaussian ``proposal_scale`` times wider than the
    channel noise and reweighted by the likelihood ratio, so that the rare
    near-boundary samples that dominate the GMI deficit at high SNR are
    actually observed. ``proposal_scale = 1`` is plain sampling. The
    self-normalised weighted mean is used; its standard error follows from
    the delta method on the per-sample terms.
    """
    if n_samples < 1000:
        raise InvalidArgument("n_samples must be >= 1000")
    if not math.isfinite(snr):
        raise InvalidArgument("snr must be finite")
    if proposal_scale < 1:
        raise InvalidArgument("proposal_scale must be >= 1")
    rng = np.random.default_rng(seed)
    n0 = noise_variance(snr)
    s2 = proposal_scale ** 2
    M = c.cardinality
    chunk = chunk or max(256, (1 << 21) // M)
    terms = np.empty(n_samples)
    weights = np.empty(n_samples)
    for start in range(0, n_samples, chunk):
        n = min(chunk, n_samples - start)
        tx = rng.integers(0, M, n)
        noise = rng.standard_normal((n, 2)) @ np.array([1.0, 1j]) * math.sqrt(s2 * n0 / 2)
        weights[start:start + n] = s2 * np.exp(-np.abs(noise) ** 2 / n0 * (1.0 - 1.0 / s2))
        terms[start:start + n] = _bitwise_llr_terms(c, c.points[tx] + noise, tx, n0)
    wbar = weights.mean()
    mean_term = np.dot(weights, terms) / (wbar * n_samples)
    gmi = c.m - mean_term
    se = np.std(weights * (terms - mean_term), ddof=1) / (wbar * math.sqrt(n_samples))
    return GmiEstimate(float(min(max(gmi, 0.0), c.m)), float(se), n_samples, float(snr))


def gmi_quadrature(c: Constellation, snr: float, n_grid: int | None = None,
                   step_sigma: float = 0.25, span_sigma: float = 8.0) -> float:
    """GMI by trapezoidal integration over the received-signal plane.

    The grid covers the constellation extent plus ``span_sigma`` noise
    standard deviations; either ``n_grid`` points per axis or a spacing of
    ``step_sigma`` standard deviations is used.
    """
    n0 = noise_variance(snr)
    sigma = math.sqrt(n0 / 2)
    x = c.points
    lo_r, hi_r = x.real.min() - span_sigma * sigma, x.real.max() + span_sigma * sigma
    lo_i, hi_i = x.imag.min() - span_sigma * sigma, x.imag.max() + span_sigma * sigma
    if n_grid is None:
        n_grid = int(math.ceil(max(hi_r - lo_r, hi_i - lo_i) / (step_sigma * sigma))) + 1
    gr = np.linspace(lo_r, hi_r, n_grid)
    gi = np.linspace(lo_i, hi_i, n_grid)
    wr = np.full(n_grid, gr[1] - gr[0])
    wr[[0, -1]] /= 2
    wi = np.full(n_grid, gi[1] - gi[0])
    wi[[0, -1]] /= 2

    M, m = c.cardinality, c.m
    bits = c.bits.astype(bool)
    log_norm = -math.log(math.pi * n0) - math.log(M)
    total = 0.0
    rows_per_chunk = max(1, (1 << 20) // (n_grid * M))
    for r0 in range(0, n_grid, rows_per_chunk):
        yr = gr[r0:r0 + rows_per_chunk]
        y = (yr[:, None] + 1j * gi[None, :]).ravel()
        w = (wr[r0:r0 + rows_per_chunk, None] * wi[None, :]).ravel()
        logq = -np.abs(y[:, None] - x[None, :]) ** 2 / n0
        lse_all = logsumexp(logq, axis=1)
        acc = np.zeros(len(y))
        for i in range(m):
            for b in (False, True):
                sub = logsumexp(logq[:, bits[:, i] == b], axis=1)
                dens = np.exp(sub + log_norm)  # (1/M) sum_{x in subset} p(y|x)
                acc += dens * (lse_all - sub)
        total += float(np.dot(w, acc))
    return float(min(max(m - total * LOG2E, 0.0), m))


# -- shaping ----------------------------------------------------------------

def _gmi_gradient(c: Constellation, snr: float, n: int, rng) -> tuple[float, np.ndarray]:
    """Sampled GMI and its gradient w.r.t. point positions (complex form)."""
    x = c.points
    M = c.cardinality
    n0 = noise_variance(snr)
    tx = rng.integers(0, M, n)
    noise = rng.standard_normal((n, 2)) @ np.array([1.0, 1j]) * math.sqrt(n0 / 2)
    y = x[tx] + noise
    diff = y[:, None] - x[None, :]
    L = -np.abs(diff) ** 2 / n0
    L -= L.max(axis=1, keepdims=True)
    E = np.exp(L)
    s_all = E.sum(axis=1, keepdims=True)
    p = E / s_all
    bits = c.bits.astype(bool)
    tx_bits = bits[tx]
    # dterm/dL_j = sum_i (p_j - q_ij [j in S_i])
    w = c.m * p
    term = np.zeros(n)
    for i in range(c.m):
        mask = bits[None, :, i] == tx_bits[:, i:i + 1]
        Ei = np.where(mask, E, 0.0)
        si = Ei.sum(axis=1, keepdims=True)
        w -= Ei / si
        term += np.log2(s_all[:, 0] / si[:, 0])
    # dL_j/dx_j = 2 (y - x_j) / n0 ; y moves with x_tx, and L_tx does not depend on x at all
    g_pt = w * 2.0 * diff / n0
    g_pt[np.arange(n), tx] = 0.0
    grad = g_pt.sum(axis=0)
    np.add.at(grad, tx, -g_pt.sum(axis=1))
    grad /= np.log(2.0) * n
    return float(c.m - term.mean()), -grad  # gradient of GMI = -gradient of term


def optimize_shaping(m: int, target_snr: float, iterations: int = 300, step: float = 0.05,
                     seed=0, batch: int | None = None, eval_step_sigma: float = 0.25) -> Constellation:
    """Gradient-ascent geometric shaping from Gray square QAM.

    Labels stay fixed; points are renormalised to unit energy after every
    step. The best iterate is compared with the square-QAM start using the
    quadrature GMI; when it is not strictly better the start is returned
    with ``metadata['no_improvement'] = True``.
    """
    if m not in (4, 6, 8, 10):
        raise InvalidArgument(f"m must be one of 4, 6, 8, 10, got {m}")
    base = square_qam(2 ** m)
    M = base.cardinality
    batch = batch or max(2048, 8 * M)
    rng = np.random.default_rng(seed)
    c = base
    dmin = 2.0 / math.sqrt(2.0 * (M - 1) / 3.0)
    for k in range(iterations):
        if step == 0:
            break
        lr = step * (1.0 - k / iterations)  # linear decay damps the sampling noise
        _, g = _gmi_gradient(c, target_snr, batch, rng)
        # the point with the largest gradient moves by ``lr`` minimum distances
        gmax = np.abs(g).max()
        if gmax > 0:
            c = c.with_points(c.points + lr * dmin * g / gmax)

    g_base = gmi_quadrature(base, target_snr, step_sigma=eval_step_sigma)
    g_new = gmi_quadrature(c, target_snr, step_sigma=eval_step_sigma) if c is not base else g_base
    info = dict(target_snr_db=target_snr, iterations=iterations, step=step, seed=seed,
                gmi=round(g_new, 6), baseline_gmi=round(g_base, 6))
    if g_new > g_base:
        return Constellation(c.points, c.labels, name=f"GS-{M}", metadata={**info, "no_improvement": False})
    return Constellation(base.points, base.labels, name=f"{M}QAM",
                         metadata={**info, "gmi": round(g_base, 6), "no_improvement": True})


# -- format selection -------------------------------------------------------

def _best(candidates):
    """argmax of net rate; ties go to the lower cardinality."""
    return max(candidates, key=lambda t: (t[1], -t[0].cardinality))


def select_best_format(snr: float, formats, fec, seed=0, n_samples: int = 20_000):
    """Constellation with the highest decoded rate at ``snr``.

    Returns ``(constellation, net bits per 2D symbol)`` where the net rate is
    ``m * code_rate`` for the largest decodable punctured code rate.
    """
    from .rate_adaptation import max_code_rate, ngmi

    if not formats:
        raise InvalidArgument("formats must not be empty")
    cands = []
    for c in formats:
        est = gmi_monte_carlo(c, snr, n_samples, seed=np.random.SeedSequence([_seed_int(seed), c.cardinality]))
        rate = max_code_rate(ngmi(est.gmi, c.m), fec)
        cands.append((c, c.m * rate))
    return _best(cands)


def _seed_int(seed) -> int:
    return int(seed) if not isinstance(seed, np.random.SeedSequence) else int(seed.generate_state(1)[0])


@dataclass
class GmiTable:
    """GMI versus SNR per constellation, linearly interpolated in dB."""

    snr_db: np.ndarray
    gmi: dict  # cardinality -> ndarray aligned with snr_db
    constellations: dict  # cardinality -> Constellation

    def gmi_at(self, cardinality: int, snr) -> np.ndarray:
        return np.interp(snr, self.snr_db, self.gmi[cardinality])

    def best_format(self, snr: float, fec):
        """``(cardinality, gmi, code_rate)`` maximising the decoded rate."""
        from .rate_adaptation import max_code_rate, ngmi

        best = None
        for M in sorted(self.gmi):
            c = self.constellations[M]
            g = float(self.gmi_at(M, snr))
            r = max_code_rate(ngmi(g, c.m), fec)
            key = (c.m * r, -M)
            if best is None or key > best[0]:
                best = (key, (M, g, r))
        return best[1]

    def best_format_array(self, snr, fec):
        """Vectorised :meth:`best_format`: arrays of cardinality, GMI and code rate."""
        from .rate_adaptation import max_code_rate_array

        snr = np.asarray(snr, dtype=float)
        best_M = np.zeros(snr.shape, dtype=int)
        best_g = np.zeros(snr.shape)
        best_r = np.zeros(snr.shape)
        best_net = np.full(snr.shape, -1.0)
        for M in sorted(self.gmi):  # ascending, so strict ">" keeps the lower cardinality on ties
            m = self.constellations[M].m
            g = self.gmi_at(M, snr)
            r = max_code_rate_array(np.clip(1.0 - (m - g) / m, 0.0, 1.0), fec)
            net = m * r
            better = net > best_net
            best_M = np.where(better, M, best_M)
            best_g = np.where(better, g, best_g)
            best_r = np.where(better, r, best_r)
            best_net = np.where(better, net, best_net)
        return best_M, best_g, best_r


def _table_point(args):
    c, snr, n, seed, idx = args
    ss = np.random.SeedSequence([seed, c.cardinality, idx])
    return gmi_monte_carlo(c, snr, n, seed=ss).gmi


def build_gmi_table(constellations, snr_grid, n_samples: int = 100_000, seed: int = 0,
                    jobs: int = 1) -> GmiTable:
    """Monte-Carlo GMI at each grid SNR; every point has its own seed stream."""
    snr_grid = np.asarray(sorted(snr_grid), dtype=float)
    by_card = {c.cardinality: c for c in constellations}
    tasks = [(by_card[M], float(s), n_samples, seed, i)
             for M in sorted(by_card) for i, s in enumerate(snr_grid)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(_table_point, tasks))
    else:
        values = [_table_point(t) for t in tasks]
    gmi, k = {}, 0
    for M in sorted(by_card):
        g = np.array(values[k:k + len(snr_grid)])
        # GMI never decreases with SNR; remove Monte-Carlo wiggle before interpolating
        gmi[M] = np.maximum.accumulate(g)
        k += len(snr_grid)
    return GmiTable(snr_grid, gmi, by_card)
