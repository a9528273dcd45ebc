import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hcfbidi.constellation import (
    Constellation,
    GmiTable,
    build_gmi_table,
    gmi_monte_carlo,
    gmi_quadrature,
    load_constellation,
    optimize_shaping,
    save_constellation,
    select_best_format,
    square_qam,
)
from hcfbidi.errors import BadCardinality, BadLabeling, InvalidArgument
from hcfbidi.rate_adaptation import FecModel, ngmi


def qpsk_gmi_oracle(snr_db, n=2001, span=8.0):
    """Independent per-bit integral for Gray QPSK, as a full 2D trapezoid grid.

    Gray QPSK splits into two independent BPSK bits, one per quadrature, so
    the bit-metric sum can be written without the shared estimator code.
    """
    n0 = 10 ** (-snr_db / 10)
    sigma = np.sqrt(n0 / 2)
    a = np.sqrt(0.5)
    u = np.linspace(-a - span * sigma, a + span * sigma, n)
    yi, yq = np.meshgrid(u, u, indexing="ij")
    total = 0.0
    for xi, xq in itertools.product((-a, a), repeat=2):
        pdf = np.exp(-((yi - xi) ** 2 + (yq - xq) ** 2) / n0) / (np.pi * n0)
        # log2(q(+a) + q(-a)) - log2(q(x)) per quadrature
        li = np.logaddexp(-(yi - a) ** 2 / n0, -(yi + a) ** 2 / n0) + (yi - xi) ** 2 / n0
        lq = np.logaddexp(-(yq - a) ** 2 / n0, -(yq + a) ** 2 / n0) + (yq - xq) ** 2 / n0
        integrand = pdf * (li + lq) / np.log(2)
        total += np.trapezoid(np.trapezoid(integrand, u, axis=1), u) / 4
    return 2 - total


@pytest.fixture(scope="module")
def bundled(scenario):
    return list(scenario.constellations.values())


def test_square_qam_file_round_trip(tmp_path, qam16):
    path = tmp_path / "qam16.csv"
    save_constellation(qam16, path)
    c = load_constellation(path)
    assert c.cardinality == 16 and c.m == 4
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-9)
    assert sorted(c.label_strings()) == [format(i, "04b") for i in range(16)]


def test_duplicate_labels_rejected(tmp_path):
    rows = ["label_bits,i,q", "00,1,1", "00,-1,1", "10,-1,-1", "11,1,-1"]
    (tmp_path / "dup.csv").write_text("\n".join(rows))
    with pytest.raises(BadLabeling):
        load_constellation(tmp_path / "dup.csv")


def test_wrong_count_rejected(tmp_path):
    rows = ["label_bits,i,q", "00,1,1", "01,-1,1", "10,-1,-1"]
    (tmp_path / "three.csv").write_text("\n".join(rows))
    with pytest.raises(BadCardinality):
        load_constellation(tmp_path / "three.csv")


def test_scaled_file_is_identical(tmp_path, qam16):
    big = Constellation(7 * qam16.points, qam16.labels)
    save_constellation(big, tmp_path / "big.csv")
    c = load_constellation(tmp_path / "big.csv")
    order = np.argsort(c.labels)
    ref = np.argsort(qam16.labels)
    assert np.allclose(c.points[order], qam16.points[ref], atol=1e-11)


def test_bundled_constellations_valid(bundled):
    assert sorted(c.cardinality for c in bundled) == [16, 64, 256, 1024]
    for c in bundled:
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-9)
        assert len(set(c.labels.tolist())) == c.cardinality
        assert c.name == f"GS-{c.cardinality}"


def test_gmi_high_snr(bundled):
    for c in bundled:
        assert gmi_monte_carlo(c, 60.0, 2000, seed=0).gmi == pytest.approx(c.m, abs=1e-3)


def test_gmi_low_snr(qam16):
    assert gmi_monte_carlo(qam16, -30.0, 5000, seed=0).gmi < 0.05


def test_qpsk_against_fine_grid_oracle():
    est = gmi_monte_carlo(square_qam(4), 0.0, 100_000, seed=11)
    assert abs(est.gmi - qpsk_gmi_oracle(0.0)) < 3 * est.std_error


def test_quadrature_matches_oracle():
    assert gmi_quadrature(square_qam(4), 0.0, n_grid=2001) == pytest.approx(qpsk_gmi_oracle(0.0), abs=1e-6)


def test_mc_deterministic(qam16):
    a = gmi_monte_carlo(qam16, 8.0, 5000, seed=3)
    b = gmi_monte_carlo(qam16, 8.0, 5000, seed=3)
    assert a == b


def test_mc_rejects_small_sample(qam16):
    with pytest.raises(InvalidArgument):
        gmi_monte_carlo(qam16, 8.0, 999)


@pytest.mark.parametrize("snr", [0.0, 5.0, 10.0, 15.0, 20.0])
def test_mc_consistent_with_quadrature(bundled, snr):
    for c in bundled:
        est = gmi_monte_carlo(c, snr, 20_000, seed=np.random.SeedSequence([7, c.cardinality, int(snr)]))
        q = gmi_quadrature(c, snr, step_sigma=0.5 if c.cardinality == 1024 else 0.25)
        assert abs(est.gmi - q) < 3 * est.std_error, c.name


def test_ngmi_examples():
    assert ngmi(10.0, 10) == 1.0
    assert ngmi(0.0, 10) == 0.0
    assert ngmi(8.8, 10) == pytest.approx(0.88)


def test_select_low_snr(bundled):
    c, _ = select_best_format(3.0, bundled, FecModel(), seed=0)
    assert c.cardinality == 16


def test_select_high_snr(bundled):
    c, rate = select_best_format(30.0, bundled, FecModel(), seed=0)
    assert c.cardinality == 1024
    assert rate > 8.0


def test_select_single_format(qam16):
    c, _ = select_best_format(12.0, [qam16], FecModel())
    assert c is qam16


def test_select_empty_rejected():
    with pytest.raises(InvalidArgument):
        select_best_format(12.0, [], FecModel())


def test_select_order_invariant(bundled):
    a = select_best_format(14.0, bundled, FecModel(), seed=5)
    b = select_best_format(14.0, bundled[::-1], FecModel(), seed=5)
    assert a[0].cardinality == b[0].cardinality and a[1] == b[1]


def test_shaping_gain_at_6_db():
    c = optimize_shaping(4, 6.0, iterations=200, seed=0)
    assert not c.metadata["no_improvement"]
    assert gmi_quadrature(c, 6.0) > gmi_quadrature(square_qam(16), 6.0)


def test_shaping_vanishes_at_high_snr():
    c = optimize_shaping(4, 30.0, iterations=50, seed=0)
    assert abs(gmi_quadrature(c, 30.0) - gmi_quadrature(square_qam(16), 30.0)) < 0.01


def test_shaping_zero_step_is_baseline(qam16):
    c = optimize_shaping(4, 6.0, iterations=20, step=0.0)
    assert np.array_equal(c.points, qam16.points)
    assert c.metadata["no_improvement"]


def test_shaping_bad_m():
    with pytest.raises(InvalidArgument):
        optimize_shaping(5, 6.0)


def test_shaping_deterministic():
    a = optimize_shaping(4, 8.0, iterations=20, seed=4)
    b = optimize_shaping(4, 8.0, iterations=20, seed=4)
    assert np.array_equal(a.points, b.points)


def test_table_monotone(small_table):
    for g in small_table.gmi.values():
        assert np.all(np.diff(g) >= 0)


def test_table_parallel_identical(bundled):
    a = build_gmi_table(bundled[:2], [4.0, 8.0], n_samples=2000, seed=2, jobs=1)
    b = build_gmi_table(bundled[:2], [4.0, 8.0], n_samples=2000, seed=2, jobs=2)
    for M in a.gmi:
        assert np.array_equal(a.gmi[M], b.gmi[M])


def test_table_tie_goes_to_lower_cardinality(qam16):
    # 4 bits x 0.78 and 6 bits x 0.52 both carry 3.12 net bits
    q64 = square_qam(64)
    t = GmiTable(np.array([0.0, 10.0]), {16: np.full(2, 3.2), 64: np.full(2, 3.27)}, {16: qam16, 64: q64})
    M, _, r = t.best_format(5.0, FecModel())
    assert (M, r) == (16, 0.78)
    assert t.best_format_array(np.array([5.0]), FecModel())[0][0] == 16
    t0 = GmiTable(np.array([0.0, 10.0]), {16: np.zeros(2), 64: np.zeros(2)}, {16: qam16, 64: q64})
    assert t0.best_format(5.0, FecModel())[0] == 16


@given(st.lists(st.floats(-5, 40), min_size=1, max_size=20), st.floats(0, 0.1))
def test_vector_format_choice_matches_scalar(snrs, gap):
    """The vectorised selection agrees with the per-channel loop."""
    t = _table()
    fec = FecModel(ngmi_gap=gap)
    M, g, r = t.best_format_array(np.array(snrs), fec)
    for i, s in enumerate(snrs):
        assert (M[i], g[i], r[i]) == pytest.approx(t.best_format(s, fec))


@given(st.floats(-10, 30))
def test_gmi_monotone_in_snr(snr):
    """One more dB never lowers the quadrature GMI."""
    c = square_qam(16)
    assert gmi_quadrature(c, snr + 1, step_sigma=0.5) >= gmi_quadrature(c, snr, step_sigma=0.5) - 1e-9


@given(st.floats(-10, 40), st.sampled_from([4, 16, 64]))
def test_gmi_in_range(snr, M):
    """GMI lies in [0, m]."""
    est = gmi_monte_carlo(square_qam(M), snr, 1000, seed=0)
    assert 0 <= est.gmi <= square_qam(M).m
    assert est.std_error >= 0


@given(st.floats(0.1, 100))
def test_scale_invariance(k):
    """Scaling every point leaves the normalised constellation and its GMI unchanged."""
    c = square_qam(16)
    scaled = Constellation(k * c.points, c.labels)
    assert np.allclose(scaled.points, c.points, atol=1e-12)
    assert gmi_monte_carlo(scaled, 9.0, 1000, seed=1).gmi == pytest.approx(
        gmi_monte_carlo(c, 9.0, 1000, seed=1).gmi, abs=1e-9)


_TABLE = None


def _table():
    global _TABLE
    if _TABLE is None:
        qs = [square_qam(M) for M in (16, 64, 256)]
        _TABLE = build_gmi_table(qs, np.arange(0.0, 34.0, 4.0), n_samples=2000, seed=0)
    return _TABLE
