import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs
from scipy import integrate, stats as st

from bvgibbs.analysis import (
    DensityCurve,
    batch_means_mcse,
    compare_scan_orders,
    confidence_density_rho,
    confidence_density_rho_pdf,
    fiducial_rho_curve,
    gelman_rubin,
    histogram,
    marginal_fiducial_mu,
    marginal_fiducial_sigma,
    normal_mean_fiducial,
    plot_values,
    prior_mu_curve,
    prior_sigma_curve,
    read_curve_csv,
    summarize,
)
from bvgibbs.errors import DomainError, ShapeError, SizeError
from bvgibbs.fiducial import TruncationConfig
from bvgibbs.model import PriorSpec
from bvgibbs.sampler import ChainTrace, SamplerConfig, run_chain


def test_psrf_identical_chains():
    x = np.random.default_rng(0).standard_normal((500, 5))
    rep = gelman_rubin([x, x.copy(), x.copy()])
    for v in rep.psrf.values():
        assert v == pytest.approx(math.sqrt(499 / 500), rel=1e-12)
    assert rep.passed


def test_psrf_iid_chains_near_one():
    rng = np.random.default_rng(1)
    rep = gelman_rubin([rng.standard_normal((20000, 5)) for _ in range(4)])
    assert all(0.999 <= v < 1.01 for v in rep.psrf.values())


def test_psrf_detects_offset_chain():
    rng = np.random.default_rng(2)
    chains = [rng.standard_normal((2000, 5)) for _ in range(3)] + [rng.standard_normal((2000, 5)) + 3]
    rep = gelman_rubin(chains)
    assert all(v > 1.5 for v in rep.psrf.values())
    assert not rep.passed


@settings(max_examples=40, deadline=None)
@given(a=hs.floats(0.01, 100) | hs.floats(-100, -0.01), b=hs.floats(-1e3, 1e3), seed=hs.integers(0, 2**32 - 1))
def test_psrf_affine_invariant(a, b, seed):
    rng = np.random.default_rng(seed)
    chains = [rng.standard_normal((200, 5)) + rng.normal(0, 0.2, 5) for _ in range(3)]
    r1 = gelman_rubin(chains).psrf
    r2 = gelman_rubin([a * c + b for c in chains]).psrf
    for k in r1:
        assert r2[k] == pytest.approx(r1[k], rel=1e-6)


def test_psrf_shape_errors():
    x = np.zeros((100, 5))
    with pytest.raises(ShapeError):
        gelman_rubin([x, np.zeros((99, 5))])
    with pytest.raises(ShapeError):
        gelman_rubin([x])
    with pytest.raises(ShapeError):
        gelman_rubin([np.zeros((5, 5)), np.zeros((5, 5))])


def test_report_json_keys():
    x = np.random.default_rng(3).standard_normal((100, 5))
    js = gelman_rubin([x, x + 0.01]).to_json()
    assert {"variant", "threshold", "chains", "length", "psrf", "pass", "per_chain"} <= set(js)


def test_summary_constant_trace():
    s = summarize(np.full((100, 5), 2.5))
    for name in ("mu_x", "rho"):
        p = s[name]
        assert (p.mean, p.sd, p.q025, p.q50, p.q975) == (2.5, 0.0, 2.5, 2.5, 2.5)
        assert p.mcse == 0.0


def test_summary_linear_trace():
    x = np.tile(np.arange(1, 101, dtype=float)[:, None], (1, 5))
    p = summarize(x)["mu_y"]
    assert p.mean == 50.5 and p.q50 == 50.5
    assert p.sd == pytest.approx(np.std(np.arange(1, 101), ddof=1))


def test_batch_means_mcse_iid():
    rng = np.random.default_rng(4)
    errs = [batch_means_mcse(rng.standard_normal(10000)) for _ in range(200)]
    assert np.mean(errs) == pytest.approx(0.01, rel=0.05)
    assert math.isnan(batch_means_mcse(np.ones(3)))


def test_histogram_of_equal_values():
    h = histogram(np.full(50, 3.0), bins=10)
    assert h.area() == pytest.approx(1.0, abs=1e-12)
    assert np.count_nonzero(h.densities) == 1


def test_histogram_of_uniform_samples():
    u = np.random.default_rng(5).random(1_000_000)
    h = histogram(u, bins=20, range=(0, 1))
    assert np.max(np.abs(h.densities - 1.0)) < 0.02
    assert h.area() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(SizeError):
        histogram([])


def test_plot_values_sigma_scale():
    tr = ChainTrace(np.array([[0, 0, 4.0, 9.0, 0.1], [1, 1, 1.0, 0.25, 0.2]]))
    assert np.array_equal(plot_values(tr, "sigma_x"), [2.0, 1.0])
    assert np.array_equal(plot_values(tr, "sigma_y"), [3.0, 0.5])
    assert np.array_equal(plot_values(tr, "rho"), [0.1, 0.2])


def _quad(f, lo, hi):
    return integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]


def test_fiducial_mu_curve():
    c = marginal_fiducial_mu(0.2, 1.5, 12)
    mid = len(c.abscissae) // 2
    np.testing.assert_allclose(c.densities, c.densities[::-1], rtol=1e-12)
    assert c.abscissae[mid] + c.abscissae[-1 - mid] == pytest.approx(0.4)
    law = st.t(11, loc=0.2, scale=1.5 / math.sqrt(12))
    np.testing.assert_allclose(c.densities, law.pdf(c.abscissae), rtol=1e-10)
    assert _quad(lambda v: law.pdf(v), -np.inf, np.inf) == pytest.approx(1.0, abs=1e-6)
    assert c.area() == pytest.approx(1.0, abs=1e-4)


def test_fiducial_mu_tends_to_normal():
    c = marginal_fiducial_mu(0.0, 1.0, 10_000)
    want = st.norm(0, 0.01).pdf(c.abscissae)
    assert np.max(np.abs(c.densities - want)) / want.max() < 1e-4


def test_fiducial_sigma_curve():
    s, n = 0.9, 15
    c = marginal_fiducial_sigma(s, n)
    # density of sigma from (n - 1) s^2 / sigma^2 ~ chi2_{n-1}
    pdf = lambda v: st.chi2(n - 1).pdf((n - 1) * s * s / v**2) * 2 * (n - 1) * s * s / v**3
    np.testing.assert_allclose(c.densities, pdf(c.abscissae), rtol=1e-9)
    assert _quad(pdf, 0, np.inf) == pytest.approx(1.0, abs=1e-6)
    median = s * math.sqrt((n - 1) / st.chi2(n - 1).median())
    assert c.quantile(0.5) == pytest.approx(median, rel=1e-4)
    # mode of sigma2 = (n - 1) s^2 / (n + 1): check through the sigma2 density
    v2 = np.linspace(0.2, 2.0, 200001)
    dens2 = st.chi2(n - 1).pdf((n - 1) * s * s / v2) * (n - 1) * s * s / v2**2
    assert v2[np.argmax(dens2)] == pytest.approx((n - 1) * s * s / (n + 1), abs=2e-5)


def test_prior_curves_use_prior_constants():
    prior = PriorSpec(0.3, 1.2, 50, 0.2, 0.75, 100)
    mu = prior_mu_curve(prior, "x")
    assert mu.abscissae[np.argmax(mu.densities)] == pytest.approx(0.3, abs=0.01)
    np.testing.assert_allclose(mu.densities, mu.densities[::-1], rtol=1e-12)
    sig = prior_sigma_curve(prior, "y")
    assert sig.area() == pytest.approx(1.0, abs=1e-4)
    assert sig.quantile(0.5) == pytest.approx(0.75 * math.sqrt(99 / st.chi2(99).median()), rel=1e-4)


def test_normal_mean_fiducial():
    a = normal_mean_fiducial(1.0, 4.0, 10)
    b = normal_mean_fiducial(1.0, 1.0, 10)
    assert b.densities.max() == pytest.approx(2 * a.densities.max(), rel=1e-12)
    np.testing.assert_allclose(a.densities, st.norm(1, math.sqrt(0.4)).pdf(a.abscissae), rtol=1e-12)
    with pytest.raises(DomainError):
        normal_mean_fiducial(0.0, 0.0, 3)


def test_confidence_density_rho():
    r, n = 0.78, 100
    assert float(confidence_density_rho_pdf(r, r, n)) == pytest.approx(
        math.sqrt(97) / math.sqrt(2 * math.pi) / (1 - r * r), rel=1e-14
    )
    assert float(confidence_density_rho_pdf(r, r, n)) == pytest.approx(10.03, abs=0.01)
    total = _quad(lambda v: float(confidence_density_rho_pdf(v, r, n)), -1, 1)
    assert total == pytest.approx(1.0, abs=1e-6)
    c = confidence_density_rho(r, n, points=4001)
    assert c.quantile(0.5) == pytest.approx(r, abs=1e-5)
    with pytest.raises(DomainError):
        confidence_density_rho(0.5, 3)


def test_fiducial_and_confidence_rho_agree_in_the_bulk():
    r, n = 0.78, 100
    fid = fiducial_rho_curve(r, n, TruncationConfig(math.inf), points=4001)
    lo, hi = fid.quantile(0.025), fid.quantile(0.975)
    keep = (fid.abscissae >= lo) & (fid.abscissae <= hi)
    ratio = fid.densities[keep] / confidence_density_rho_pdf(fid.abscissae[keep], r, n)
    assert 0.5 < ratio.min() and ratio.max() < 2.0
    assert fid.area() == pytest.approx(1.0, abs=1e-4)


def test_curve_csv_round_trip(tmp_path):
    c = marginal_fiducial_mu(0.0, 1.0, 20, points=64)
    c.to_csv(tmp_path / "c.csv")
    back = read_curve_csv(tmp_path / "c.csv")
    assert np.array_equal(back.abscissae, c.abscissae) and np.array_equal(back.densities, c.densities)
    with pytest.raises(ValueError):
        DensityCurve([0, 0], [1, 1], "bad")


def test_compare_identical_traces():
    x = np.random.default_rng(6).standard_normal((1000, 5))
    out = compare_scan_orders({"a": x, "b": x.copy()})
    assert out["pass"]
    assert all(v == 0 for v in out["pairs"][0]["z"].values())
    assert out["pairs"][0]["corr_max_abs_diff"] == 0


def test_compare_independent_iid_not_flagged():
    rng = np.random.default_rng(7)
    out = compare_scan_orders({k: rng.standard_normal((10000, 5)) for k in "abc"}, reference="a")
    assert out["pass"]
    assert [(p["a"], p["b"]) for p in out["pairs"]] == [("a", "b"), ("a", "c")]


def test_compare_flags_different_targets(ref_stats, ref_prior):
    cfg = SamplerConfig(iterations=10000, burn_in=1000, seed=3)
    other = PriorSpec(3.0, 1.2, 500, 0.2, 0.75, 100)
    out = compare_scan_orders(
        {"reference": run_chain(ref_stats, ref_prior, config=cfg), "shifted": run_chain(ref_stats, other, config=cfg)}
    )
    assert out["flag"] and abs(out["pairs"][0]["z"]["mu_x"]) > 3
