import math

import numpy as np
import pytest
from scipy import special

from fbmb.bounds import (asymptotic_sweep, default_u_minus, lemma_bounds, min_norm, normal_cdf,
                         normal_quantile, theorem_lower, theorem_upper)
from fbmb.drifts import example51, example52, example_norm
from fbmb.fbm_mc import Boundary, estimate_channel, estimate_P, estimate_P_girsanov
from fbmb.frac_calc import constants
from fbmb.grid import SampledFunction, TimeGrid
from fbmb.majorant import build_bundle
from fbmb.rkhs import Drift, zero_drift

H = 0.75
DGRID = TimeGrid(20.0, 20001)
MGRID = TimeGrid(1.0, 257)


def erf_series_cdf(x, terms=80):
    """``Phi`` from the Maclaurin series of erf."""
    z = x / math.sqrt(2)
    s = sum((-1) ** k * z ** (2 * k + 1) / (math.factorial(k) * (2 * k + 1)) for k in range(terms))
    return 0.5 + s / math.sqrt(math.pi)


@pytest.fixture(scope="module")
def bundles():
    return {g: build_bundle(example51(DGRID, H, g), H) for g in (1.0, 2.0, 4.0)}


def test_normal_cdf_oracles():
    assert normal_cdf(0.0) == 0.5 and normal_quantile(0.5) == 0.0
    for x in (1.0, -1.0, 2.5, -3.0):
        assert normal_cdf(x) == pytest.approx(erf_series_cdf(x), abs=1e-8)
    assert normal_cdf(1.0) == pytest.approx(0.841345, abs=1e-6)
    assert normal_cdf(-1.0) == pytest.approx(0.158655, abs=1e-6)
    x = np.linspace(-6, 6, 241)
    assert np.max(np.abs(normal_quantile(normal_cdf(x)) - x)) < 1e-6


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_normal_quantile_rejects(p):
    with pytest.raises(ValueError):
        normal_quantile(p)


def test_lemma_examples():
    lb = lemma_bounds(0.3, 0.0, 0.0)
    assert lb.abs_bound == 0.0 and lb.bracket == (0.3, 0.3)
    lb = lemma_bounds(0.5, 1.0, 1.0)
    assert lb.alpha == 0.0
    assert lb.bracket[0] == pytest.approx(0.158655, abs=1e-6)
    assert lb.bracket[1] == pytest.approx(0.841345, abs=1e-6)
    assert lb.abs_bound == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-12)
    assert lb.abs_bound == pytest.approx(0.398942, abs=1e-6)
    with pytest.raises(ValueError):
        lemma_bounds(1.0, 1.0)
    with pytest.raises(ValueError):
        lemma_bounds(0.5, -1.0)


def test_lemma_bracket_ordered():
    rng = np.random.default_rng(0)
    for _ in range(100):
        lb = lemma_bounds(rng.uniform(0.01, 0.99), rng.uniform(0, 3), rng.uniform(0, 3))
        assert lb.bracket[0] <= lb.bracket[1]


def test_upper_zero_boundary_is_gaussian_decay(bundles):
    b = bundles[1.0]
    tb = theorem_upper(b, 0.0, 0.4)
    assert tb.stieltjes.value == 0.0
    assert tb.value == pytest.approx(0.4 * math.exp(-0.5 * b.norms["h_tilde"] ** 2), rel=1e-12)


def test_upper_constant_boundary_is_infinite(bundles):
    # K(0+) is infinite for this drift, so any u(0) > 0 gives an infinite Stieltjes term
    tb = theorem_upper(bundles[2.0], 1.0, 1.0)
    assert tb.value == np.inf and "TRIVIAL_INFINITE" in tb.flags and not tb.void


def test_upper_sqrt_boundary_against_closed_form(bundles):
    """``int sqrt(t) d(-K) = gamma Gamma(1/4) / (2 C1)`` and ``||h_tilde||^2 = gamma^2 sqrt(pi/2)``."""
    g = 2.0
    u = SampledFunction(DGRID, np.sqrt(DGRID.nodes))
    tb = theorem_upper(bundles[g], u, 1.0)
    st = g * special.gamma(0.25) / (2 * constants(H).C1)
    half = 0.5 * g * g * example_norm(H) ** 2
    assert tb.value == pytest.approx(math.exp(st - half), rel=1e-2)


def test_lower_degenerate_and_deterministic(bundles):
    b = bundles[1.0]
    tb = theorem_lower(b, -1e6, 0.7)
    assert tb.value == 0.0 and "DEGENERATE_ZERO" in tb.flags
    um = SampledFunction(DGRID, -np.sqrt(DGRID.nodes))
    a1 = theorem_lower(b, um, 0.3).value
    a2 = theorem_lower(b, um, 0.3).value
    assert a1 == a2 and 0 < a1 < 0.3


def test_lower_refused_without_dominance():
    H_ = 0.25
    grid = TimeGrid(10.0, 2001)
    t = grid.nodes
    f = Drift(SampledFunction(grid, np.sin(2 * t) * np.exp(-t / 3)))
    b = build_bundle(f, H_)
    if b.report.evidence["f_hat_dominates"]:
        pytest.skip("drift happens to be dominated")
    with pytest.raises(ValueError, match="refused"):
        theorem_lower(b, -1.0, 0.5)


def test_void_flag_when_conditions_fail():
    grid = TimeGrid(10.0, 2001)
    f = Drift(SampledFunction(grid, grid.nodes.copy()))
    b = build_bundle(f, H)
    assert not b.report.all_ok
    tb = theorem_upper(b, 0.0, 1.0)
    assert tb.void and "VOID" in tb.flags


def test_sqrt_boundary_sandwich(bundles):
    """A regime where both bounds are informative: ``u = sqrt(t)``, ``u_- = -sqrt(t)``."""
    g = 4.0
    b = bundles[g]
    u = SampledFunction(MGRID, np.sqrt(MGRID.nodes))
    um = SampledFunction(MGRID, -np.sqrt(MGRID.nodes))
    bd = Boundary(u, um)
    p0 = estimate_P(None, bd, H, MGRID, 50_000, 1)
    pc = estimate_channel(bd, H, MGRID, 50_000, 1)
    pf = estimate_P_girsanov(b.drift, bd, H, MGRID, 50_000, 2, tilt=b.f_hat)
    lo = theorem_lower(b, um, pc).value
    up = theorem_upper(b, u, p0).value
    assert 0 < lo < up < 1
    assert lo - 3 * pf.std_error <= pf.estimate <= up + 3 * pf.std_error


def test_min_norm(bundles):
    b = bundles[1.0]
    r = min_norm(b)
    assert r["consistent"] and not r["void"]
    assert r["norm"] == pytest.approx(example_norm(H), rel=1e-3)
    z = min_norm(build_bundle(zero_drift(TimeGrid(5.0, 501)), H))
    assert z["norm"] == 0.0 and z["consistent"]


def test_h_tilde_homogeneity(bundles):
    n1 = bundles[1.0].norms["h_tilde"]
    assert bundles[2.0].norms["h_tilde"] == pytest.approx(2 * n1, rel=1e-12)
    assert bundles[4.0].norms["h_tilde"] == pytest.approx(4 * n1, rel=1e-12)


def test_sweep_rows(bundles):
    b = bundles[1.0]
    bd = Boundary.constant(MGRID, 1.0)
    rows = asymptotic_sweep(b.drift, b.f_hat, bd, H, MGRID, [1.0, 2.0], 5000, 3,
                            b.norms["h_tilde"])
    assert [r.gamma for r in rows] == [0.0, 1.0, 2.0]
    assert rows[0].target == 0.0 and np.isnan(rows[0].ratio)
    assert rows[2].target == pytest.approx(4 * rows[1].target, rel=1e-15)
    assert len({r.seed for r in rows}) == 3
    base = asymptotic_sweep(b.drift, b.f_hat, bd, H, MGRID, [], 5000, 3, b.norms["h_tilde"])
    assert len(base) == 1 and base[0].neg_log_p == rows[0].neg_log_p
    with pytest.raises(ValueError):
        asymptotic_sweep(b.drift, b.f_hat, bd, H, MGRID, [2.0, 1.0], 5000, 3, 1.0)


def test_default_u_minus():
    bd = Boundary.constant(MGRID, 1.0)
    c, est = default_u_minus(bd, H, MGRID, 2000, 4, iters=8)
    assert 0.1 <= c <= 10 and est.estimate >= 0.05
