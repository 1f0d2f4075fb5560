import numpy as np
import pytest
from scipy import stats

from fbmb.drifts import example51
from fbmb.fbm_mc import (Boundary, estimate_channel, estimate_P, estimate_P_girsanov,
                         generate_paths, molchan_martingale, read_ensemble, volterra_matrix,
                         write_ensemble)
from fbmb.grid import SampledFunction, TimeGrid
from fbmb.majorant import build_bundle
from fbmb.rkhs import covariance

GRID = TimeGrid(1.0, 129)
METHODS = ["cholesky", "circulant", "volterra"]


def _var_se(x):
    v = np.var(x)
    return v, np.sqrt(np.var((x - x.mean()) ** 2) / x.size)


@pytest.mark.parametrize("method", METHODS)
def test_brownian_variance(method):
    B = generate_paths(0.5, GRID, 50_000, method, seed=1).B
    assert np.all(B[:, 0] == 0)
    v, se = _var_se(B[:, -1])
    assert abs(v - 1.0) <= 3 * se


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("H", [0.25, 0.75])
def test_cross_covariance(method, H):
    B = generate_paths(H, GRID, 50_000, method, seed=2).B
    i, j = 64, 128
    prod = B[:, i] * B[:, j]
    se = prod.std() / np.sqrt(prod.size)
    tol = 3 * se + (0.01 if method == "volterra" else 0.0)
    assert abs(prod.mean() - covariance(0.5, 1.0, H)) <= tol


def test_cholesky_vs_circulant_ks():
    a = generate_paths(0.75, GRID, 10_000, "cholesky", seed=3).B[:, -1]
    b = generate_paths(0.75, GRID, 10_000, "circulant", seed=4).B[:, -1]
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_cholesky_size_guard():
    with pytest.raises(ValueError):
        generate_paths(0.75, TimeGrid(1.0, 5000), 100, "cholesky")


def test_unknown_method_rejected():
    with pytest.raises(ValueError):
        generate_paths(0.75, GRID, 100, "midpoint")


def test_volterra_matrix_lower_triangular():
    V = volterra_matrix(0.75, 1.0, 33)
    assert np.allclose(np.triu(V, 1), 0.0)
    assert np.allclose(volterra_matrix(0.5, 1.0, 33)[np.tril_indices(32)], 1.0)


def test_reproducible_across_threads(monkeypatch):
    monkeypatch.setenv("FBMB_THREADS", "1")
    a = generate_paths(0.75, GRID, 9000, "circulant", seed=9).B
    monkeypatch.setenv("FBMB_THREADS", "4")
    b = generate_paths(0.75, GRID, 9000, "circulant", seed=9).B
    assert np.array_equal(a, b)


def test_molchan_variance_and_increments():
    H = 0.75
    M = molchan_martingale(generate_paths(H, GRID, 50_000, "circulant", seed=5))
    for i, t in ((64, 0.5), (128, 1.0)):
        assert np.var(M[:, i]) == pytest.approx(t ** (2 - 2 * H), rel=0.05)
    x, y = M[:, 64], M[:, 128] - M[:, 64]
    prod = x * y
    assert abs(prod.mean()) <= 3 * prod.std() / np.sqrt(prod.size)


def test_molchan_brownian_is_identity():
    ens = generate_paths(0.5, GRID, 200, "circulant", seed=6)
    assert np.allclose(molchan_martingale(ens), ens.B)


def test_estimate_trivial_events():
    b = Boundary.constant(GRID, 10.0)
    assert estimate_P(None, b, 0.75, GRID, 2000, 0).estimate >= 0.999
    b1 = Boundary.constant(GRID, 1.0)
    # u + t is not enough on a grid: B(t_i) <= -t_i at every node has positive probability
    above = SampledFunction(GRID, np.where(GRID.nodes > 0, 11.0, 0.0))
    assert estimate_P(above, b1, 0.75, GRID, 2000, 0).estimate == 0.0


def test_estimate_rejects_small_m():
    with pytest.raises(ValueError):
        estimate_P(None, Boundary.constant(GRID, 1.0), 0.75, GRID, 50, 0)


def test_estimator_ci_contains_estimate():
    r = estimate_P(None, Boundary.constant(GRID, 0.5), 0.25, GRID, 5000, 1)
    assert r.ci95[0] <= r.estimate <= r.ci95[1]


def test_monotone_in_drift():
    b = Boundary.constant(GRID, 1.0)
    f = SampledFunction(GRID, 0.3 * GRID.nodes)
    g = SampledFunction(GRID, 0.3 * GRID.nodes + 0.1)
    for method in METHODS:
        pf = estimate_P(f, b, 0.75, GRID, 5000, 7, method).estimate
        pg = estimate_P(g, b, 0.75, GRID, 5000, 7, method).estimate
        assert pg <= pf


def test_boundary_invariants():
    with pytest.raises(ValueError):
        Boundary.constant(GRID, -0.1)
    with pytest.raises(ValueError):
        Boundary.constant(GRID, 1.0, lower=1.0)


def test_channel_below_upper():
    b = Boundary.constant(GRID, 1.0, lower=-1.0)
    pc = estimate_channel(b, 0.75, GRID, 5000, 3).estimate
    pu = estimate_P(None, b, 0.75, GRID, 5000, 3).estimate
    assert pc <= pu


def test_girsanov_zero_tilt_reduces():
    b = Boundary.constant(GRID, 1.0)
    a = estimate_P_girsanov(None, b, 0.75, GRID, 3000, 4, tilt=None)
    p = estimate_P(None, b, 0.75, GRID, 3000, 4, "volterra")
    assert a.estimate == p.estimate


@pytest.fixture(scope="module")
def ex51_fhat():
    H = 0.75
    return build_bundle(example51(TimeGrid(20.0, 4001), H), H).f_hat


def test_girsanov_mean_weight(ex51_fhat):
    b = Boundary.constant(GRID, 1.0)
    r = estimate_P_girsanov(None, b, 0.75, GRID, 50_000, 5, tilt=ex51_fhat, drop_indicator=True)
    assert abs(r.estimate - 1.0) <= 3 * r.std_error


def test_girsanov_orientation(ex51_fhat):
    """Tilted and plain estimates agree on a moderate event; this pins the sign."""
    b = Boundary.constant(GRID, 1.0)
    f = ex51_fhat.scaled(0.5)
    bad = 0
    for k in range(20):
        t = estimate_P_girsanov(f, b, 0.75, GRID, 4000, 100 + k, tilt=f)
        p = estimate_P(f, b, 0.75, GRID, 4000, 200 + k, "volterra")
        assert p.estimate >= 0.05
        bad += abs(t.estimate - p.estimate) > 3 * (t.std_error + p.std_error)
    assert bad <= 1


def test_girsanov_variance_reduction(ex51_fhat):
    b = Boundary.constant(GRID, 1.0)
    f = ex51_fhat.scaled(3.0)
    t = estimate_P_girsanov(f, b, 0.75, GRID, 100_000, 8, tilt=f)
    p = estimate_P(f, b, 0.75, GRID, 100_000, 8, "volterra")
    assert t.std_error <= 0.3 * p.std_error


def test_ensemble_roundtrip(tmp_path):
    ens = generate_paths(0.75, TimeGrid(1.0, 17), 150, "circulant", seed=1)
    p = tmp_path / "paths.bin"
    write_ensemble(p, ens)
    raw = p.read_bytes()
    assert raw[:8] == b"FBMPATHS" and len(raw) == 32 + 8 * 150 * 17
    assert np.array_equal(read_ensemble(p), ens.B)
