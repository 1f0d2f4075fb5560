import numpy as np
import pytest
from scipy import special

from fbmb.drifts import example51, example52, example_norm
from fbmb.grid import SampledFunction, TimeGrid, from_callable
from fbmb.rkhs import (Drift, covariance, covariance_matrix, element_from_phi, h_function,
                       reconstruct, to_representation, zero_drift)


@pytest.mark.parametrize("H", [0.25, 0.5, 0.75])
def test_covariance_trivial(H):
    assert covariance(0.0, 1.0, H) == 0.0
    assert covariance(1.0, 1.0, H) == pytest.approx(1.0)
    assert covariance(2.0, 2.0, H) == pytest.approx(2.0 ** (2 * H))
    assert covariance(0.3, 1.7, H) == covariance(1.7, 0.3, H)


def test_covariance_brownian_is_min():
    s, t = np.meshgrid(np.linspace(0, 3, 7), np.linspace(0, 3, 7))
    assert np.allclose(covariance(s, t, 0.5), np.minimum(s, t))


@pytest.mark.parametrize("H", [0.1, 0.25, 0.75, 0.9])
def test_covariance_matrix_psd(H):
    C = covariance_matrix(np.linspace(0.1, 5, 40), H)
    assert np.min(np.linalg.eigvalsh(C)) > -1e-10


def test_covariance_rejects_negative_time():
    with pytest.raises(ValueError):
        covariance(-1.0, 1.0, 0.75)


def test_example51_norm_and_h():
    H = 0.75
    grid = TimeGrid(20.0, 20001)
    el = to_representation(example51(grid, H), H)
    assert el.norm == pytest.approx(1.11952, abs=1e-3)
    assert el.norm == pytest.approx(example_norm(H), rel=1e-3)
    h = h_function(el)
    i = np.searchsorted(grid.nodes, 10.0)
    ref = special.gamma(0.75) * special.gammainc(0.75, 10.0)
    assert h.values[i] == pytest.approx(ref, rel=1e-3)


def test_example52_roundtrip():
    H = 0.25
    grid = TimeGrid(20.0, 8001)
    f = example52(grid, H)
    el = to_representation(f, H)
    back = reconstruct(el)
    d = back.f_prime.values[1:] - f.f_prime.values[1:]
    rel = np.sqrt(np.sum(d * d) / np.sum(f.f_prime.values[1:] ** 2))
    assert rel < 1e-3
    assert el.norm == pytest.approx(example_norm(H, H - 0.5), rel=1e-3)


@pytest.mark.parametrize("H", [0.25, 0.75])
def test_zero_drift(H):
    grid = TimeGrid(5.0, 501)
    el = to_representation(zero_drift(grid), H)
    assert el.norm == 0.0
    assert np.all(el.phi.values == 0.0)


@pytest.mark.parametrize("H", [0.25, 0.75])
def test_norm_homogeneity(H):
    grid = TimeGrid(20.0, 4001)
    f = example51(grid, H)
    n1 = to_representation(f, H).norm
    n3 = to_representation(f.scaled(-3.0), H).norm
    assert n3 == pytest.approx(3 * n1, rel=1e-12)


def test_brownian_norm_of_min_t_1():
    # f(t) = min(t, 1) has f' = 1 on [0, 1], so ||f||^2 = 1
    grid = TimeGrid(4.0, 4001)
    fp = SampledFunction(grid, (grid.nodes <= 1.0).astype(float))
    el = to_representation(Drift(fp, "ramp"), 0.5)
    assert el.norm == pytest.approx(1.0, abs=2e-3)
    assert np.array_equal(el.phi.values, fp.values)


def test_element_from_phi_norm():
    grid = TimeGrid(30.0, 30001)
    phi = from_callable(grid, lambda t: np.exp(-t))
    el = element_from_phi(phi, 0.75)
    assert el.norm == pytest.approx(np.sqrt(0.5), rel=1e-6)


def test_drift_csv_roundtrip(tmp_path):
    grid = TimeGrid(5.0, 101)
    f = example52(grid, 0.25)
    p = tmp_path / "f.csv"
    f.to_csv(p)
    g = Drift.from_csv(p)
    assert g.grid == grid
    assert np.array_equal(g.f_prime.values, f.f_prime.values)
    assert g.singularity_exponent == f.singularity_exponent


def test_from_values_rejects_nonzero_start():
    grid = TimeGrid(1.0, 11)
    with pytest.raises(ValueError):
        Drift.from_values(grid, np.ones(11))
