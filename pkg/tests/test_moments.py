import numpy as np
import pytest

from fundata.core import DenseFD, IrregularFD
from fundata.moments import (
    cross_covariance, estimate_covariance, estimate_mean, noise_from_diagonals, raw_covariance,
)
from fundata.simulation import add_noise, make_basis, simulate_kl, sparsify

GRID = np.linspace(0, 1, 101)


def test_mean_of_identical_and_two_levels():
    curve = np.sin(GRID)
    fd = DenseFD({"t": GRID}, np.vstack([curve] * 4))
    np.testing.assert_allclose(estimate_mean(fd).values[0], curve)
    two = DenseFD({"t": GRID}, np.vstack([np.ones(101), 3 * np.ones(101)]))
    np.testing.assert_allclose(estimate_mean(two).values[0], 2.0)


def test_mean_with_missing_per_point_divisor():
    fd = DenseFD({"t": [0.0, 1.0]}, [[1.0, np.nan], [3.0, 5.0]])
    assert estimate_mean(fd).values[0].tolist() == [2.0, 5.0]


def test_mean_zero_count_point():
    fd = DenseFD({"t": [0.0, 1.0]}, [[1.0, np.nan], [2.0, np.nan]])
    with pytest.raises(ValueError, match="no contributing"):
        estimate_mean(fd)


def test_mean_band():
    sim = simulate_kl(make_basis("wiener", 5, GRID), "exponential", 5000, seed=0)
    mu = estimate_mean(sim.data).values[0]
    lam = sim.basis.values, np.exp(-(np.arange(1, 6) + 1) / 2)
    bound = 3 * np.sqrt(lam[1].sum() / 5000) * np.abs(lam[0]).max()
    assert np.abs(mu).max() <= bound


def test_identical_curves_zero_covariance():
    fd = DenseFD({"t": GRID}, np.vstack([np.cos(GRID)] * 5))
    cov = estimate_covariance(fd, smooth=True)
    assert np.abs(cov.values).max() < 1e-12 and cov.noise_variance < 1e-12


def test_shift_and_scale():
    sim = simulate_kl(make_basis("wiener", 3, GRID), "exponential", 60, seed=1)
    x = sim.data.values
    base = raw_covariance(x)
    np.testing.assert_allclose(raw_covariance(x + 2.5), base, atol=1e-12)
    np.testing.assert_allclose(raw_covariance(-3 * x), 9 * base, rtol=1e-12)
    mu = estimate_mean(sim.data).values[0]
    np.testing.assert_allclose(estimate_mean(DenseFD({"t": GRID}, x + 2.5)).values[0], mu + 2.5)


def test_raw_covariance_divisor_n():
    x = np.array([[1.0, 2.0], [3.0, 6.0]])
    np.testing.assert_allclose(raw_covariance(x), np.cov(x.T, bias=True))


def test_symmetry_and_eigen_truth():
    sim = simulate_kl(make_basis("wiener", 3, GRID), "exponential", 5000, seed=2)
    cov = estimate_covariance(sim.data, smooth=False)
    assert np.abs(cov.values - cov.values.T).max() <= 1e-10
    vals, funcs, clipped = cov.eigen()
    truth = np.exp(-(np.arange(1, 4) + 1) / 2)
    assert np.all(np.abs(vals[:3] / truth - 1) <= 0.1)


def test_noise_variance_recovered():
    sim = simulate_kl(make_basis("wiener", 5, GRID), "exponential", 2000, seed=3)
    add_noise(sim, 0.05, seed=4)
    cov = estimate_covariance(sim.noisy_data)
    assert abs(cov.noise_variance - 0.05) <= 0.01
    assert cov.diagonal_corrected


def test_irregular_covariance_runs():
    sim = simulate_kl(make_basis("wiener", 3, GRID), "exponential", 100, seed=5)
    sparsify(sim, 0.5, 0.05, seed=6)
    cov = estimate_covariance(sim.sparse_data)
    assert np.all(np.isfinite(cov.values))
    assert np.abs(cov.values - cov.values.T).max() < 1e-12


def test_noise_from_diagonals_central_half():
    g = np.linspace(0, 1, 5)
    raw = np.array([10.0, 1.0, 1.0, 1.0, 10.0])
    assert noise_from_diagonals(g, raw, np.zeros(5)) == 1.0
    assert noise_from_diagonals(g, raw, 2 * np.ones(5)) == 0.0


def test_cross_covariance():
    sim = simulate_kl(make_basis("wiener", 3, GRID), "exponential", 40, seed=7)
    cc = cross_covariance(sim.data, sim.data)
    np.testing.assert_allclose(cc.values, raw_covariance(sim.data.values), atol=1e-14)
    const = DenseFD({"t": GRID}, np.ones((40, 101)))
    assert np.abs(cross_covariance(sim.data, const).values).max() < 1e-14
    with pytest.raises(ValueError):
        cross_covariance(sim.data, sim.data.subset(0, 10))


def test_cross_covariance_independent():
    n = 5000
    a = simulate_kl(make_basis("wiener", 3, GRID), "exponential", n, seed=8).data
    b = simulate_kl(make_basis("fourier", 3, GRID), "exponential", n, seed=9).data
    cc = cross_covariance(a, b).values
    se = np.sqrt(np.outer(a.values.var(0), b.values.var(0)) / n)
    assert np.all(np.abs(cc) <= 4 * se + 1e-12)


def test_covariance_needs_two():
    with pytest.raises(ValueError):
        estimate_covariance(DenseFD({"t": GRID}, np.ones((1, 101))))
