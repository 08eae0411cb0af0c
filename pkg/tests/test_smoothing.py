import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fundata.core import DenseFD, IrregularFD
from fundata.quadrature import trapezoid_weights
from fundata.simulation import add_noise, make_basis, simulate_kl
from fundata.smoothing import (
    COMPACT_KERNELS, KERNELS, RankDeficientError, Smoother, estimate_bandwidth, kernel_eval,
    knn_bandwidth, local_poly_fit, local_poly_smooth, smooth_fd,
)


def test_kernel_values():
    assert kernel_eval("epanechnikov", 0.0) == 0.75
    assert math.isclose(float(kernel_eval("gaussian", 0.0)), 1 / math.sqrt(2 * math.pi))
    for k in COMPACT_KERNELS:
        assert np.all(kernel_eval(k, [1.0, -1.0, 1.5, -3.0]) == 0)


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_kernel_integrates_to_one(name):
    lim = 8.0 if name == "gaussian" else 1.0
    u = np.linspace(-lim, lim, 200001)
    k = kernel_eval(name, u)
    assert np.all(k >= 0) and np.allclose(k, kernel_eval(name, -u))
    tol = 1e-4 if name == "gaussian" else 1e-6
    assert abs(trapezoid_weights(u) @ k - 1) <= tol


def test_unknown_kernel():
    with pytest.raises(ValueError):
        kernel_eval("box", 0.0)


def test_nadaraya_watson():
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(size=40))
    y = rng.normal(size=40)
    for t0 in (0.1, 0.5, 0.93):
        w = kernel_eval("tricube", (t - t0) / 0.2)
        est, _ = local_poly_fit(t, y, t0, degree=0, bandwidth=0.2, kernel="tricube")
        assert abs(est - (w @ y) / w.sum()) <= 1e-12


def test_line_reproduced():
    t = np.linspace(0, 1, 30)
    est = local_poly_smooth(t, 2 + 3 * t, [0.0, 0.37, 1.0], degree=1, bandwidth=0.15)
    np.testing.assert_allclose(est, 2 + 3 * np.array([0.0, 0.37, 1.0]), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(
    degree=st.integers(0, 3),
    t0=st.floats(0, 1),
    h=st.floats(0.3, 2.0),
    kernel=st.sampled_from(sorted(KERNELS)),
    coef=st.lists(st.floats(-5, 5), min_size=4, max_size=4),
)
def test_polynomial_reproduction(degree, t0, h, kernel, coef):
    t = np.linspace(0, 1, 25)
    poly = np.polynomial.Polynomial(coef[: degree + 1])
    est, _ = local_poly_fit(t, poly(t), t0, degree, h, kernel)
    assert abs(est - poly(t0)) <= 1e-8 * max(1.0, np.abs(poly(t)).max())


def test_invariant_to_order():
    rng = np.random.default_rng(1)
    t, y = rng.uniform(size=30), rng.normal(size=30)
    perm = rng.permutation(30)
    a = local_poly_smooth(t, y, [0.5], 2, 0.4)
    b = local_poly_smooth(t[perm], y[perm], [0.5], 2, 0.4)
    assert abs(a[0] - b[0]) < 1e-12


def test_only_window_points_matter():
    t = np.linspace(0, 1, 21)
    y = np.sin(t)
    y2 = y.copy()
    y2[t > 0.8] += 100
    a = local_poly_smooth(t, y, [0.3], 1, 0.2)
    b = local_poly_smooth(t, y2, [0.3], 1, 0.2)
    assert a[0] == b[0]


def test_rank_deficiency():
    t = np.array([0.0, 0.5, 1.0])
    with pytest.raises(RankDeficientError) as exc:
        local_poly_fit(t, t, 0.25, degree=1, bandwidth=0.2)
    assert exc.value.t0 == 0.25


def test_knn_bandwidth():
    grid = np.round(np.linspace(0, 1, 101), 10)
    assert math.isclose(knn_bandwidth(grid, 0.5, 2), 0.02, rel_tol=1e-9)
    assert math.isclose(estimate_bandwidth(grid, grid, 0.5, method="knn"), 0.02, rel_tol=1e-9)


def test_cv_prefers_largest_on_line():
    t = np.linspace(0, 1, 40)
    h = estimate_bandwidth(t, 1 - 2 * t, method="cv")
    assert math.isclose(h, 1.0)


def test_cv_needs_points():
    with pytest.raises(ValueError):
        estimate_bandwidth([0.0, 1.0], [1.0, 2.0], method="cv", degree=1)


def test_smooth_fd_constant_and_polynomial():
    grid = np.linspace(0, 1, 51)
    fd = DenseFD({"t": grid}, np.vstack([np.full(51, 3.0), 1 + grid - 2 * grid ** 2]))
    out = smooth_fd(fd, Smoother(degree=2))
    np.testing.assert_allclose(out.values, fd.values, atol=1e-8)


def test_smooth_fd_irregular_union_grid():
    irr = IrregularFD.from_lists([np.linspace(0, 1, 8), np.linspace(0.1, 0.9, 9)],
                                 [np.ones(8), 2 * np.ones(9)])
    out = smooth_fd(irr, Smoother(bandwidth=0.4), within_range=True)
    assert out.grids[0].size == np.unique(np.concatenate([np.linspace(0, 1, 8),
                                                          np.linspace(0.1, 0.9, 9)])).size
    assert np.isnan(out.values[1, 0]) and np.allclose(out.values[0], 1)


def test_smooth_fd_reports_observation():
    irr = IrregularFD.from_lists([np.linspace(0, 1, 10), [0.0, 0.1, 0.9, 1.0]],
                                 [np.zeros(10), np.zeros(4)])
    with pytest.raises(RankDeficientError) as exc:
        smooth_fd(irr, Smoother(bandwidth=0.15))
    assert exc.value.obs == 1


def test_smoothing_reduces_mise():
    grid = np.linspace(0, 1, 101)
    sim = simulate_kl(make_basis("wiener", 5, grid), "exponential", 100, seed=4)
    add_noise(sim, 0.05, seed=5)
    smoothed = smooth_fd(sim.noisy_data, Smoother())
    raw = np.mean((sim.noisy_data.values - sim.data.values) ** 2)
    fit = np.mean((smoothed.values - sim.data.values) ** 2)
    assert fit < raw
