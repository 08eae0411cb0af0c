import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fundata.core import DenseFD, MultivariateFD
from fundata.fpca import (
    UfpcaModel, fcptpa_fit, load_model, mfpca_fit, select_n_components, sign_fix, ufpca_fit, ufpca_scores,
    save_model,
)
from fundata.quadrature import gram_matrix, inner_product
from fundata.simulation import (
    add_noise, make_basis, simulate_kl, sparsify, tensor_basis_2d,
)

GRID = np.linspace(0, 1, 101)


@pytest.fixture(scope="module")
def kl2000():
    basis = make_basis("wiener", 5, GRID)
    return simulate_kl(basis, "exponential", 2000, seed=10)


def test_ufpca_truth(kl2000):
    model = ufpca_fit(kl2000.data, 5)
    truth = np.exp(-(np.arange(1, 6) + 1) / 2)
    assert np.all(np.abs(model.eigenvalues / truth - 1) <= 0.1)
    inner = np.abs(inner_product(model.eigenfunctions, kl2000.basis.values, [GRID]))
    assert np.all(np.diag(inner) >= 0.95)
    assert np.abs(gram_matrix(model.eigenfunctions, [GRID]) - np.eye(5)).max() <= 1e-6
    assert np.all(np.diff(model.eigenvalues) <= 0)


def test_fractional_prefix_minimal(kl2000):
    model = ufpca_fit(kl2000.data, 0.99)
    ratio = np.cumsum(model.spectrum) / model.spectrum.sum()
    j = model.n_components
    assert ratio[j - 1] >= 0.99 and (j == 1 or ratio[j - 2] < 0.99)


def test_rank_one_data():
    phi = np.sqrt(2) * np.sin(np.pi * GRID / 2)
    c = np.random.default_rng(0).normal(size=30)
    model = ufpca_fit(DenseFD({"t": GRID}, np.outer(c, phi)), 0.99)
    assert model.n_components == 1
    assert model.explained_variance_ratio[0] == pytest.approx(1.0)
    with pytest.raises(ValueError, match="positive eigenvalues"):
        ufpca_fit(DenseFD({"t": GRID}, np.outer(c, phi)), 3)


def test_select_n_components():
    vals = np.array([5.0, 3.0, 1.5, 0.5])
    assert select_n_components(vals, 0.5) == 1
    assert select_n_components(vals, 0.8) == 2
    assert select_n_components(vals, 0.95) == 3
    assert select_n_components(vals, 0.96) == 4
    assert select_n_components(vals, 3) == 3
    with pytest.raises(ValueError):
        select_n_components(vals, 5)
    with pytest.raises(ValueError):
        select_n_components(vals, 2.5)


def test_sign_fix():
    v = np.array([[1.0, -3.0], [-0.5, 0.2]])
    np.testing.assert_array_equal(sign_fix(v), [[-1.0, 3.0], [0.5, -0.2]])


def test_needs_two_observations():
    with pytest.raises(ValueError):
        ufpca_fit(DenseFD({"t": GRID}, np.ones((1, 101))), 1)


def test_scores_numint_truth(kl2000):
    # model holding the true mean and eigenfunctions isolates the quadrature
    truth = np.exp(-(np.arange(1, 6) + 1) / 2)
    oracle = UfpcaModel(GRID, np.zeros(GRID.size), kl2000.basis.values, truth, 5)
    scores = ufpca_scores(oracle, kl2000.data)
    rmse = np.sqrt(np.mean((scores - kl2000.coefficients) ** 2, axis=0))
    assert np.all(rmse <= 0.05 * np.sqrt(truth))
    model = ufpca_fit(kl2000.data, 5)
    mean_obs = DenseFD({"t": GRID}, model.mean)
    assert np.abs(ufpca_scores(model, mean_obs)).max() < 1e-12
    assert np.abs(ufpca_scores(model, mean_obs, "PACE")).max() < 1e-12


def test_pace_limit_matches_numint(kl2000):
    model = ufpca_fit(kl2000.data.subset(0, 200), 5)
    model.noise_variance = 0.0
    a = ufpca_scores(model, kl2000.data.subset(0, 50), "NumInt")
    b = ufpca_scores(model, kl2000.data.subset(0, 50), "PACE")
    assert np.abs(a - b).max() <= 0.01 * np.abs(a).max()


def test_pace_on_sparse_noisy():
    sim = simulate_kl(make_basis("wiener", 3, GRID), "exponential", 300, seed=1)
    add_noise(sim, 0.01, seed=2)
    sim.data = sim.noisy_data
    sparsify(sim, 0.8, 0.05, seed=3)
    model = ufpca_fit(sim.sparse_data, 3)
    scores = ufpca_scores(model, sim.sparse_data, "PACE")
    assert scores.shape == (300, 3) and np.all(np.isfinite(scores))
    with pytest.raises(ValueError):
        ufpca_scores(model, sim.sparse_data, "LS")


def rank_one(shape, lam, seed):
    rng = np.random.default_rng(seed)
    vecs = [rng.normal(size=s) for s in shape]
    vecs = [v / np.linalg.norm(v) for v in vecs]
    return lam * np.einsum("n,s,t->nst", *vecs), vecs


def image_fd(x):
    return DenseFD({"s": np.arange(x.shape[1], dtype=float), "t": np.arange(x.shape[2], dtype=float)}, x)


def test_fcptpa_rank_one():
    x, (u, v, w) = rank_one((20, 15, 12), 7.0, 0)
    m = fcptpa_fit(image_fd(x), 1, center=False)
    assert abs(m.weights[0] / 7.0 - 1) <= 1e-6
    for est, true in ((m.u[0], u), (m.v[0], v), (m.w[0], w)):
        assert abs(abs(est @ true) - 1) <= 1e-6
    np.testing.assert_allclose(np.linalg.norm(m.v, axis=1), 1)


def test_fcptpa_orthogonal_rank_two():
    rng = np.random.default_rng(3)
    q = [np.linalg.qr(rng.normal(size=(n, 2)))[0].T for n in (25, 10, 8)]
    x = 3.0 * np.einsum("n,s,t->nst", q[0][1], q[1][1], q[2][1]) + \
        9.0 * np.einsum("n,s,t->nst", q[0][0], q[1][0], q[2][0])
    m = fcptpa_fit(image_fd(x), 2, center=False)
    np.testing.assert_allclose(m.weights, [9.0, 3.0], rtol=1e-6)
    for j in range(2):
        assert abs(abs(m.v[j] @ q[1][j]) - 1) <= 1e-6
        assert abs(abs(m.w[j] @ q[2][j]) - 1) <= 1e-6


def test_fcptpa_zero_tensor_flagged():
    m = fcptpa_fit(image_fd(np.zeros((4, 3, 3))), 1)
    assert m.weights[0] == 0 and m.degenerate == [True]


def test_fcptpa_errors():
    x, _ = rank_one((4, 3, 3), 1.0, 1)
    with pytest.raises(ValueError):
        fcptpa_fit(image_fd(x), 4)
    with pytest.raises(ValueError):
        fcptpa_fit(DenseFD({"t": GRID}, np.ones((3, 101))), 1)


def test_fcptpa_smoothing_gcv_range():
    bx, by = make_basis("fourier", 3, np.linspace(0, 1, 20)), make_basis("fourier", 3, np.linspace(0, 1, 15))
    sim = simulate_kl(tensor_basis_2d(bx, by), "exponential", 40, seed=2)
    m = fcptpa_fit(sim.data, 2, alpha_v=(1e-4, 1e2), alpha_w=(1e-4, 1e2))
    assert np.all((m.alphas >= 1e-4) & (m.alphas <= 1e2))
    np.testing.assert_allclose(np.linalg.norm(m.w, axis=1), 1)


def test_mfpca_p1_equals_ufpca(kl2000):
    u = ufpca_fit(kl2000.data, 5)
    m = mfpca_fit(kl2000.data, 5)
    np.testing.assert_allclose(m.eigenvalues, u.eigenvalues, atol=1e-8)
    assert np.abs(np.abs(m.eigenfunctions[0]) - np.abs(u.eigenfunctions)).max() < 1e-8


def two_component(n=2000, seed=4):
    basis = make_basis("wiener", 3, GRID)
    sim = simulate_kl(basis, "exponential", n, seed=seed)
    b2 = make_basis("fourier", 3, np.linspace(0, 2, 51))
    # the second component shares the scores: a multivariate KL structure
    second = DenseFD({"t": np.linspace(0, 2, 51)}, sim.coefficients @ b2.values)
    return MultivariateFD([sim.data, second]), sim


def test_mfpca_two_components_truth():
    data, sim = two_component()
    m = mfpca_fit(data, [3, 3])
    # each unit-norm pair (phi_j, psi_j) has squared norm 2, so truth is 2 lambda_j
    truth = 2 * np.exp(-(np.arange(1, 4) + 1) / 2)
    assert np.all(np.abs(m.eigenvalues[:3] / truth - 1) <= 0.1)
    assert m.n_components == 6


def test_mfpca_roundtrips(kl2000):
    data, _ = two_component(500)
    m = mfpca_fit(data, [0.99, 0.99])
    np.testing.assert_allclose(m.transform(data), m.scores, atol=1e-10)
    gram = m.scores.T @ m.scores / m.scores.shape[0]
    off = gram - np.diag(np.diag(gram))
    assert np.abs(off).max() <= 1e-6 * m.eigenvalues[0]
    s = np.random.default_rng(0).normal(size=(7, m.n_components))
    np.testing.assert_allclose(m.transform(m.inverse_transform(s)), s, atol=1e-8)
    zero = m.inverse_transform(np.zeros((1, m.n_components)))
    np.testing.assert_allclose(zero[0].values[0], m.components[0].mean)
    unit = np.zeros((1, m.n_components))
    unit[0, 1] = 1
    rec = m.inverse_transform(unit)
    np.testing.assert_allclose(rec[1].values[0], m.components[1].mean + m.eigenfunctions[1][1])
    mean_obs = MultivariateFD([DenseFD({"t": c.argvals}, c.mean) for c in m.components])
    assert np.abs(m.transform(mean_obs)).max() < 1e-8
    with pytest.raises(ValueError):
        m.inverse_transform(np.zeros((1, m.n_components + 1)))


def test_mfpca_reconstruction_bound(kl2000):
    m = mfpca_fit(kl2000.data, 0.9)
    rec = m.inverse_transform(m.scores)[0].values
    x = kl2000.data.values
    err = np.sum((x - rec) ** 2) / np.sum((x - x.mean(0)) ** 2)
    explained = m.components[0].explained_variance_ratio.sum()
    assert err <= 1 - explained + 0.05


def test_mfpca_with_image_component():
    basis = tensor_basis_2d(make_basis("wiener", 2, np.linspace(0, 1, 12)),
                            make_basis("wiener", 2, np.linspace(0, 1, 10)))
    sim = simulate_kl(basis, "exponential", 60, seed=6)
    curves = simulate_kl(make_basis("wiener", 3, GRID), "exponential", 60, seed=7).data
    m = mfpca_fit(MultivariateFD([curves, sim.data]), [3, 2])
    assert m.eigenfunctions[1].shape == (5, 12, 10)
    assert np.all(np.diff(m.eigenvalues) <= 1e-12) and np.all(m.eigenvalues >= 0)
    with pytest.raises(ValueError):
        mfpca_fit(MultivariateFD([curves, sim.data]), [3, 0.5])


def test_model_save_load(tmp_path, kl2000):
    data, _ = two_component(300)
    m = mfpca_fit(data, [0.95, 2])
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    np.testing.assert_array_equal(back.eigenvalues, m.eigenvalues)
    np.testing.assert_array_equal(back.transform(data), m.transform(data))
    doc = (tmp_path / "m.json").read_text()
    assert '"version": 1' in doc


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_transform_inverse_identity_property(seed):
    sim = simulate_kl(make_basis("fourier", 4, GRID), "linear", 40, seed=seed)
    m = mfpca_fit(sim.data, 4)
    s = np.random.default_rng(seed).normal(size=(3, 4))
    np.testing.assert_allclose(m.transform(m.inverse_transform(s)), s, atol=1e-8)


def test_cov_fill_all_smooths_surface():
    sim = simulate_kl(make_basis("wiener", 3, GRID), "exponential", 200, seed=12)
    add_noise(sim, 0.05, seed=13)
    raw = ufpca_fit(sim.noisy_data, 0.99, smooth_cov=False)
    full = ufpca_fit(sim.noisy_data, 0.99, smooth_cov=True, cov_fill="all")
    assert full.n_components < raw.n_components
    assert full.noise_variance > 0
    with pytest.raises(ValueError):
        ufpca_fit(sim.noisy_data, 0.99, smooth_cov=True, cov_fill="some")
