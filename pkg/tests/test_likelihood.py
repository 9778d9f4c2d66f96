import numpy as np
import pytest

from spatial_logarch import (
    AMode, Dimensions, ErrorDist, LikelihoodWorkspace, ModelConfig, Panel, ParamSet, SingularJacobian,
    grid_contiguity, log_det_s, pack_params, row_standardize, simulate,
)
from spatial_logarch.likelihood import log_det_s_lu
from oracles import central_difference, dense_log_det, dense_log_likelihood, random_stable_psi_pi

NORMAL = ErrorDist.normal()
S2 = NORMAL.var_log_sq
PSI_A = np.array([[0.5, 0.1], [0.1, 0.5]])
PI_A = np.array([[0.3, 0.0], [0.0, 0.3]])


def sample(rows=3, cols=3, t_len=5, seed=0, psi=PSI_A, pi=PI_A, scheme="queen"):
    w = row_standardize(grid_contiguity(rows, cols, scheme))
    params = ParamSet.from_a(np.ones(psi.shape[0]), psi, pi, NORMAL)
    out = simulate(ModelConfig(Dimensions(w.n, psi.shape[0], t_len), w, NORMAL, seed=seed), params)
    return out.panel, w, params


def test_log_det_pair_example():
    w = row_standardize(grid_contiguity(2, 1, "rook"))
    # eigenvalues of W are +-1: (1 - 0.5)(1 + 0.5) = 0.75
    assert log_det_s(np.array([[0.5]]), w.eigenvalues) == pytest.approx(np.log(0.75), abs=1e-12)
    assert log_det_s(np.array([[0.5]]), w.eigenvalues) == pytest.approx(-0.287682, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_log_det_against_dense(seed):
    rng = np.random.default_rng(seed)
    w = row_standardize(grid_contiguity(5, 5, "queen"))
    psi, _ = random_stable_psi_pi(rng, 2)
    expected = dense_log_det(psi, w.dense())
    assert log_det_s(psi, w.eigenvalues) == pytest.approx(expected, abs=1e-10)
    assert log_det_s_lu(psi, w) == pytest.approx(expected, abs=1e-10)


def test_log_det_singular():
    w = row_standardize(grid_contiguity(2, 1, "rook"))
    with pytest.raises(SingularJacobian):
        log_det_s(np.array([[1.0]]), w.eigenvalues)
    with pytest.raises(SingularJacobian):
        log_det_s_lu(np.array([[1.0]]), w)


def test_residuals_vanish_on_noise_free_path():
    # Innovations exp(m/2) make ln eps^2 equal to its mean, so U_t = 0.
    w = row_standardize(grid_contiguity(3, 3, "queen"))
    params = ParamSet.from_a(np.ones(2), PSI_A, PI_A, NORMAL)
    xi = np.full((9, 2, 4 + 6 + 1), np.exp(NORMAL.mean_log_sq / 2))
    out = simulate(ModelConfig(Dimensions(9, 2, 6), w, NORMAL), params, burn_in=4, innovations=xi)
    ws = LikelihoodWorkspace(out.panel, w)
    np.testing.assert_allclose(ws.residuals(pack_params(params, AMode.CONSTANT)), 0.0, atol=1e-10)


def test_hand_computed_two_location_case():
    # n = 2 pair, p = 1, T = 1; ln Y^2 = [[0, 1], [1, 0]] (rows: locations, columns: t = 0, 1)
    w = row_standardize(grid_contiguity(2, 1, "rook"))
    y = np.sqrt(np.exp(np.array([[0.0, 1.0], [1.0, 0.0]])))[:, None, :]
    ws = LikelihoodWorkspace(Panel(y), w)
    theta = np.array([0.2, 0.5, 0.3])
    # location 1: 1 - 0.5*0 - 0.3*0 - 0.2 = 0.8 ; location 2: 0 - 0.5*1 - 0.3*1 - 0.2 = -1.0
    np.testing.assert_allclose(ws.residuals(theta).ravel(), [0.8, -1.0], atol=1e-14)
    expected = -np.log(2 * np.pi * S2) + np.log(0.75) - (0.64 + 1.0) / (2 * S2)
    assert ws.log_likelihood(theta, S2) == pytest.approx(expected, abs=1e-12)


def test_closed_form_without_dynamics():
    panel, w, _ = sample(t_len=8)
    ws = LikelihoodWorkspace(panel, w)
    ly = np.log(panel.values ** 2)[:, :, 1:]
    c = np.array([-0.3, 0.2])
    theta = np.concatenate([c, np.zeros(8)])
    q = np.sum((ly - c[None, :, None]) ** 2)
    expected = -0.5 * ly.size * np.log(2 * np.pi * S2) - q / (2 * S2)
    assert ws.log_likelihood(theta, S2) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("mode", [AMode.CONSTANT, AMode.FREE])
@pytest.mark.parametrize("seed", range(4))
def test_matches_dense_kronecker(mode, seed):
    rng = np.random.default_rng(100 + seed)
    panel, w, _ = sample(t_len=5, seed=seed)
    ws = LikelihoodWorkspace(panel, w, mode)
    psi, pi = random_stable_psi_pi(rng, 2)
    a = rng.normal(size=2 if mode is AMode.CONSTANT else (9, 2))
    theta = pack_params(ParamSet(a, psi, pi, S2), mode)
    expected = dense_log_likelihood(a, psi, pi, np.log(panel.values ** 2), w.dense(), S2)
    assert ws.log_likelihood(theta, S2) == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("mode", [AMode.CONSTANT, AMode.FREE])
def test_gradient_finite_difference(mode):
    rng = np.random.default_rng(9)
    panel, w, _ = sample(rows=4, cols=4, t_len=10, seed=3)
    ws = LikelihoodWorkspace(panel, w, mode)
    psi, pi = random_stable_psi_pi(rng, 2)
    a = rng.normal(size=2 if mode is AMode.CONSTANT else (16, 2))
    theta = pack_params(ParamSet(a, psi, pi, S2), mode)
    fd = central_difference(lambda x: ws.log_likelihood(x, S2), theta, h=1e-5)
    np.testing.assert_allclose(ws.gradient(theta, S2), fd, rtol=1e-6, atol=1e-5)
    value, grad = ws.value_and_gradient(theta, S2)
    assert value == ws.log_likelihood(theta, S2)
    np.testing.assert_array_equal(grad, ws.gradient(theta, S2))


def test_lu_route_matches_eigen_route():
    rng = np.random.default_rng(5)
    panel, w, params = sample(rows=4, cols=3, t_len=6)
    eig = LikelihoodWorkspace(panel, w)
    lu = LikelihoodWorkspace(panel, w, logdet_method="lu")
    for _ in range(3):
        psi, pi = random_stable_psi_pi(rng, 2)
        theta = np.concatenate([rng.normal(size=2), psi.ravel(order="F"), pi.ravel(order="F")])
        assert lu.log_likelihood(theta, S2) == pytest.approx(eig.log_likelihood(theta, S2), abs=1e-9)
        np.testing.assert_allclose(lu.gradient(theta, S2), eig.gradient(theta, S2), atol=1e-8)


def test_permutation_invariance():
    panel, w, params = sample(rows=4, cols=4, t_len=6)
    theta = pack_params(params, AMode.CONSTANT)
    order = np.random.default_rng(1).permutation(16)
    base = LikelihoodWorkspace(panel, w).log_likelihood(theta, S2)
    perm = LikelihoodWorkspace(panel.permute_locations(order), w.permute(order)).log_likelihood(theta, S2)
    assert perm == pytest.approx(base, abs=1e-9)


def test_dimension_mismatch_rejected():
    panel, _, _ = sample()
    with pytest.raises(ValueError):
        LikelihoodWorkspace(panel, grid_contiguity(2, 2))


@pytest.mark.slow
def test_truth_is_local_maximum_in_large_sample():
    panel, w, params = sample(rows=7, cols=7, t_len=500, seed=21)
    ws = LikelihoodWorkspace(panel, w)
    theta = pack_params(params, AMode.CONSTANT)
    base = ws.log_likelihood(theta, S2)
    rng = np.random.default_rng(0)
    lower = 0
    for _ in range(20):
        step = rng.normal(size=theta.size)
        step *= 0.05 / np.linalg.norm(step)
        lower += ws.log_likelihood(theta + step, S2) < base
    assert lower >= 19
