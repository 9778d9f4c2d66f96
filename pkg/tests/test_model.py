import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from spatial_logarch import (
    AMode, ErrorDist, ModelConfig, Dimensions, Panel, ParamSet, ZeroValueError,
    error_dist_moments, grid_contiguity, log_sq_transform, pack_params, unpack_params,
)


def test_pack_constant_mode_column_major():
    params = ParamSet(np.array([1.0, 2.0]), np.array([[0.1, 0.2], [0.3, 0.4]]),
                      np.array([[0.5, 0.6], [0.7, 0.8]]), 4.9)
    theta = pack_params(params, AMode.CONSTANT)
    np.testing.assert_array_equal(theta, [1, 2, 0.1, 0.3, 0.2, 0.4, 0.5, 0.7, 0.6, 0.8])


def test_pack_free_mode_length():
    params = ParamSet(np.arange(6.0).reshape(3, 2), np.eye(2) * 0.1, np.eye(2) * 0.2, 1.0)
    theta = pack_params(params, AMode.FREE)
    assert theta.shape == (6 + 8,)
    np.testing.assert_array_equal(theta[:6], [0, 2, 4, 1, 3, 5])


def test_pack_rejects_mode_mismatch():
    params = ParamSet(np.arange(6.0).reshape(3, 2), np.eye(2), np.eye(2), 1.0)
    with pytest.raises(ValueError):
        pack_params(params, AMode.CONSTANT)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 6), p=st.integers(1, 4), free=st.booleans(), seed=st.integers(0, 2**32 - 1))
def test_pack_unpack_round_trip(n, p, free, seed):
    rng = np.random.default_rng(seed)
    mode = AMode.FREE if free else AMode.CONSTANT
    a = rng.normal(size=(n, p) if free else p)
    params = ParamSet(a, rng.normal(size=(p, p)), rng.normal(size=(p, p)), 2.5)
    theta = pack_params(params, mode)
    back = unpack_params(theta, n, p, mode, 2.5)
    np.testing.assert_array_equal(back.a_tilde, params.a_tilde)
    np.testing.assert_array_equal(back.psi, params.psi)
    np.testing.assert_array_equal(back.pi, params.pi)
    np.testing.assert_array_equal(pack_params(back, mode), theta)


def test_log_sq_transform_values():
    out = log_sq_transform(np.array([[[1.0, -np.e, 2.0]]]))
    np.testing.assert_allclose(out, [[[0.0, 2.0, np.log(4.0)]]], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=20))
def test_log_sq_sign_invariant(values):
    y = np.array(values).reshape(1, 1, -1)
    np.testing.assert_array_equal(log_sq_transform(y), log_sq_transform(-y))


def test_log_sq_reports_zero_coordinates():
    y = np.ones((2, 2, 3))
    y[1, 0, 2] = 0.0
    y[0, 1, 0] = 0.0
    with pytest.raises(ZeroValueError) as info:
        log_sq_transform(Panel(y))
    assert sorted(info.value.coordinates) == [(0, 1, 0), (1, 0, 2)]


def test_normal_moments():
    mean, var = error_dist_moments("normal")
    assert mean == pytest.approx(-1.270362845, abs=1e-8)
    assert var == pytest.approx(np.pi ** 2 / 2, abs=1e-12)
    assert var == pytest.approx(4.934802, abs=1e-6)


def test_t3_moments_closed_form():
    mean, var = error_dist_moments("student_t", 3)
    # ln eps^2 = ln(1/3) + ln F(1,3); ln F(1, nu) has variance psi'(1/2) + psi'(nu/2)
    assert var == pytest.approx(special.polygamma(1, 0.5) + special.polygamma(1, 1.5), rel=1e-12)
    assert var == pytest.approx(5.8696, abs=1e-4)
    expected = special.digamma(0.5) - special.digamma(1.5) + np.log(3) + np.log(1 / 3)
    assert mean == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("dist", [ErrorDist.normal(), ErrorDist.student_t(3), ErrorDist.student_t(5)])
def test_moments_against_simulation(dist):
    rng = np.random.default_rng(7)
    eps = dist.draw(rng, 1_000_000)
    assert eps.var() == pytest.approx(1.0, rel=0.05 if dist.kind == "student_t" else 0.01)
    ls = np.log(eps ** 2)
    assert ls.mean() == pytest.approx(dist.mean_log_sq, rel=0.01)
    assert ls.var() == pytest.approx(dist.var_log_sq, rel=0.01)


def test_error_dist_parse_and_label():
    assert ErrorDist.parse("normal") == ErrorDist.normal()
    assert ErrorDist.parse("t3") == ErrorDist.student_t(3)
    assert ErrorDist.parse("t:4.5").df == 4.5
    assert ErrorDist.student_t(3).label == "t3"
    with pytest.raises(ValueError):
        ErrorDist.student_t(2)


def test_paramset_a_round_trip():
    dist = ErrorDist.normal()
    params = ParamSet.from_a(np.array([1.0, 0.5]), np.zeros((2, 2)), np.zeros((2, 2)), dist)
    np.testing.assert_allclose(params.a_tilde, [1.0 + dist.mean_log_sq, 0.5 + dist.mean_log_sq])
    np.testing.assert_allclose(params.a(dist.mean_log_sq), [1.0, 0.5])
    assert params.sigma2_u == pytest.approx(dist.var_log_sq)


def test_model_config_validation():
    w = grid_contiguity(2, 2)
    ModelConfig(Dimensions(4, 2, 1), w, ErrorDist.normal())
    with pytest.raises(ValueError):
        ModelConfig(Dimensions(5, 2, 3), w, ErrorDist.normal())
    with pytest.raises(ValueError):
        ModelConfig(Dimensions(4, 2, 1), w, ErrorDist.normal(), a_mode=AMode.FREE)


def test_panel_rejects_non_finite():
    y = np.ones((2, 1, 3))
    y[0, 0, 1] = np.nan
    with pytest.raises(ValueError):
        Panel(y)
