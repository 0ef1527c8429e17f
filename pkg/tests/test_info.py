import numpy as np
import pytest
from hypothesis import given, strategies as st

from benchmarks import features
from levygame import InfoStructure, RegressionConfig, TimeGrid, cond_exp, is_adapted
from levygame.info import Projector, monomials

FULL, TRIVIAL = InfoStructure.full(), InfoStructure.trivial()


@pytest.fixture(scope="module")
def feats():
    return features(N=20, P=400, seed=5)[1]


def test_trivial_is_ensemble_mean():
    _, f = features(N=4, P=3, seed=1)
    out = cond_exp(np.array([1.0, 2.0, 3.0]), TRIVIAL, f, 2)
    np.testing.assert_array_equal(out, [2.0, 2.0, 2.0])


def test_full_is_identity(feats):
    v = feats.W[:, 7, :]
    np.testing.assert_array_equal(cond_exp(v, FULL, feats, 7), v)


@given(delta=st.floats(1.0, 5.0), k=st.integers(0, 19))
def test_long_delay_gives_mean(feats, delta, k):
    v = feats.H[:, k, 1] ** 2 + feats.W[:, k, 0]
    out = cond_exp(v, InfoStructure.delayed(delta), feats, k)
    np.testing.assert_array_equal(out, np.full_like(v, v.mean()))


def test_long_delay_bitwise_equals_trivial(feats):
    v = feats.H[:, 12, :2] * 1.7
    a = cond_exp(v, InfoStructure.delayed(1.0), feats, 12)
    b = cond_exp(v, TRIVIAL, feats, 12)
    assert a.tobytes() == b.tobytes()


def test_delay_zero_recovers_affine(feats):
    k = 15
    v = 0.3 + 2.0 * feats.W[:, k, 0] - 0.5 * feats.H[:, k, 2] + feats.WL[:, k]
    out = cond_exp(v, InfoStructure.delayed(0.0), feats, k, RegressionConfig(degree=1))
    assert np.max(np.abs(out - v)) <= 1e-8


def test_delay_uses_lagged_levels(feats):
    grid = feats.grid
    info = InfoStructure.delayed(0.25)
    assert info.observed_index(10, grid) == 5
    assert info.observed_index(3, grid) == 0
    # values measurable at the lagged time are reproduced at the later time
    v = 1.0 + feats.W[:, 5, 0]
    out = cond_exp(v, info, feats, 10, RegressionConfig(degree=1))
    assert np.max(np.abs(out - v)) <= 1e-8


def test_observed_index_rounding():
    g = TimeGrid(1.0, 10)
    assert InfoStructure.delayed(0.3).observed_index(6, g) == 3
    assert InfoStructure.delayed(0.0).observed_index(6, g) == 6
    assert TRIVIAL.observed_index(9, g) == 0


def test_nan_rejected(feats):
    v = np.zeros(feats.n_paths)
    v[3] = np.nan
    with pytest.raises(ValueError):
        cond_exp(v, TRIVIAL, feats, 3)


def test_trailing_shape_kept(feats):
    v = np.random.default_rng(0).normal(size=(feats.n_paths, 2, 3))
    assert cond_exp(v, InfoStructure.delayed(0.1), feats, 10).shape == v.shape


def test_monomial_count():
    X = np.random.default_rng(0).normal(size=(10, 3))
    assert monomials(X, 2).shape == (10, 1 + 3 + 6)
    np.testing.assert_array_equal(monomials(X, 0), np.ones((10, 1)))


def test_rank_deficient_design_min_norm():
    rng = np.random.default_rng(1)
    x = rng.normal(size=50)
    X = np.column_stack([np.ones(50), x, 2 * x])
    pr = Projector(X)
    assert pr.rank_deficient
    y = 1 + 3 * x
    np.testing.assert_allclose(pr.apply(y), y, atol=1e-10)


def test_ridge_projector_shrinks_slope():
    rng = np.random.default_rng(2)
    x = rng.normal(size=200)
    X = np.column_stack([np.ones(200), x])
    y = 2 + x
    fit = Projector(X, ridge=1.0).apply(y)
    slope = np.polyfit(x, fit, 1)[0]
    assert 0.3 < slope < 0.9


def test_regression_config_validation():
    with pytest.raises(ValueError):
        RegressionConfig(degree=-1)
    with pytest.raises(ValueError):
        InfoStructure.delayed(-0.1)
    with pytest.raises(ValueError):
        InfoStructure("partial")


def test_adapted_constant_under_trivial(feats):
    assert is_adapted(np.ones((feats.n_paths, 20)), TRIVIAL, feats).adapted


def test_brownian_not_adapted_under_trivial(feats):
    rep = is_adapted(feats.W[:, :20, 0], TRIVIAL, feats)
    assert not rep.adapted
    assert rep.failing_steps[0] == 1


@pytest.mark.parametrize("info", [TRIVIAL, InfoStructure.delayed(0.2), InfoStructure.delayed(0.0)])
def test_projection_output_is_adapted(feats, info):
    raw = feats.H[:, 1:21, 0] ** 2 + feats.W[:, 1:21, 0]
    proj = np.stack([cond_exp(raw[:, k], info, feats, k) for k in range(20)], axis=1)
    assert is_adapted(proj, info, feats).adapted


def test_future_values_not_adapted_under_delay(feats):
    rep = is_adapted(feats.W[:, 1:21, 0], InfoStructure.delayed(0.2), feats, RegressionConfig(degree=1))
    assert not rep.adapted
