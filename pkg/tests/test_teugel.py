import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from levygame import (Atoms, Exponential, LevyTriplet, TimeGrid, bracket_test, gram_matrix, increments,
                      inject_paths, orthonormalize, simulate)
from levygame.errors import RankDeficiencyError
from levygame.teugel import OrthonormalBasis, basis_for, bracket_test_chunked

TWO_ATOM = LevyTriplet(0.0, 1.0, Atoms((1.0,), (1.0,)))
R2 = math.sqrt(2.0)


def test_pure_gaussian_basis():
    b = orthonormalize(gram_matrix(LevyTriplet(0.0, 1.0), 1), 1)
    np.testing.assert_array_equal(b.c, [[1.0]])


def test_two_atom_hand_gram_schmidt():
    # p1 = 1/sqrt(2); p2 proportional to x - <x,1>/<1,1> = x - 1/2, norm^2 = 1 - 1/2
    b = orthonormalize(np.array([[2.0, 1.0], [1.0, 1.0]]), 2)
    np.testing.assert_allclose(b.c, [[1 / R2, 0.0], [-1 / R2, R2]], rtol=1e-14)
    assert b.residual() <= 1e-14


def test_exponential_order4_frozen():
    b = orthonormalize(gram_matrix(LevyTriplet(0.0, 1.0, Exponential(1.0, 2.0)), 4), 4)
    assert b.residual() <= 1e-10
    # diag(c)_i^2 = det G_{i-1} / det G_i, evaluated in exact rationals
    exact = np.sqrt([2 / 3, 8 / 9, 4 / 7, 112 / 615])
    np.testing.assert_allclose(np.diag(b.c), exact, rtol=1e-12)


@given(st.lists(st.tuples(st.floats(-2, 2).filter(lambda x: abs(x) > 0.05), st.floats(0.1, 3.0)),
                min_size=1, max_size=4), st.floats(0.1, 2.0), st.integers(1, 4))
def test_identity_for_random_measures(atoms, sigma, K):
    trip = LevyTriplet(0.0, sigma, Atoms(tuple(a for a, _ in atoms), tuple(r for _, r in atoms)))
    G = gram_matrix(trip, K)
    try:
        b = orthonormalize(G, K)
    except RankDeficiencyError as e:
        assert e.order <= K
        return
    assert np.allclose(np.triu(b.c, 1), 0.0)
    assert np.all(np.diag(b.c) > 0)
    scale = max(1.0, float(np.abs(b.c).max()) ** 2 * float(np.abs(G).max()))
    assert b.residual() <= 1e-9 * scale


def test_rank_deficiency_names_order():
    G = gram_matrix(LevyTriplet(0.0, 0.0, Atoms((1.0,), (2.0,))), 3)
    with pytest.raises(RankDeficiencyError) as e:
        orthonormalize(G, 3)
    assert e.value.order == 2


def test_basis_for_caps_order(caplog):
    b = basis_for(TWO_ATOM, 4)
    assert b.K == 2
    assert "capped" in caplog.text


def test_increments_identity_map():
    g = TimeGrid(1.0, 6)
    bundle = simulate(LevyTriplet(0.0, 1.0), g, 1, 1, 5, seed=2)
    inc = increments(bundle, OrthonormalBasis(np.array([[1.0]]), np.array([[1.0]])))
    np.testing.assert_array_equal(inc.dH[:, :, 0], bundle.dY[:, :, 0])


def test_increments_two_atom():
    b = orthonormalize(np.array([[2.0, 1.0], [1.0, 1.0]]), 2)
    g = TimeGrid(1.0, 1)
    # dY^1 = 1 (sigma dW_L) ... built by hand: dY = (1, 3)
    bundle = inject_paths(g, [[]], np.ones((1, 1)), 1.0, [0.0, 0.0])
    bundle.dY[0, 0] = [1.0, 3.0]
    dH = increments(bundle, b).dH[0, 0]
    np.testing.assert_allclose(dH, [1 / R2, -1 / R2 + 3 * R2], rtol=1e-14)
    np.testing.assert_allclose(dH, [0.7071067811865476, 3.5355339059327378], rtol=1e-14)


def test_zero_increments():
    b = orthonormalize(np.array([[2.0, 1.0], [1.0, 1.0]]), 2)
    bundle = inject_paths(TimeGrid(1.0, 3), [[]], np.zeros((1, 3)), 1.0, [0.0, 0.0])
    np.testing.assert_array_equal(increments(bundle, b).dH, 0.0)


def test_order_mismatch():
    b = orthonormalize(np.array([[2.0, 1.0], [1.0, 1.0]]), 2)
    bundle = inject_paths(TimeGrid(1.0, 3), [[]], np.zeros((1, 3)), 1.0, [0.0])
    with pytest.raises(ValueError):
        increments(bundle, b)


def test_bracket_pure_gaussian():
    g = TimeGrid(1.0, 10)
    trip = LevyTriplet(0.0, 1.0)
    bundle = simulate(trip, g, 1, 1, 100_000, seed=31)
    res = bracket_test(increments(bundle, basis_for(trip, 1)), g)
    assert res.within(3.0), res.z_scores()


def test_bracket_two_atom_orthogonal():
    g = TimeGrid(1.0, 10)
    basis = basis_for(TWO_ATOM, 2)
    bundle = simulate(TWO_ATOM, g, 1, 2, 20_000, seed=4)
    res = bracket_test(increments(bundle, basis), g)
    assert abs(res.estimate[0, 1]) <= 3 * res.stderr[0, 1]
    assert res.within(3.0), res.z_scores()


def test_bracket_chunked_matches_unchunked():
    g = TimeGrid(1.0, 8)
    trip = LevyTriplet(0.0, 1.0, Exponential(1.0, 2.0))
    basis = basis_for(trip, 3)
    one = bracket_test(increments(simulate(trip, g, 1, 3, 500, seed=12), basis), g)
    many = bracket_test_chunked(trip, basis, g, 500, seed=12, chunk_size=130)
    np.testing.assert_allclose(many.estimate, one.estimate, rtol=1e-12)


def test_bracket_needs_paths():
    g = TimeGrid(1.0, 4)
    bundle = simulate(LevyTriplet(0.0, 1.0), g, 1, 1, 10, seed=1)
    with pytest.raises(ValueError):
        bracket_test(increments(bundle, basis_for(LevyTriplet(0.0, 1.0), 1)), g)
