import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from levygame import Atoms, Exponential, LevyTriplet, TimeGrid, inject_paths, simulate
from levygame.errors import ResourceError, ShapeError
from levygame.paths import cumulative, empirical_mean_Y, simulate_chunks, write_csv

GAUSS = LevyTriplet(0.0, 1.3)
EXP = LevyTriplet(0.0, 1.0, Exponential(1.0, 2.0))


def test_nojumps_powers():
    b = simulate(GAUSS, TimeGrid(1.0, 20), 2, 3, 50, seed=1)
    np.testing.assert_array_equal(b.dY[:, :, 0], 1.3 * b.dW_L)
    np.testing.assert_array_equal(b.dY[:, :, 1:], 0.0)
    assert b.jump_counts().sum() == 0


def test_injected_single_step():
    m2 = 0.7
    b = inject_paths(TimeGrid(1.0, 1), [[(0.3, 0.5), (0.7, -0.2)]], np.zeros((1, 1)), 0.0, [0.0, m2])
    assert b.dY[0, 0, 1] == pytest.approx(0.25 + 0.04 - m2)
    assert b.dY[0, 0, 0] == pytest.approx(0.3)


def test_injected_cube():
    b = inject_paths(TimeGrid(1.0, 4), [[(0.1, 2.0)]], np.zeros((1, 4)), 0.0, [0.0, 0.0, 0.0])
    assert b.dY[0, 0, 2] == 8.0
    np.testing.assert_array_equal(b.dY[0, 1:], 0.0)


def test_injected_opposite_jumps_same_step():
    dt = 0.25
    m2 = 1.5
    b = inject_paths(TimeGrid(1.0, 4), [[(0.55, 1.0), (0.6, -1.0)]], np.zeros((1, 4)), 0.0, [0.0, m2])
    assert b.dY[0, 2, 1] == pytest.approx(2.0 - m2 * dt)
    assert b.dY[0, 2, 0] == 0.0


def test_injected_empty_is_zero():
    b = inject_paths(TimeGrid(1.0, 5), [[], []], np.zeros((2, 5)), 1.0, [0.0, 0.0])
    np.testing.assert_array_equal(b.dY, 0.0)


def test_jump_on_grid_point_belongs_to_left_step():
    b = inject_paths(TimeGrid(1.0, 4), [[(0.5, 1.0)]], np.zeros((1, 4)), 0.0, [0.0])
    assert b.jump_step.tolist() == [1]
    b = inject_paths(TimeGrid(1.0, 4), [[(0.0, 1.0)]], np.zeros((1, 4)), 0.0, [0.0])
    assert b.jump_step.tolist() == [0]


def test_inject_shape_errors():
    g = TimeGrid(1.0, 3)
    with pytest.raises(ShapeError):
        inject_paths(g, [[]], np.zeros((1, 4)), 1.0, [0.0])
    with pytest.raises(ShapeError):
        inject_paths(g, [[], []], np.zeros((1, 3)), 1.0, [0.0])
    with pytest.raises(ShapeError):
        inject_paths(g, [[(2.0, 1.0)]], np.zeros((1, 3)), 1.0, [0.0])


def test_cumulative_matches_hand():
    b = inject_paths(TimeGrid(1.0, 4), [[(0.1, 1.0), (0.8, 2.0)]], np.zeros((1, 4)), 0.0, [0.0, 0.0])
    Y2 = cumulative(b.dY[:, :, 1])[0]
    np.testing.assert_array_equal(Y2, [0.0, 1.0, 1.0, 1.0, 5.0])
    mean, se = empirical_mean_Y(b, 2)
    np.testing.assert_array_equal(mean, Y2)


def test_poisson_count_mean():
    b = simulate(LevyTriplet(0.0, 1.0, Atoms((1.0,), (1.0,))), TimeGrid(1.0, 4), 1, 1, 100_000, seed=3)
    assert abs(b.jump_counts().mean() - 1.0) <= 3 / math.sqrt(100_000)


def test_empirical_mean_nojumps_order2_exact_zero():
    b = simulate(GAUSS, TimeGrid(1.0, 10), 1, 2, 30, seed=5)
    mean, _ = empirical_mean_Y(b, 2)
    np.testing.assert_array_equal(mean, 0.0)


def test_empirical_mean_centered():
    b = simulate(LevyTriplet(0.0, 1.0, Atoms((1.0,), (1.0,))), TimeGrid(1.0, 10), 1, 1, 100_000, seed=9)
    mean, se = empirical_mean_Y(b, 1)
    assert abs(mean[-1]) <= 3 * se[-1]


def test_empirical_mean_rejects_unsimulated_order():
    b = simulate(GAUSS, TimeGrid(1.0, 5), 1, 2, 3, seed=5)
    with pytest.raises(ValueError):
        empirical_mean_Y(b, 3)


def test_determinism_bitwise():
    a = simulate(EXP, TimeGrid(1.0, 30), 2, 3, 40, seed=17)
    b = simulate(EXP, TimeGrid(1.0, 30), 2, 3, 40, seed=17)
    for name in ("dW", "dW_L", "dY", "jump_time", "jump_size", "jump_step", "jump_path"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_seed_changes_output():
    a = simulate(EXP, TimeGrid(1.0, 30), 1, 2, 10, seed=1)
    b = simulate(EXP, TimeGrid(1.0, 30), 1, 2, 10, seed=2)
    assert not np.array_equal(a.dW, b.dW)


@given(offset=st.integers(0, 20), count=st.integers(1, 10))
def test_substreams_are_path_indexed(offset, count):
    g = TimeGrid(1.0, 8)
    full = simulate(EXP, g, 1, 2, 30, seed=4)
    part = simulate(EXP, g, 1, 2, count, seed=4, path_offset=offset)
    hi = min(offset + count, 30)
    np.testing.assert_array_equal(part.dY[: hi - offset], full.dY[offset:hi])


def test_chunks_reassemble():
    g = TimeGrid(1.0, 10)
    full = simulate(EXP, g, 1, 3, 25, seed=8)
    parts = list(simulate_chunks(EXP, g, 1, 3, 25, seed=8, chunk_size=7))
    np.testing.assert_array_equal(np.concatenate([p.dY for p in parts]), full.dY)


def test_compensator_centers_powers():
    b = simulate(EXP, TimeGrid(1.0, 20), 1, 3, 20_000, seed=21)
    for j in (1, 2, 3):
        mean, se = empirical_mean_Y(b, j)
        assert abs(mean[-1]) <= 4 * se[-1]


def test_memory_budget():
    with pytest.raises(ResourceError):
        simulate(EXP, TimeGrid(1.0, 100), 1, 3, 1000, seed=1, memory_budget=10_000)


def test_rejects_bad_sizes():
    with pytest.raises(ValueError):
        simulate(EXP, TimeGrid(1.0, 10), 1, 0, 5, seed=1)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_csv_is_deterministic(tmp_path):
    g = TimeGrid(1.0, 5)
    for name in ("a.csv", "b.csv"):
        write_csv(simulate(EXP, g, 1, 2, 4, seed=6), tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert len(rows) == 1 + 4 * 5
