"""Counter-RNG tests: addressability, slicing, and basic statistics."""

import numpy as np

from trajkit.rng import CounterRng


def test_reproducible():
    a = CounterRng(42, 3).normal(7, 16, 2)
    b = CounterRng(42, 3).normal(7, 16, 2)
    assert np.array_equal(a, b)


def test_streams_steps_seeds_independent():
    base = CounterRng(42, 3).normal(7, 16, 2)
    assert not np.array_equal(base, CounterRng(42, 4).normal(7, 16, 2))
    assert not np.array_equal(base, CounterRng(42, 3).normal(8, 16, 2))
    assert not np.array_equal(base, CounterRng(43, 3).normal(7, 16, 2))


def test_single_matches_block():
    rng = CounterRng(5, 1)
    block = rng.normal(2, 9, 3)
    for traj in range(9):
        assert np.array_equal(rng.normal_single(2, traj, 3), block[traj])


def test_rows_concatenate_to_block():
    rng = CounterRng(11, 0)
    block = rng.normal(4, 13, 3)
    # Split at offsets whose word positions are not multiples of 4.
    for splits in ([0, 5, 13], [0, 1, 2, 13], [0, 7, 9, 13]):
        parts = [rng.normal_rows(4, lo, hi - lo, 3)
                 for lo, hi in zip(splits[:-1], splits[1:])]
        assert np.array_equal(np.concatenate(parts), block)


def test_row_slice_adapter():
    rng = CounterRng(11, 2)
    block = rng.normal(0, 10, 2)
    view = rng.row_slice(4)
    assert np.array_equal(view.normal(0, 6, 2), block[4:])
    assert view.seed == 11 and view.stream == 2


def test_substream():
    rng = CounterRng(9, 0)
    sub = rng.substream(5)
    assert sub.seed == 9 and sub.stream == 5
    assert np.array_equal(sub.normal(0, 4, 2), CounterRng(9, 5).normal(0, 4, 2))


def test_gaussian_statistics():
    draws = CounterRng(0, 0).normal(0, 50000, 2).ravel()
    assert np.all(np.isfinite(draws))
    assert abs(draws.mean()) < 4.0 / np.sqrt(draws.size)
    assert abs(draws.std() - 1.0) < 0.01
    assert abs(np.mean(draws**4) - 3.0) < 0.1
