import numpy as np
import pytest

from amisde import AffineBasis, ConstantBasis, PiecewiseTimeBasis


def test_constant_basis_values():
    b = ConstantBasis()
    assert b.length == 1
    assert np.array_equal(b.at(0.3, np.array([1.0, 2.0])), [1.0])
    assert b.along(np.linspace(0, 1, 5), np.zeros((5, 2))).shape == (5, 1)


def test_affine_basis_values():
    b = AffineBasis(2)
    assert b.length == 3
    assert np.array_equal(b.at(0.0, np.array([3.0, -1.0])), [1.0, 3.0, -1.0])
    states = np.arange(8.0).reshape(4, 2)
    along = b.along(np.linspace(0, 1, 4), states)
    assert np.array_equal(along[:, 0], np.ones(4))
    assert np.array_equal(along[:, 1:], states)


def test_piecewise_declared_length_and_single_block():
    inner = AffineBasis(2)
    b = PiecewiseTimeBasis(inner, num_intervals=4, horizon=1.0)
    assert b.length == 12
    v = b.at(0.3, np.array([5.0, 6.0]))
    assert v.shape == (12,)
    # exactly the block of interval 1 is populated
    assert np.array_equal(v[3:6], [1.0, 5.0, 6.0])
    mask = np.ones(12, dtype=bool)
    mask[3:6] = False
    assert np.all(v[mask] == 0.0)


def test_piecewise_intervals_partition_evenly():
    b = PiecewiseTimeBasis(ConstantBasis(), num_intervals=4, horizon=2.0)
    assert b._interval(0.0) == 0
    assert b._interval(0.49) == 0
    assert b._interval(0.5) == 1
    assert b._interval(1.99) == 3
    assert b._interval(2.0) == 3  # right endpoint folds into the last block


def test_piecewise_along_matches_pointwise():
    inner = AffineBasis(1)
    b = PiecewiseTimeBasis(inner, num_intervals=3, horizon=1.0)
    times = np.linspace(0.0, 1.0, 7)
    states = np.linspace(-1.0, 1.0, 7)[:, None]
    along = b.along(times, states)
    for i, t in enumerate(times):
        assert np.array_equal(along[i], b.at(t, states[i]))


def test_along_states_matches_along():
    for b in [ConstantBasis(), AffineBasis(3),
              PiecewiseTimeBasis(AffineBasis(3), 2, 1.0)]:
        times = np.linspace(0, 1.0, 6)
        states = np.random.default_rng(0).normal(size=(4, 6, 3))
        batch = b.along_states(times, states)
        for n in range(4):
            assert np.allclose(batch[n], b.along(times, states[n]), atol=0, rtol=0)


def test_basis_validation():
    with pytest.raises(ValueError):
        AffineBasis(0)
    with pytest.raises(ValueError):
        PiecewiseTimeBasis(ConstantBasis(), 0, 1.0)
