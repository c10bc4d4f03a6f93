import numpy as np
import pytest

from rejopt.rng import Rng


def test_same_seed_same_sequence():
    a = Rng(42)
    b = Rng(42)
    assert [a.next_u64() for _ in range(10)] == [b.next_u64() for _ in range(10)]


def test_different_seeds_differ():
    a = Rng(1)
    b = Rng(2)
    assert [a.next_u64() for _ in range(4)] != [b.next_u64() for _ in range(4)]


def test_streams_differ_and_are_stable():
    base = [Rng(7, stream=0).next_u64() for _ in range(4)]
    other = [Rng(7, stream=1).next_u64() for _ in range(4)]
    again = [Rng(7, stream=1).next_u64() for _ in range(4)]
    assert base != other
    assert other == again


def test_child_matches_stream_construction():
    a = Rng(19).child(3)
    b = Rng(19, stream=3)
    assert [a.next_u64() for _ in range(5)] == [b.next_u64() for _ in range(5)]


def test_random_unit_interval():
    rng = Rng(0)
    values = [rng.random() for _ in range(2000)]
    assert all(0.0 <= v < 1.0 for v in values)
    assert abs(np.mean(values) - 0.5) < 0.05


def test_below_bounds_and_coverage():
    rng = Rng(5)
    draws = [rng.below(7) for _ in range(3000)]
    assert min(draws) == 0
    assert max(draws) == 6
    counts = np.bincount(draws, minlength=7)
    assert counts.min() > 300  # roughly uniform, expectation ~428


def test_below_rejects_nonpositive():
    with pytest.raises(ValueError):
        Rng(0).below(0)


def test_permutation_is_permutation():
    perm = Rng(11).permutation(40)
    assert sorted(perm.tolist()) == list(range(40))


def test_shuffle_preserves_values():
    rng = Rng(13)
    values = np.arange(25)
    rng.shuffle(values)
    assert sorted(values.tolist()) == list(range(25))
    assert values.tolist() != list(range(25))


def test_normal_moments():
    rng = Rng(3)
    sample = rng.normals((20000,))
    assert abs(sample.mean()) < 0.03
    assert abs(sample.std() - 1.0) < 0.03


def test_uniform_array_shape_and_range():
    sample = Rng(4).uniforms((10, 3))
    assert sample.shape == (10, 3)
    assert np.all(sample >= 0.0)
    assert np.all(sample < 1.0)


def test_normals_shape():
    assert Rng(4).normals((6, 2)).shape == (6, 2)
