import numpy as np

from hilbert_da.rng import INITIAL, PERTURBED_DATA, as_generator, member_normals, replicate_seed, stream


def test_same_key_same_stream():
    a = stream(5, INITIAL, 2).standard_normal(10)
    b = stream(5, INITIAL, 2).standard_normal(10)
    np.testing.assert_array_equal(a, b)


def test_keys_and_seeds_separate_streams():
    base = stream(5, INITIAL).standard_normal(10)
    assert not np.allclose(base, stream(5, PERTURBED_DATA).standard_normal(10))
    assert not np.allclose(base, stream(6, INITIAL).standard_normal(10))
    assert not np.allclose(base, stream(5, INITIAL, 0).standard_normal(10))


def test_member_prefix_does_not_depend_on_count():
    small = member_normals(3, (INITIAL,), 8, 4)
    big = member_normals(3, (INITIAL,), 1024, 4)
    assert small.shape == (4, 8)
    np.testing.assert_array_equal(small, big[:, :8])


def test_replicate_seed_offsets():
    assert replicate_seed(100, 0) == 100
    assert replicate_seed(100, 7) == 107


def test_as_generator_passthrough():
    g = np.random.default_rng(1)
    assert as_generator(g) is g
    assert isinstance(as_generator(3), np.random.Generator)
