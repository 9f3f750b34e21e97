import numpy as np
import pytest

from covlab import kernels


@pytest.mark.parametrize("impl", [kernels.uniform_block_np, kernels.uniform_block_nb])
def test_uniform_block_matches_scalar_reference(impl):
    seed, start = 2024, 37
    block = impl(kernels.seed_key(seed), start, 5, 3)
    for t in range(5):
        for j in range(3):
            assert block[t, j] == kernels.uniform_reference(seed, start + t, j)


def test_backends_agree():
    key = kernels.seed_key(7)
    a = kernels.uniform_block_np(key, 0, 4096, 6)
    b = kernels.uniform_block_nb(key, 0, 4096, 6)
    assert np.array_equal(a, b)
    na = kernels.normal_block_np(key, 100, 4096, 3)
    nb = kernels.normal_block_nb(key, 100, 4096, 3)
    np.testing.assert_allclose(na, nb, rtol=0, atol=1e-12)


def test_blocks_are_prefix_and_offset_consistent():
    key = kernels.seed_key(99)
    whole = kernels.uniform_block(key, 0, 1000, 2)
    parts = np.vstack([kernels.uniform_block(key, s, 250, 2) for s in range(0, 1000, 250)])
    assert np.array_equal(whole, parts)
    # widening a block does not change its leading columns
    assert np.array_equal(kernels.uniform_block(key, 0, 1000, 4)[:, :2], whole)


def test_seed_reduction_mod_2_64():
    assert kernels.seed_key(5) == kernels.seed_key(5 + 2**64)
    assert kernels.seed_key(5) != kernels.seed_key(6)


def test_uniform_moments():
    u = kernels.uniform_block(kernels.seed_key(1), 0, 200_000, 1)[:, 0]
    assert u.min() >= 0.0 and u.max() < 1.0
    n = u.size
    # mean 1/2, var 1/12; 4-sigma bands
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / n)
    assert abs((u < 0.05).mean() - 0.05) < 4 * np.sqrt(0.05 * 0.95 / n)


def test_normal_moments_and_tail():
    z = kernels.normal_block(kernels.seed_key(3), 0, 100_000, 2).ravel()
    n = z.size
    assert abs(z.mean()) < 4 / np.sqrt(n)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / n)
    p = 0.05  # P(|Z| > 1.959964)
    assert abs((np.abs(z) > 1.959963984540054).mean() - p) < 4 * np.sqrt(p * (1 - p) / n)


def test_adjacent_trials_uncorrelated():
    u = kernels.uniform_block(kernels.seed_key(11), 0, 100_000, 1)[:, 0]
    r = np.corrcoef(u[:-1], u[1:])[0, 1]
    assert abs(r) < 4 / np.sqrt(u.size)
