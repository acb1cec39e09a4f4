"""Backend agreement: the numba kernels and numpy fallbacks must match."""

import numpy as np
import pytest

from lexprobe import kernels


def random_word(rng, num_layers=4, dim=6, max_records=5):
    n_rec = int(rng.integers(1, max_records + 1))
    flag_parts, vec_parts, bounds = [], [], [0]
    for _ in range(n_rec):
        k = int(rng.integers(1, 4))
        flags = np.array([1] + [0] * k + [2], np.uint8)
        vecs = rng.standard_normal((num_layers, len(flags), dim)).astype(np.float32)
        flag_parts.append(flags)
        vec_parts.append(vecs.ravel())
        bounds.append(bounds[-1] + len(flags))
    return (
        np.concatenate(vec_parts),
        np.concatenate(flag_parts),
        np.array(bounds, np.int64),
        num_layers,
        dim,
    )


needs_numba = pytest.mark.skipif(
    kernels.pool_occurrences_numba is None, reason="numba backend disabled"
)


@needs_numba
@pytest.mark.parametrize("policy", [0, 1, 2])
def test_pool_backends_agree(policy):
    rng = np.random.default_rng(policy)
    for _ in range(25):
        vectors, flags, bounds, layers, dim = random_word(rng)
        got_nb, bad_nb = kernels.pool_occurrences_numba(
            vectors, flags, bounds, layers, dim, policy
        )
        got_np, bad_np = kernels.pool_occurrences_numpy(
            vectors, flags, bounds, layers, dim, policy
        )
        assert bad_nb == bad_np == -1
        np.testing.assert_allclose(got_nb, got_np, rtol=1e-12, atol=1e-14)


@needs_numba
def test_pool_backends_agree_on_empty_selection():
    vectors = np.zeros(2 * 2 * 3, np.float32)
    flags = np.array([1, 2], np.uint8)  # CLS + SEP only
    bounds = np.array([0, 2], np.int64)
    _, bad_nb = kernels.pool_occurrences_numba(vectors, flags, bounds, 2, 3, 0)
    _, bad_np = kernels.pool_occurrences_numpy(vectors, flags, bounds, 2, 3, 0)
    assert bad_nb == bad_np == 0


@needs_numba
def test_rank_backends_agree_with_ties():
    rng = np.random.default_rng(3)
    for _ in range(50):
        scores = rng.integers(0, 5, size=30).astype(np.float64)  # many ties
        gold = np.unique(rng.integers(0, 30, size=3)).astype(np.int64)
        assert kernels.best_gold_rank_numba(scores, gold) == \
            kernels.best_gold_rank_numpy(scores, gold)


@needs_numba
def test_argmax_backends_agree_with_ties():
    rng = np.random.default_rng(4)
    for _ in range(50):
        scores = rng.integers(0, 4, size=20).astype(np.float64)
        excluded = np.unique(rng.integers(0, 20, size=3)).astype(np.int64)
        assert kernels.argmax_excluding_numba(scores, excluded) == \
            kernels.argmax_excluding_numpy(scores, excluded)


def test_argmax_ties_take_lowest_index():
    scores = np.array([1.0, 3.0, 3.0, 3.0], np.float64)
    assert kernels.argmax_excluding(scores, np.array([1], np.int64)) == 2
    assert kernels.argmax_excluding(scores, np.array([], np.int64)) == 1


def test_rank_tie_break_prefers_lower_index():
    scores = np.array([0.5, 0.9, 0.9, 0.1], np.float64)
    # gold index 2 ties with index 1, which wins the tie
    assert kernels.best_gold_rank(scores, np.array([2], np.int64)) == 2
    assert kernels.best_gold_rank(scores, np.array([1], np.int64)) == 1
    # best gold wins among several
    assert kernels.best_gold_rank(scores, np.array([1, 3], np.int64)) == 1
