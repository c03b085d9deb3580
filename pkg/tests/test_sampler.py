import numpy as np
import pytest

from lporec.errors import InvalidStrategy, NotEnoughCandidates
from lporec.sampler import (SamplingStrategy, gumbel_noise, sample_negatives, sample_negatives_batch,
                            sampling_distribution)

from conftest import catalog_from_counts

# 100 items: the 20 most popular (ids 0..19) form the head
CAT = catalog_from_counts(list(range(200, 100, -1)))


class ZeroGumbel:
    """rng stub whose uniforms map to Gumbel noise of exactly zero."""

    def random(self, shape):
        return np.full(shape, np.exp(-1.0))


def test_head_is_first_twenty():
    assert list(CAT.head_ids) == list(range(20))


def test_zero_noise_is_topk():
    assert np.allclose(gumbel_noise(ZeroGumbel(), (3,)), 0.0)
    s = np.random.default_rng(0).normal(size=100)
    for target in (0, 5, 50):
        a = sample_negatives(s, CAT, target, SamplingStrategy("adaptive_gumbel", 6), ZeroGumbel())
        b = sample_negatives(s, CAT, target, SamplingStrategy("topk_select", 6), None)
        np.testing.assert_array_equal(a, b)


def test_topk_tie_break_by_id():
    negs = sample_negatives(np.zeros(100), CAT, 2, SamplingStrategy("topk_select", 4), None)
    np.testing.assert_array_equal(negs, [0, 1, 3, 4])


@pytest.mark.parametrize("kind", ["adaptive_gumbel", "topk_select", "uniform_random"])
def test_negatives_valid(kind):
    rng = np.random.default_rng(1)
    scores = rng.normal(size=(64, 100))
    targets = rng.integers(0, 100, size=64)
    negs = sample_negatives_batch(scores, CAT, targets, SamplingStrategy(kind, 10), rng)
    assert negs.shape == (64, 10)
    for t, row in zip(targets, negs):
        assert len(set(row)) == 10
        assert set(row) <= CAT.head
        assert t not in row


def test_deterministic_for_seed():
    s = np.random.default_rng(2).normal(size=(8, 100))
    strat = SamplingStrategy("adaptive_gumbel", 5)
    a = sample_negatives_batch(s, CAT, np.arange(8), strat, np.random.default_rng(9))
    b = sample_negatives_batch(s, CAT, np.arange(8), strat, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


def test_not_enough_candidates():
    with pytest.raises(NotEnoughCandidates):
        sample_negatives(np.zeros(100), CAT, 3, SamplingStrategy("topk_select", 20), None)
    # a tail target leaves all 20 head items available
    assert len(sample_negatives(np.zeros(100), CAT, 50, SamplingStrategy("topk_select", 20), None)) == 20


def test_invalid_strategy():
    with pytest.raises(InvalidStrategy):
        SamplingStrategy("beam")


def test_distribution():
    cand, p = sampling_distribution(np.zeros(100), CAT, 4)
    assert 4 not in cand and len(cand) == 19
    np.testing.assert_allclose(p, np.full(19, 1 / 19))
    s = np.zeros(100)
    s[7] = 10.0
    cand, p = sampling_distribution(s, CAT, 50)
    assert p[list(cand).index(7)] > 0.99
    assert p.sum() == pytest.approx(1.0, abs=1e-15)


def test_gumbel_marginal_matches_softmax():
    scores = np.random.default_rng(3).normal(size=100)
    draws = 100_000
    negs = sample_negatives_batch(np.broadcast_to(scores, (draws, 100)), CAT, np.full(draws, 50),
                                  SamplingStrategy("adaptive_gumbel", 1), np.random.default_rng(4))[:, 0]
    freq = np.bincount(negs, minlength=20)[:20] / draws
    cand, p = sampling_distribution(scores, CAT, 50)
    assert 0.5 * np.abs(freq[cand] - p).sum() < 0.02


def test_raising_a_score_does_not_lower_its_frequency():
    base = np.random.default_rng(5).normal(size=100)
    trials = 50_000
    freqs = []
    for bump in (0.0, 0.5, 1.0):
        s = base.copy()
        s[11] += bump
        negs = sample_negatives_batch(np.broadcast_to(s, (trials, 100)), CAT, np.full(trials, 60),
                                      SamplingStrategy("adaptive_gumbel", 3), np.random.default_rng(6 + int(bump * 2)))
        freqs.append((negs == 11).any(axis=1).mean())
    assert freqs[0] <= freqs[1] <= freqs[2]
