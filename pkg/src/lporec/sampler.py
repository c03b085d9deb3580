"""Negative sampling over head items.

``adaptive_gumbel`` perturbs each candidate's score with Gumbel(0, beta)
noise and keeps the K largest, which draws K distinct items from the
softmax over candidate scores without replacement. Sampling is forward-only:
the chosen ids are constants for the backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidStrategy, NotEnoughCandidates, ValidationError

KINDS = ("adaptive_gumbel", "topk_select", "uniform_random")


@dataclass(frozen=True)
class SamplingStrategy:
    kind: str = "adaptive_gumbel"
    K: int = 10
    gumbel_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidStrategy(f"unknown sampler kind {self.kind!r}; expected one of {KINDS}")
        if self.K < 1:
            raise ValidationError("sampler K must be >= 1")
        if not self.gumbel_scale > 0:
            raise ValidationError("gumbel_scale must be > 0")


def gumbel_noise(rng, shape, scale=1.0):
    u = np.clip(rng.random(shape), np.finfo(np.float64).tiny, 1.0 - np.finfo(np.float64).epsneg)
    return -scale * np.log(-np.log(u))


def _candidate_block(scores, catalog, targets):
    """Head-item scores (B, |H|) with each row's own target masked out."""
    head = catalog.head_ids
    block = np.asarray(scores, dtype=np.float64)[:, head]
    excluded = head[None, :] == np.asarray(targets)[:, None]
    return head, block, excluded


def sample_negatives_batch(scores, catalog, targets, strategy, rng):
    """Negatives for a batch: ``scores`` (B, num_items), ``targets`` (B,) -> (B, K) ids."""
    scores = np.atleast_2d(scores)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    head, block, excluded = _candidate_block(scores, catalog, targets)
    available = len(head) - excluded.sum(axis=1)
    if np.any(available < strategy.K):
        raise NotEnoughCandidates(
            f"K={strategy.K} negatives requested but only {int(available.min())} head candidates")
    if strategy.kind == "adaptive_gumbel":
        keys = block + gumbel_noise(rng, block.shape, strategy.gumbel_scale)
    elif strategy.kind == "topk_select":
        keys = block
    else:
        keys = rng.random(block.shape)
    keys = np.where(excluded, -np.inf, keys)
    # stable sort on descending key: ties go to the smaller item id since head is ascending
    order = np.argsort(-keys, axis=1, kind="stable")[:, :strategy.K]
    return head[order]


def sample_negatives(scores, catalog, target, strategy, rng):
    """K distinct head items for one example, never the target."""
    if strategy.kind not in KINDS:
        raise InvalidStrategy(strategy.kind)
    return sample_negatives_batch(np.asarray(scores)[None, :], catalog, [target], strategy, rng)[0]


def sampling_distribution(scores, catalog, target):
    """Softmax over head-item scores excluding the target -> (candidate ids, probabilities)."""
    head = catalog.head_ids
    cand = head[head != target]
    if cand.size == 0:
        raise NotEnoughCandidates("no head candidates besides the target")
    z = np.asarray(scores, dtype=np.float64)[cand]
    p = np.exp(z - z.max())
    return cand, p / p.sum()
