"""Cross-entropy, listwise preference (LPO), DPO, Bradley-Terry probabilities,
batch reweighting and the joint training objective.

Scores are raw dot-product logits. Loss functions accept a 1-D score Tensor
(one example, scalar result) or a 2-D ``(batch, items)`` Tensor (one loss
per row).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import (DuplicateNegative, EmptyBatch, InvalidTarget, NonFinite,
                     TargetInNegatives, TemperatureNonPositive, ValidationError)


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.5
    tau: float = 0.1
    alpha_T: float = 1.0
    alpha_H: float = 0.0
    dpo_beta: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise TemperatureNonPositive(f"tau must be > 0, got {self.tau}")
        if self.lam < 0:
            raise ValidationError("lambda must be >= 0")
        if not self.dpo_beta > 0:
            raise ValidationError("dpo_beta must be > 0")


def _batched(scores, *index_arrays):
    single = scores.ndim == 1
    if single:
        scores = ag.reshape(scores, (1, scores.shape[0]))
        index_arrays = [np.asarray(a)[None] for a in index_arrays]
    return single, scores, [np.asarray(a, dtype=np.int64) for a in index_arrays]


def _unbatch(loss, single):
    return ag.reshape(loss, ()) if single else loss


def _check_targets(targets, n):
    if np.any(targets < 0) or np.any(targets >= n):
        raise InvalidTarget(f"target outside real items 0..{n - 1}")


def ce_loss(scores, target):
    """``-log softmax(scores)[target]`` over the full catalog."""
    single, s, (t,) = _batched(scores, target)
    t = t.reshape(-1)
    _check_targets(t, s.shape[1])
    picked = ag.reshape(ag.index_select(s, t[:, None]), (len(t),))
    return _unbatch(ag.logsumexp(s) - picked, single)


def _check_negatives(targets, negatives):
    for t, negs in zip(targets, negatives):
        if len(set(negs.tolist())) != len(negs):
            raise DuplicateNegative(f"duplicate negatives {negs.tolist()}")
        if t in set(negs.tolist()):
            raise TargetInNegatives(f"target {t} among negatives")


def lpo_loss(scores, target, negatives, tau):
    """Temperature softmax loss of the target against its K negatives.

    ``-log exp(s_w/tau) / (exp(s_w/tau) + sum_l exp(s_l/tau))``; zero when K = 0.
    """
    if not tau > 0:
        raise TemperatureNonPositive(f"tau must be > 0, got {tau}")
    single, s, (t, negs) = _batched(scores, target, negatives)
    t = t.reshape(-1)
    negs = negs.reshape(len(t), -1)
    _check_targets(t, s.shape[1])
    _check_targets(negs, s.shape[1])
    _check_negatives(t, negs)
    if negs.shape[1] == 0:
        zero = Tensor(np.zeros(len(t), dtype=s.dtype))
        return _unbatch(zero, single)
    cand = ag.scale(ag.index_select(s, np.concatenate([t[:, None], negs], axis=1)), 1.0 / tau)
    first = ag.reshape(ag.index_select(cand, np.zeros((len(t), 1), dtype=np.int64)), (len(t),))
    return _unbatch(ag.logsumexp(cand) - first, single)


def lpo_grad_wrt_target(scores, target, negatives, tau):
    """Closed-form d lpo_loss / d s_target = (softmax over candidates [target] - 1) / tau."""
    if not tau > 0:
        raise TemperatureNonPositive(f"tau must be > 0, got {tau}")
    scores = np.asarray(scores, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(-1)
    _check_negatives([target], [negatives])
    z = scores[np.concatenate([[target], negatives])] / tau
    p = np.exp(z - z.max())
    p /= p.sum()
    return (p[0] - 1.0) / tau


def dpo_loss(policy_w, policy_l, ref_w, ref_l, beta=1.0):
    """``-log sigmoid(beta * (policy_w - ref_w) - beta * (policy_l - ref_l))``.

    Inputs are log-probability Tensors (or floats) of equal shape.
    """
    if not beta > 0:
        raise ValidationError("beta must be > 0")
    pw, pl, rw, rl = (x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
                      for x in (policy_w, policy_l, ref_w, ref_l))
    for x in (pw, pl, rw, rl):
        if not np.all(np.isfinite(x.value)):
            raise NonFinite("dpo_loss inputs must be finite")
    margin = ag.scale((pw - rw) - (pl - rl), beta)
    shape = margin.shape
    col = ag.reshape(margin, shape + (1,))
    # -log sigmoid(z) = log(1 + exp(-z)), evaluated as a two-term logsumexp
    pair = ag.concat([Tensor(np.zeros(shape + (1,), dtype=margin.dtype)), ag.scale(col, -1.0)], axis=-1)
    return ag.logsumexp(pair)


def log_softmax_at(scores, index):
    """Per-row ``log softmax(scores)[index]`` for 2-D scores; ``index`` is (B,)."""
    index = np.asarray(index, dtype=np.int64).reshape(-1, 1)
    picked = ag.reshape(ag.index_select(scores, index), (scores.shape[0],))
    return picked - ag.logsumexp(scores)


def dpo_batch_loss(policy_scores, ref_scores, targets, negatives, beta=1.0):
    """Mean DPO loss with the target preferred over one negative per row."""
    ref = Tensor(np.asarray(ref_scores))
    targets = np.asarray(targets, dtype=np.int64)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(-1)
    losses = dpo_loss(log_softmax_at(policy_scores, targets), log_softmax_at(policy_scores, negatives),
                      log_softmax_at(ref, targets), log_softmax_at(ref, negatives), beta)
    return ag.scale(ag.reduce_sum(losses), 1.0 / len(targets))


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def bt_pairwise_prob(r_w, r_l):
    """Bradley-Terry probability that ``w`` beats ``l``."""
    return _sigmoid(r_w - r_l)


def bt_listwise_prob(r_w, r_list):
    """Probability that ``w`` beats every competitor, comparisons taken as independent."""
    p = 1.0
    for r in r_list:
        p *= _sigmoid(r_w - r)
    return p


def listwise_upper_bound(r_w, r_list):
    """``1 / (1 + sum_l exp(r_l - r_w))``.

    Strictly exceeds :func:`bt_listwise_prob` once there are two or more
    competitors; with exactly one the two coincide.
    """
    return 1.0 / (1.0 + math.fsum(math.exp(r - r_w) for r in r_list))


def reweight(batch_targets, catalog, alpha_T=1.0, alpha_H=0.0):
    """Batch softmax weights: logit ``alpha_T`` for tail targets, ``alpha_H`` for head."""
    targets = np.asarray(batch_targets, dtype=np.int64).reshape(-1)
    if targets.size == 0:
        raise EmptyBatch("reweight needs a non-empty batch")
    alpha = np.where(catalog.tail_mask[targets], alpha_T, alpha_H).astype(np.float64)
    w = np.exp(alpha - alpha.max())
    return w / w.sum()


def joint_loss(scores, targets, negatives, catalog, config):
    """``sum_i w_i * (ce_i + lam * lpo_i)`` over the batch, ``w`` from :func:`reweight`.

    ``scores`` is a ``(B, num_items)`` Tensor, ``negatives`` a ``(B, K)`` int array
    (``K = 0`` or ``negatives=None`` drops the preference term).
    """
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    weights = reweight(targets, catalog, config.alpha_T, config.alpha_H)
    per_example = ce_loss(scores, targets)
    if negatives is not None and config.lam > 0 and np.asarray(negatives).size:
        per_example = per_example + ag.scale(lpo_loss(scores, targets, negatives, config.tau), config.lam)
    w = Tensor(weights.astype(scores.dtype))
    return ag.reduce_sum(per_example * w)
