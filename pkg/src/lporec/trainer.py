"""Mini-batch training: Adam with linear warm-up, per-batch negative sampling
and tail reweighting, per-epoch validation and checkpointing."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .errors import InvalidRatio, NonFiniteGradient, NonFiniteLoss, ValidationError
from .evaluation import evaluate
from .losses import LossConfig, dpo_batch_loss, joint_loss
from .model import encode_ids, init_params, pad_histories, save_checkpoint, score_all, score_histories
from .sampler import SamplingStrategy, sample_negatives_batch

log = logging.getLogger(__name__)

LOSSES = ("ce", "ce_lpo", "dpo")
ADAM_B1, ADAM_B2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    epochs: int = 20
    batch_size: int = 128
    warmup_ratio: float = 0.1
    dropout_p: float = 0.2
    seed: int = 0
    loss: str = "ce_lpo"
    loss_config: LossConfig = field(default_factory=LossConfig)
    sampler: SamplingStrategy = field(default_factory=SamplingStrategy)
    grad_clip: float | None = None
    dtype: str = "float32"

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("batch_size and epochs must be >= 1")
        if not 0 <= self.warmup_ratio <= 1:
            raise InvalidRatio(f"warmup_ratio {self.warmup_ratio} outside [0, 1]")
        if not 0 <= self.dropout_p < 1:
            raise ValidationError("dropout_p must lie in [0, 1)")
        if self.loss not in LOSSES:
            raise ValidationError(f"loss must be one of {LOSSES}")


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, arrays):
        return cls({k: np.zeros_like(a) for k, a in arrays.items()},
                   {k: np.zeros_like(a) for k, a in arrays.items()})


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    val_hr10: list = field(default_factory=list)
    val_ndcg10: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    best_epoch: int = -1
    best_params: object = field(default=None, repr=False)

    def __len__(self):
        return len(self.loss)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "val_hr10", "val_ndcg10", "seconds"])
            for i in range(len(self)):
                w.writerow([i + 1, repr(self.loss[i]), repr(self.val_hr10[i]),
                            repr(self.val_ndcg10[i]), f"{self.seconds[i]:.3f}"])


def lr_at(step, total_steps, base_lr, warmup_ratio):
    """Linear ramp from 0 over ``ceil(warmup_ratio * total_steps)`` steps, then flat."""
    if not 0 <= warmup_ratio <= 1:
        raise InvalidRatio(f"warmup_ratio {warmup_ratio} outside [0, 1]")
    warm = math.ceil(warmup_ratio * total_steps)
    if warm == 0 or step >= warm:
        return base_lr
    return base_lr * step / warm


def adam_step(params, grads, state, lr, pad_id=None):
    """Bias-corrected Adam, in place on the ``params`` arrays.

    Names missing from ``grads`` are left untouched. When ``pad_id`` is given the
    padding row of ``item_emb`` is reset to zero afterwards.
    """
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteGradient(f"non-finite gradient in {', '.join(sorted(bad))}")
    state.step += 1
    t = state.step
    c1 = 1.0 - ADAM_B1 ** t
    c2 = 1.0 - ADAM_B2 ** t
    for name, g in grads.items():
        m, v, p = state.m[name], state.v[name], params[name]
        m *= ADAM_B1
        m += (1 - ADAM_B1) * g
        v *= ADAM_B2
        v += (1 - ADAM_B2) * (g * g)
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)).astype(p.dtype)
    if pad_id is not None and "item_emb" in params:
        params["item_emb"][pad_id] = 0.0
    return params, state


def _clip(grads, max_norm):
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = {k: g * g.dtype.type(scale) for k, g in grads.items()}
    return grads


def batch_loss(leaves, dims, batch, catalog, config, drop_rng, sample_rng, reference=None):
    """Build the training objective for one mini-batch; returns (loss Tensor, negatives)."""
    ids = pad_histories([ex.history for ex in batch], dims)
    targets = np.array([ex.target for ex in batch], dtype=np.int64)
    h = encode_ids(leaves, ids, dims, training=True, rng=drop_rng, dropout_p=config.dropout_p)
    scores = score_all(leaves, h, dims.num_items)
    lc = config.loss_config
    if config.loss == "ce":
        return joint_loss(scores, targets, None, catalog, lc), None
    if config.loss == "ce_lpo":
        negatives = sample_negatives_batch(scores.value, catalog, targets, config.sampler, sample_rng)
        return joint_loss(scores, targets, negatives, catalog, lc), negatives
    if reference is None:
        raise ValidationError("dpo training needs a frozen reference model")
    one = SamplingStrategy(config.sampler.kind, 1, config.sampler.gumbel_scale)
    negatives = sample_negatives_batch(scores.value, catalog, targets, one, sample_rng)
    ref_scores = score_histories(reference, [ex.history for ex in batch]).astype(scores.dtype)
    return dpo_batch_loss(scores, ref_scores, targets, negatives[:, 0], lc.dpo_beta), negatives


def train(splits, dims, config, init=None, reference=None, checkpoint_dir=None, validate=True):
    """Train from ``init`` (or a fresh seeded initialisation); returns (final params, history).

    ``history.best_params`` holds a copy of the best-validation-NDCG@10 epoch.
    """
    if not splits.train:
        raise ValidationError("no training examples")
    dtype = np.dtype(config.dtype)
    params = (init.copy() if init is not None else init_params(dims, config.seed)).astype(dtype)
    if reference is not None:
        reference = reference.astype(dtype)
    state = AdamState.zeros_like(params.arrays)
    catalog = splits.catalog
    train_set = splits.train
    n_batches = math.ceil(len(train_set) / config.batch_size)
    total_steps = config.epochs * n_batches
    root = np.random.SeedSequence(config.seed)
    drop_rng, sample_rng = (np.random.default_rng(s) for s in root.spawn(2))
    history = TrainHistory()
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    best = -math.inf
    step = 0
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = np.random.default_rng([config.seed, epoch]).permutation(len(train_set))
        total = 0.0
        for b in range(n_batches):
            batch = [train_set[i] for i in order[b * config.batch_size:(b + 1) * config.batch_size]]
            leaves = params.leaves()
            loss, _ = batch_loss(leaves, dims, batch, catalog, config, drop_rng, sample_rng, reference)
            value = float(loss.value)
            if not math.isfinite(value):
                raise NonFiniteLoss(step, value)
            ag.backward(loss)
            grads = {name: t.grad for name, t in leaves.items() if t.grad is not None}
            if config.grad_clip:
                grads = _clip(grads, config.grad_clip)
            step += 1
            adam_step(params.arrays, grads, state, lr_at(step, total_steps, config.learning_rate,
                                                         config.warmup_ratio), dims.pad_id)
            total += value
        history.loss.append(total / n_batches)
        if validate and splits.validation:
            report = evaluate(params, splits.validation, catalog, Ns=(10,))
            hr, ndcg = report["hr@10"], report["ndcg@10"]
        else:
            hr = ndcg = math.nan
        history.val_hr10.append(hr)
        history.val_ndcg10.append(ndcg)
        history.seconds.append(time.perf_counter() - started)
        log.info("epoch %d loss %.5f val hr@10 %.4f ndcg@10 %.4f (%.1fs)",
                 epoch + 1, history.loss[-1], hr, ndcg, history.seconds[-1])
        if history.best_params is None or (not math.isnan(ndcg) and ndcg > best):
            best = ndcg if not math.isnan(ndcg) else best
            history.best_epoch = epoch
            history.best_params = params.copy()
        if ckpt_dir is not None:
            save_checkpoint(params, ckpt_dir / f"epoch{epoch + 1:03d}.ckpt")
            if history.best_epoch == epoch:
                save_checkpoint(params, ckpt_dir / "best.ckpt")
    return params, history


def pretrain_reference(splits, dims, config, checkpoint_dir=None):
    """CE-only training; returns the best-validation-NDCG@10 checkpoint."""
    ce_config = TrainConfig(**{**config.__dict__, "loss": "ce"})
    _, history = train(splits, dims, ce_config, checkpoint_dir=checkpoint_dir)
    return history.best_params, history
