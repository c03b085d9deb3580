"""scikit-learn style wrapper around the encoder, trainer and metrics.

``X`` is a sequence of item-id histories and ``y`` the next item of each.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import autograd as ag
from .catalog import build_catalog
from .data import DatasetSplits, SequenceExample
from .errors import EmptyBatch, EmptyHistory, InvalidTarget, OutOfRange
from .evaluation import evaluate_scores
from .losses import LossConfig
from .model import ModelDims, encode_ids, pad_histories, score_histories
from .sampler import SamplingStrategy
from .trainer import TrainConfig, train


def check_histories(X, L_max, num_items=None):
    """Validate ``X`` as non-empty integer histories; keeps the last ``L_max`` ids of each."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = list(X)
    histories = []
    for i, h in enumerate(X):
        arr = np.asarray(h)
        if arr.ndim != 1 or arr.size == 0:
            raise EmptyHistory(f"history {i} is empty or not one-dimensional")
        if not np.issubdtype(arr.dtype, np.integer):
            raise OutOfRange(f"history {i} holds non-integer ids")
        if arr.min() < 0 or (num_items is not None and arr.max() >= num_items):
            raise OutOfRange(f"history {i} has ids outside 0..{(num_items or 0) - 1}")
        histories.append(tuple(int(v) for v in arr[-L_max:]))
    if not histories:
        raise EmptyBatch("X is empty")
    return histories


def check_targets(y, n_samples, num_items=None):
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n_samples:
        raise InvalidTarget(f"y must be 1-D with {n_samples} entries, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise InvalidTarget("y holds non-integer ids")
    if y.min() < 0 or (num_items is not None and y.max() >= num_items):
        raise InvalidTarget("y has ids outside the catalog")
    return y.astype(np.int64)


class LPORecommender(BaseEstimator):
    """Next-item recommender trained with cross-entropy plus the listwise
    preference term over sampled head-item negatives.

    When ``catalog`` is not passed to :meth:`fit`, item popularity is counted
    over the training targets ``y``.
    """

    def __init__(self, num_items=None, d=64, heads=4, blocks=1, L_max=10, loss="ce_lpo",
                 lam=0.5, tau=0.1, alpha_T=1.0, alpha_H=0.0, sampler="adaptive_gumbel", K=10,
                 gumbel_scale=1.0, learning_rate=1e-3, epochs=20, batch_size=128,
                 warmup_ratio=0.1, dropout=0.2, dtype="float32", top_n=10, random_state=0):
        self.num_items = num_items
        self.d = d
        self.heads = heads
        self.blocks = blocks
        self.L_max = L_max
        self.loss = loss
        self.lam = lam
        self.tau = tau
        self.alpha_T = alpha_T
        self.alpha_H = alpha_H
        self.sampler = sampler
        self.K = K
        self.gumbel_scale = gumbel_scale
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.warmup_ratio = warmup_ratio
        self.dropout = dropout
        self.dtype = dtype
        self.top_n = top_n
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate, epochs=self.epochs, batch_size=self.batch_size,
            warmup_ratio=self.warmup_ratio, dropout_p=self.dropout, seed=self.random_state,
            loss=self.loss, loss_config=LossConfig(self.lam, self.tau, self.alpha_T, self.alpha_H),
            sampler=SamplingStrategy(self.sampler, self.K, self.gumbel_scale), dtype=self.dtype)

    def fit(self, X, y, catalog=None):
        histories = check_histories(X, self.L_max, self.num_items)
        y = check_targets(y, len(histories), self.num_items)
        n = self.num_items
        if n is None:
            n = catalog.num_items if catalog is not None else 1 + max(int(y.max()),
                                                                      max(max(h) for h in histories))
        if catalog is None:
            catalog = build_catalog(y.tolist(), num_items=n)
        elif catalog.num_items != n:
            raise OutOfRange(f"catalog has {catalog.num_items} items, expected {n}")
        config = self._train_config()
        dims = ModelDims(n, d=self.d, heads=self.heads, blocks=self.blocks, L_max=self.L_max)
        examples = [SequenceExample(h, int(t), "train") for h, t in zip(histories, y)]
        splits = DatasetSplits(examples, [], [], catalog)
        self.params_, self.history_ = train(splits, dims, config, validate=False)
        self.catalog_ = catalog
        self.dims_ = dims
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def decision_function(self, X):
        """Scores over the full catalog, shape (n_samples, num_items)."""
        self._check_fitted()
        return score_histories(self.params_, check_histories(X, self.L_max, self.dims_.num_items))

    predict_scores = decision_function

    def predict(self, X):
        """Top ``top_n`` item ids per history, best first; ties go to the smaller id."""
        scores = self.decision_function(X)
        return np.argsort(-scores, axis=1, kind="stable")[:, :self.top_n]

    def transform(self, X):
        """Sequence representations h_S, shape (n_samples, d)."""
        self._check_fitted()
        histories = check_histories(X, self.L_max, self.dims_.num_items)
        with ag.no_grad():
            h = encode_ids(self.params_.constants(), pad_histories(histories, self.dims_), self.dims_)
        return h.value

    def score(self, X, y):
        """Mean NDCG@10 of ``y`` under full-catalog ranking."""
        scores = self.decision_function(X)
        y = check_targets(y, len(scores), self.dims_.num_items)
        return evaluate_scores(scores, y, self.catalog_, Ns=(10,))["ndcg@10"]
