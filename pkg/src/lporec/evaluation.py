"""Full-catalog HR@N / NDCG@N, overall and on tail targets, and the
tail-probability shift diagnostic."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptySplit, InvalidTarget
from .model import score_histories

DEFAULT_NS = (5, 10, 20)


def rank_of_target(scores, target):
    """1-based rank; equal scores are ordered by ascending item id."""
    scores = np.asarray(scores)
    if not 0 <= target < scores.shape[-1]:
        raise InvalidTarget(f"target {target} outside 0..{scores.shape[-1] - 1}")
    return int(rank_of_targets(scores[None, :], np.array([target]))[0])


def rank_of_targets(scores, targets):
    """Vectorised :func:`rank_of_target` over the rows of a (B, n) score matrix."""
    scores = np.asarray(scores)
    targets = np.asarray(targets, dtype=np.int64)
    n = scores.shape[1]
    if np.any(targets < 0) or np.any(targets >= n):
        raise InvalidTarget("target outside the catalog")
    s_t = scores[np.arange(len(targets)), targets][:, None]
    ids = np.arange(n)[None, :]
    ahead = (scores > s_t) | ((scores == s_t) & (ids < targets[:, None]))
    return 1 + ahead.sum(axis=1)


def hr_at(rank, N):
    return 1 if rank <= N else 0


def ndcg_at(rank, N):
    return 1.0 / math.log2(rank + 1) if rank <= N else 0.0


@dataclass
class MetricsReport:
    metrics: dict
    num_test_users: int
    num_tail_test_users: int

    def __getitem__(self, key):
        return self.metrics[key]

    def to_dict(self):
        out = {k: (None if isinstance(v, float) and math.isnan(v) else v)
               for k, v in self.metrics.items()}
        out["num_test_users"] = self.num_test_users
        out["num_tail_test_users"] = self.num_tail_test_users
        return out

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def metrics_from_ranks(ranks, tail_flags, Ns=DEFAULT_NS):
    ranks = np.asarray(ranks)
    tail_flags = np.asarray(tail_flags, dtype=bool)
    if ranks.size == 0:
        raise EmptySplit("no examples to evaluate")
    metrics = {}
    for N in Ns:
        hit = (ranks <= N).astype(np.float64)
        gain = np.where(ranks <= N, 1.0 / np.log2(ranks + 1.0), 0.0)
        metrics[f"hr@{N}"] = float(hit.mean())
        metrics[f"ndcg@{N}"] = float(gain.mean())
        if tail_flags.any():
            metrics[f"tail_hr@{N}"] = float(hit[tail_flags].mean())
            metrics[f"tail_ndcg@{N}"] = float(gain[tail_flags].mean())
        else:
            metrics[f"tail_hr@{N}"] = math.nan
            metrics[f"tail_ndcg@{N}"] = math.nan
    return MetricsReport(metrics, int(ranks.size), int(tail_flags.sum()))


def evaluate_scores(scores, targets, catalog, Ns=DEFAULT_NS):
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise EmptySplit("no examples to evaluate")
    ranks = rank_of_targets(scores, targets)
    return metrics_from_ranks(ranks, catalog.tail_mask[targets], Ns)


def evaluate(params, split, catalog, Ns=DEFAULT_NS):
    """Rank every target against the full catalog with the model in eval mode."""
    if not split:
        raise EmptySplit("split is empty")
    scores = score_histories(params, [ex.history for ex in split])
    return evaluate_scores(scores, [ex.target for ex in split], catalog, Ns)


@dataclass
class ProbDiagnostics:
    deltas: np.ndarray = field(repr=False)
    bin_edges: np.ndarray
    counts: np.ndarray
    mean_delta: float

    def write(self, csv_path, summary_path=None):
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "count"])
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
        if summary_path is not None:
            Path(summary_path).write_text(f"mean_delta={self.mean_delta!r}\n")


def tail_shift(scores, catalog):
    """Per row: mean softmax probability over tail items minus 1/num_items."""
    scores = np.asarray(scores, dtype=np.float64)
    p = np.exp(scores - scores.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    if not catalog.tail:
        return np.full(len(scores), math.nan)
    return p[:, catalog.tail_ids].mean(axis=1) - 1.0 / catalog.num_items


def prob_diagnostics(params, split, catalog, bins=20):
    """Histogram of the per-example tail probability shift."""
    if not split:
        raise EmptySplit("split is empty")
    deltas = tail_shift(score_histories(params, [ex.history for ex in split]), catalog)
    counts, edges = np.histogram(deltas, bins=bins)
    return ProbDiagnostics(deltas, edges, counts, float(deltas.mean()))
