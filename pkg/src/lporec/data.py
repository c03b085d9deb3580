"""Interaction logs, k-core filtering, leave-one-out splits, synthetic data."""

from __future__ import annotations

import io
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .catalog import Catalog, build_catalog, load_catalog, save_catalog
from .errors import InvalidSpec, ParseError, TooFewInteractions

ROLES = ("train", "validation", "test")


class InteractionRecord(NamedTuple):
    user: str
    item: str
    timestamp: int


@dataclass(frozen=True)
class SequenceExample:
    history: tuple
    target: int
    role: str
    # provenance kept in memory only; not part of the serialized form
    user: str | None = field(default=None, compare=False)
    timestamp: int | None = field(default=None, compare=False)


@dataclass
class DatasetSplits:
    train: list
    validation: list
    test: list
    catalog: Catalog
    item_ids: list = field(default_factory=list, compare=False)

    def __iter__(self):
        return iter((self.train, self.validation, self.test))


def parse_interactions(stream):
    """Parse ``user<TAB>item<TAB>timestamp`` lines.

    ``stream`` may be a string, a path, or an open text file. A first line
    whose timestamp field is not an integer is taken as a header.
    """
    if isinstance(stream, Path):
        stream = stream.read_text()
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    records = []
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(lineno, f"expected 3 tab-separated fields, got {len(parts)}")
        try:
            ts = int(parts[2])
        except ValueError:
            if lineno == 1 and not records:
                continue
            raise ParseError(lineno, f"timestamp {parts[2]!r} is not an integer") from None
        records.append(InteractionRecord(parts[0], parts[1], ts))
    return records


def write_interactions(records, path):
    with open(path, "w") as fh:
        for r in records:
            fh.write(f"{r.user}\t{r.item}\t{r.timestamp}\n")


def core_filter(records, min_count=5):
    """Drop users and items with fewer than ``min_count`` interactions, to a fixpoint."""
    if min_count < 1:
        raise InvalidSpec("min_count must be >= 1")
    kept = list(records)
    while True:
        users = Counter(r.user for r in kept)
        items = Counter(r.item for r in kept)
        survivors = [r for r in kept if users[r.user] >= min_count and items[r.item] >= min_count]
        if len(survivors) == len(kept):
            return survivors
        kept = survivors


def _id_key(raw):
    s = str(raw)
    return (len(s), s)


def _user_sequences(records):
    by_user = defaultdict(list)
    for pos, r in enumerate(records):
        by_user[r.user].append((r.timestamp, pos, r))
    return {u: [t[2] for t in sorted(rows, key=lambda t: (t[0], t[1]))]
            for u, rows in by_user.items()}


def build_splits(records, L_max=10):
    """Leave-one-out split with autoregressive training prefixes.

    Per user (chronological, ties by input order): the last item is the test
    target, the second-last the validation target, and every earlier item
    after the first is a training target predicted from its prefix. Histories
    keep only the most recent ``L_max`` items. Item ids are dense-reindexed
    and the catalog counts training interactions only.
    """
    sequences = _user_sequences(records)
    for user, seq in sequences.items():
        if len(seq) < 3:
            raise TooFewInteractions(user, len(seq))
    item_ids = sorted({r.item for r in records}, key=_id_key)
    index = {raw: i for i, raw in enumerate(item_ids)}

    train, validation, test, train_items = [], [], [], []
    for user in sorted(sequences, key=_id_key):
        seq = sequences[user]
        ids = [index[r.item] for r in seq]
        for j in range(1, len(ids) - 2):
            train.append(SequenceExample(tuple(ids[max(0, j - L_max):j]), ids[j], "train",
                                         user, seq[j].timestamp))
        n = len(ids)
        validation.append(SequenceExample(tuple(ids[max(0, n - 2 - L_max):n - 2]), ids[n - 2],
                                          "validation", user, seq[n - 2].timestamp))
        test.append(SequenceExample(tuple(ids[max(0, n - 1 - L_max):n - 1]), ids[n - 1],
                                    "test", user, seq[n - 1].timestamp))
        train_items.extend(ids[:n - 2])
    catalog = build_catalog(train_items, num_items=len(item_ids))
    return DatasetSplits(train, validation, test, catalog, item_ids)


def save_splits(splits, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for role, examples in zip(ROLES, splits):
        with open(out / f"{role}.tsv", "w") as fh:
            for ex in examples:
                fh.write(f"{','.join(map(str, ex.history))}\t{ex.target}\t{ex.role}\n")
    save_catalog(splits.catalog, out / "catalog.tsv")
    if splits.item_ids:
        (out / "items.tsv").write_text("".join(f"{i}\t{raw}\n" for i, raw in enumerate(splits.item_ids)))


def load_examples(path):
    examples = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split("\t")
        if len(parts) != 3 or parts[2] not in ROLES:
            raise ParseError(lineno, f"bad split row in {path}")
        try:
            history = tuple(int(x) for x in parts[0].split(",") if x)
            target = int(parts[1])
        except ValueError:
            raise ParseError(lineno, "non-integer item id") from None
        examples.append(SequenceExample(history, target, parts[2]))
    return examples


def load_splits(split_dir):
    d = Path(split_dir)
    train, validation, test = (load_examples(d / f"{role}.tsv") for role in ROLES)
    item_ids = []
    if (d / "items.tsv").exists():
        item_ids = [line.split("\t", 1)[1] for line in (d / "items.tsv").read_text().splitlines()]
    return DatasetSplits(train, validation, test, load_catalog(d / "catalog.tsv"), item_ids)


@dataclass(frozen=True)
class SyntheticSpec:
    num_users: int = 1000
    num_items: int = 500
    interactions_per_user: int = 20
    zipf_exponent: float = 1.1
    seed: int = 0
    num_clusters: int = 10
    p_follow: float = 0.3
    p_cluster: float = 0.5


def generate_synthetic(spec):
    """Zipf-popular interactions with per-user taste clusters and item pairings.

    Items are ranked by a Zipf law and dealt round-robin into clusters; a
    user's cluster is drawn in proportion to its Zipf mass. Each step a user
    either repeats a fixed partner of their previous item (``p_follow``),
    draws from their own cluster (``p_cluster``), or draws from the global
    Zipf distribution.
    """
    if (spec.num_users < 1 or spec.num_items < 1 or spec.interactions_per_user < 1
            or spec.num_clusters < 1):
        raise InvalidSpec("counts must be >= 1")
    if not spec.zipf_exponent > 0:
        raise InvalidSpec("zipf_exponent must be > 0")
    if not (0 <= spec.p_follow and 0 <= spec.p_cluster and spec.p_follow + spec.p_cluster <= 1):
        raise InvalidSpec("mixing probabilities must lie in [0, 1] and sum to <= 1")

    rng = np.random.default_rng(spec.seed)
    n = spec.num_items
    n_clusters = min(spec.num_clusters, n)
    weights = np.arange(1, n + 1, dtype=np.float64) ** -spec.zipf_exponent
    global_cdf = np.cumsum(weights / weights.sum())
    item_of_rank = rng.permutation(n)
    cluster_ranks = [np.arange(c, n, n_clusters) for c in range(n_clusters)]
    cluster_cdfs = [np.cumsum(weights[r] / weights[r].sum()) for r in cluster_ranks]
    # clusters are chosen in proportion to their Zipf mass so the mixture keeps the global law
    cluster_mass = np.array([weights[r].sum() for r in cluster_ranks])
    cluster_mass /= cluster_mass.sum()

    def partner(rank):
        c, local = rank % n_clusters, rank // n_clusters
        mate = local ^ 1
        return mate * n_clusters + c if mate < len(cluster_ranks[c]) else rank

    records = []
    for u in range(spec.num_users):
        cluster = int(rng.choice(n_clusters, p=cluster_mass))
        t = 1_600_000_000 + int(rng.integers(0, 1_000_000))
        prev = None
        for _ in range(spec.interactions_per_user):
            draw = rng.random()
            pick = rng.random()
            if prev is not None and draw < spec.p_follow:
                rank = partner(prev)
            elif draw < spec.p_follow + spec.p_cluster:
                local = min(int(np.searchsorted(cluster_cdfs[cluster], pick, side="right")),
                            len(cluster_ranks[cluster]) - 1)
                rank = int(cluster_ranks[cluster][local])
            else:
                rank = min(int(np.searchsorted(global_cdf, pick, side="right")), n - 1)
            t += 1 + int(rng.integers(0, 3600))
            records.append(InteractionRecord(f"u{u}", f"i{item_of_rank[rank]}", t))
            prev = rank
    return records
