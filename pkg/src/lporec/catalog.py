"""Item universe with popularity counts and the 20/80 head/tail partition."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import EmptyInput, OutOfRange, ParseError


@dataclass(frozen=True)
class Catalog:
    num_items: int
    popularity: np.ndarray = field(repr=False, compare=False)
    head: frozenset
    tail: frozenset

    @property
    def pad_id(self):
        return self.num_items

    @cached_property
    def head_ids(self):
        """Head items as a sorted int array."""
        return np.array(sorted(self.head), dtype=np.int64)

    @cached_property
    def tail_ids(self):
        return np.array(sorted(self.tail), dtype=np.int64)

    @cached_property
    def tail_mask(self):
        mask = np.zeros(self.num_items, dtype=bool)
        mask[self.tail_ids] = True
        return mask

    def is_tail(self, item):
        return is_tail(self, item)

    def __eq__(self, other):
        if not isinstance(other, Catalog):
            return NotImplemented
        return (self.num_items == other.num_items and self.head == other.head
                and self.tail == other.tail
                and np.array_equal(self.popularity, other.popularity))

    __hash__ = None


def head_size(num_items):
    """``ceil(0.2 * num_items)`` in exact integer arithmetic."""
    return -(-num_items // 5)


def build_catalog(items, num_items=None):
    """Partition items by popularity.

    ``items`` is an iterable of dense item ids, one per interaction (or
    records carrying an ``item`` attribute). Items are ranked by descending
    count with ties broken by ascending id; the first ``ceil(0.2 * n)`` are
    the head. ``num_items`` lets ids that never occur in ``items`` (count 0)
    still belong to the catalog.
    """
    ids = [r if isinstance(r, (int, np.integer)) else r.item for r in items]
    if not ids:
        raise EmptyInput("no interaction records")
    ids = np.asarray(ids, dtype=np.int64)
    if ids.min() < 0:
        raise OutOfRange("negative item id")
    n = int(ids.max()) + 1 if num_items is None else int(num_items)
    if ids.max() >= n:
        raise OutOfRange(f"item id {ids.max()} >= num_items {n}")
    counts = np.bincount(ids, minlength=n)
    order = np.lexsort((np.arange(n), -counts))
    k = head_size(n)
    return Catalog(n, counts, frozenset(order[:k].tolist()), frozenset(order[k:].tolist()))


def is_tail(catalog, item):
    if not 0 <= item < catalog.num_items:
        raise OutOfRange(f"item {item} outside 0..{catalog.num_items - 1}")
    return item in catalog.tail


def save_catalog(catalog, path):
    lines = []
    for i in range(catalog.num_items):
        tag = "T" if i in catalog.tail else "H"
        lines.append(f"{i}\t{int(catalog.popularity[i])}\t{tag}\n")
    Path(path).write_text("".join(lines))


def load_catalog(path):
    counts, head, tail = [], set(), set()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split("\t")
        if len(parts) != 3 or parts[2] not in ("H", "T"):
            raise ParseError(lineno)
        try:
            item, count = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(lineno, "non-integer field") from None
        if item != len(counts):
            raise ParseError(lineno, "item ids must be contiguous and sorted")
        counts.append(count)
        (tail if parts[2] == "T" else head).add(item)
    return Catalog(len(counts), np.array(counts, dtype=np.int64), frozenset(head), frozenset(tail))
