import itertools

import numpy as np
import pytest

from lporec.data import (InteractionRecord, SyntheticSpec, build_splits, core_filter,
                         generate_synthetic, load_splits, parse_interactions, save_splits,
                         write_interactions)
from lporec.errors import InvalidSpec, ParseError, TooFewInteractions

R = InteractionRecord


def test_parse_single_line():
    assert parse_interactions("u1\ti9\t100") == [R("u1", "i9", 100)]


def test_parse_empty():
    assert parse_interactions("") == []


def test_parse_missing_field():
    with pytest.raises(ParseError) as err:
        parse_interactions("u1\ti9")
    assert err.value.line == 1


def test_parse_header_and_bad_timestamp():
    assert parse_interactions("user\titem\ttime\nu\ti\t3\n") == [R("u", "i", 3)]
    with pytest.raises(ParseError) as err:
        parse_interactions("u\ti\t3\nu\ti\tlater\n")
    assert err.value.line == 2


def test_core_filter_keeps_existing_core():
    records = [R(f"u{u}", f"i{i}", i) for u in range(5) for i in range(5)]
    assert core_filter(records) == records


def test_core_filter_single_interaction():
    assert core_filter([R("u", "i", 1)]) == []


def brute_force_core(records, k):
    """Largest sub-log where every user and item has >= k interactions, by exhaustive search."""
    users = sorted({r.user for r in records})
    items = sorted({r.item for r in records})
    best = set()
    for nu in range(len(users), 0, -1):
        for us in itertools.combinations(users, nu):
            for ni in range(len(items), 0, -1):
                for its in itertools.combinations(items, ni):
                    sub = [r for r in records if r.user in us and r.item in its]
                    cu = {u: sum(r.user == u for r in sub) for u in us}
                    ci = {i: sum(r.item == i for r in sub) for i in its}
                    if all(c >= k for c in cu.values()) and all(c >= k for c in ci.values()):
                        if len(sub) > len(best):
                            best = set(sub)
    return best


def test_core_filter_cascade_matches_exhaustive_oracle():
    # sparse random 10-user log, so removals cascade across several rounds
    rng = np.random.default_rng(10)
    records, t = [], 0
    for u in range(10):
        for i in rng.choice(6, size=rng.integers(2, 6), replace=False):
            records.append(R(f"u{u}", f"i{i}", t))
            t += 1
    kept = core_filter(records, 3)
    assert 0 < len(kept) < len(records)
    assert set(kept) == brute_force_core(records, 3)
    assert core_filter(kept, 3) == kept


def test_core_filter_chain():
    # u_a touches item x only through a chain: removing the rare item drops u_a below the threshold
    base = [R(f"u{u}", f"i{i}", 10 * u + i) for u in range(3) for i in range(3)]
    chain = [R("ua", "i0", 100), R("ua", "rare", 101), R("ua", "i1", 102)]
    kept = core_filter(base + chain, 3)
    assert kept == base


def test_splits_four_items():
    recs = [R("u", x, t) for t, x in enumerate("abcd")]
    sp = build_splits(recs, L_max=10)
    a, b, c, d = (sp.item_ids.index(x) for x in "abcd")
    assert [(e.history, e.target) for e in sp.test] == [((a, b, c), d)]
    assert [(e.history, e.target) for e in sp.validation] == [((a, b), c)]
    assert [(e.history, e.target) for e in sp.train] == [((a,), b)]


def test_splits_truncate_to_l_max():
    recs = [R("u", f"x{k:02d}", k) for k in range(1, 13)]
    sp = build_splits(recs, L_max=10)
    names = [sp.item_ids[i] for i in sp.test[0].history]
    assert names == [f"x{k:02d}" for k in range(2, 12)]


def test_five_interactions_give_two_prefixes():
    recs = [R("u", f"i{k}", k) for k in range(5)]
    sp = build_splits(recs)
    assert len(sp.train) == 2 and len(sp.validation) == 1 and len(sp.test) == 1


def test_timestamp_ties_keep_input_order():
    recs = [R("u", "a", 5), R("u", "b", 5), R("u", "c", 5), R("u", "d", 1)]
    sp = build_splits(recs)
    order = [sp.item_ids[i] for i in sp.test[0].history] + [sp.item_ids[sp.test[0].target]]
    assert order == ["d", "a", "b", "c"]


def test_too_few_interactions():
    with pytest.raises(TooFewInteractions):
        build_splits([R("u", "a", 1), R("u", "b", 2)])


def test_protocol_invariants(toy_splits):
    sp = toy_splits
    by_user = {}
    for ex in sp.train:
        by_user.setdefault(ex.user, []).append(ex.timestamp)
    for v, t in zip(sp.validation, sp.test):
        assert v.user == t.user
        assert t.timestamp > v.timestamp > max(by_user.get(v.user, [-1]))
    assert all(len(e.history) <= 10 for split in sp for e in split)
    assert sorted(sp.item_ids) == sorted(set(sp.item_ids))
    assert sp.catalog.num_items == len(sp.item_ids)


def test_round_trip(tmp_path, toy_splits):
    save_splits(toy_splits, tmp_path)
    loaded = load_splits(tmp_path)
    assert loaded.train == toy_splits.train
    assert loaded.validation == toy_splits.validation
    assert loaded.test == toy_splits.test
    assert loaded.catalog == toy_splits.catalog
    assert loaded.item_ids == toy_splits.item_ids


def test_generator_deterministic(tmp_path):
    spec = SyntheticSpec(num_users=50, num_items=40, seed=7)
    write_interactions(generate_synthetic(spec), tmp_path / "a.tsv")
    write_interactions(generate_synthetic(spec), tmp_path / "b.tsv")
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
    assert generate_synthetic(spec) != generate_synthetic(SyntheticSpec(num_users=50, num_items=40, seed=8))


def test_generator_counts():
    recs = generate_synthetic(SyntheticSpec(num_users=1, interactions_per_user=3))
    assert len(recs) == 3
    assert [r.timestamp for r in recs] == sorted({r.timestamp for r in recs})


def test_generator_rejects_empty_spec():
    with pytest.raises(InvalidSpec):
        generate_synthetic(SyntheticSpec(num_items=0))


def test_zipf_slope():
    recs = generate_synthetic(SyntheticSpec(num_users=1000, num_items=500, zipf_exponent=1.1, seed=0))
    counts = np.sort(np.bincount([int(r.item[1:]) for r in recs]))[::-1]
    counts = counts[counts > 0]
    ranks = np.arange(1, len(counts) + 1)
    slope = np.polyfit(np.log(ranks), np.log(counts), 1)[0]
    assert abs(slope - (-1.1)) <= 0.15
