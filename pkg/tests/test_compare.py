import random

import pytest

from orbslicer.compare import (
    CorpusError,
    Filter,
    Relation,
    apply_filters,
    classify,
    comparison_count,
    format_csv,
    format_text,
    parse_pairs,
    relation,
    summarize,
)
from orbslicer.criterion import SlicingCriterion
from orbslicer.source import SliceRecord

UNIVERSE = range(1, 11)


def rec(inst, program, retained, crit_line=1, nondet=False):
    crit = SlicingCriterion("p.toy", crit_line, "v")
    ret = frozenset(("p.toy", i) for i in retained)
    return SliceRecord(inst, crit, ret, frozenset(("p.toy", i) for i in UNIVERSE) - ret, program=program,
                       nondeterministic=nondet)


def test_classify_examples():
    assert classify(rec("A", "p", {1, 2, 3}), rec("B", "p", {1, 2, 3})) is Relation.EQUAL
    assert classify(rec("A", "p", {1, 2, 3}), rec("B", "p", {1, 2})) is Relation.PROPER_SUPERSET
    assert classify(rec("A", "p", {1, 2}), rec("B", "p", {1, 2, 3})) is Relation.PROPER_SUBSET
    assert classify(rec("A", "p", {1, 3}), rec("B", "p", {2, 3})) is Relation.INCOMPARABLE
    with pytest.raises(ValueError):
        classify(rec("A", "p", {1}), rec("B", "q", {1}))


def test_comparison_count():
    assert comparison_count(7, 2921) == 61341
    assert comparison_count(2, 10) == 10
    assert comparison_count(3, 0) == 0
    with pytest.raises(ValueError):
        comparison_count(1, 5)


def brute(a, b):
    if a == b:
        return "="
    if all(x in a for x in b):
        return "⊃"
    if all(x in b for x in a):
        return "⊂"
    return "≠"


def test_random_pairs_partition_and_antisymmetry():
    rng = random.Random(2024)
    for _ in range(1000):
        a = {i for i in UNIVERSE if rng.random() < 0.6}
        b = set(a) if rng.random() < 0.2 else {i for i in UNIVERSE if rng.random() < 0.6}
        if rng.random() < 0.3:
            b = a - {rng.choice(sorted(a))} if a else b
        ab, ba = relation(frozenset(a), frozenset(b)), relation(frozenset(b), frozenset(a))
        assert ab.value == brute(a, b)
        mirror = {Relation.PROPER_SUPERSET: Relation.PROPER_SUBSET, Relation.PROPER_SUBSET: Relation.PROPER_SUPERSET}
        assert ba is mirror.get(ab, ab)


def hand_corpus():
    # three identities: "ok" survives, "flaky" is non-deterministic under B,
    # "lost" has its criterion line deleted under A only
    return {
        "A": [rec("A", "ok", {1, 2}), rec("A", "flaky", {1, 2}), rec("A", "lost", {2, 3})],
        "B": [rec("B", "ok", {1, 2, 3}), rec("B", "flaky", {1}, nondet=True), rec("B", "lost", {1, 2, 3})],
    }


def test_filters_leave_one_survivor():
    kept, report = apply_filters(hand_corpus(), [Filter.NONDETERMINISTIC, Filter.CRITERION_ABSENT])
    assert [r.program for r in kept["A"]] == ["ok"]
    assert [r.program for r in kept["B"]] == ["ok"]
    reasons = {ident[0]: rs for ident, rs in report.removed.items()}
    assert reasons == {"flaky": ["non-deterministic in B"], "lost": ["criterion line deleted in A"]}
    assert any("flaky" in line and "non-deterministic" in line for line in report.lines())


def test_no_filters_keeps_everything():
    kept, report = apply_filters(hand_corpus(), [])
    assert sum(map(len, kept.values())) == 6
    assert report.removed == {}


def test_criterion_filter_needs_membership_everywhere():
    corpus = {"G": [rec("G", "p", {2, 3})], "GC": [rec("GC", "p", {1, 2, 3})], "C": [rec("C", "p", {1, 3})]}
    kept, report = apply_filters(corpus, ["criterion"])
    assert all(v == [] for v in kept.values())
    assert list(report.removed.values()) == [["criterion line deleted in G"]]


def test_ragged_corpus_is_rejected():
    corpus = {"A": [rec("A", "p", {1})], "B": []}
    with pytest.raises(CorpusError):
        apply_filters(corpus, [])
    with pytest.raises(CorpusError):
        summarize(corpus, [("A", "B")])


def test_summary_hits_each_column_once():
    corpus = {
        "A": [rec("A", "eq", {1, 2}), rec("A", "sup", {1, 2, 3}), rec("A", "sub", {1}), rec("A", "inc", {1, 4})],
        "B": [rec("B", "eq", {1, 2}), rec("B", "sup", {1, 2}), rec("B", "sub", {1, 2}), rec("B", "inc", {1, 5})],
    }
    (row,) = summarize(corpus, [("A", "B")])
    assert (row.equal, row.superset, row.subset, row.incomparable) == (1, 1, 1, 1)
    assert row.total == 4
    (back,) = summarize(corpus, [("B", "A")])
    assert (back.equal, back.superset, back.subset, back.incomparable) == (1, 1, 1, 1)
    (same,) = summarize(corpus, [("A", "A")])
    assert same.equal == 4
    with pytest.raises(CorpusError):
        summarize(corpus, [("A", "Z")])


def test_random_corpus_antisymmetry():
    rng = random.Random(5)
    corpus = {"X": [], "Y": []}
    for n in range(200):
        for inst in corpus:
            corpus[inst].append(rec(inst, f"p{n}", {i for i in UNIVERSE if rng.random() < 0.7}))
    (xy,) = summarize(corpus, [("X", "Y")])
    (yx,) = summarize(corpus, [("Y", "X")])
    assert xy.total == 200
    assert (xy.equal, xy.superset, xy.subset, xy.incomparable) == (yx.equal, yx.subset, yx.superset, yx.incomparable)


def test_parse_pairs_with_colons_in_ids():
    known = ["toy-residue", "toy-residue+toy-canary:1", "G", "GC"]
    assert parse_pairs("G:GC", known) == [("G", "GC")]
    assert parse_pairs("toy-residue:toy-residue+toy-canary:1", known) == [("toy-residue", "toy-residue+toy-canary:1")]
    with pytest.raises(CorpusError):
        parse_pairs("G:Q", known)


def test_report_formats():
    rows = summarize(hand_corpus(), [("A", "B")])
    csv_text = format_csv(rows)
    assert csv_text.splitlines()[0] == "pair,equal,superset,subset,incomparable"
    assert csv_text.splitlines()[1] == "A:B,0,1,2,0"
    _, report = apply_filters(hand_corpus(), ["nondet"])
    text = format_text(rows, report)
    assert "A vs. B" in text and "approximate" in text
