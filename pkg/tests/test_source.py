import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from orbslicer.criterion import SlicingCriterion
from orbslicer.source import (
    DeletionMask,
    MaskError,
    SliceRecord,
    SourceDecodeError,
    SourceNotFoundError,
    SourceUnit,
    all_lines,
    diff_slices,
    load_sources,
    read_slice,
    render,
    write_slice,
)

from conftest import load_fixture


def mask(path, *lines):
    return DeletionMask(frozenset((path, i) for i in lines))


def test_load_two_lines(tmp_path):
    f = tmp_path / "a.toy"
    f.write_text("int a;\na = 1;\n")
    (unit,) = load_sources([f], tmp_path)
    assert unit.path == "a.toy"
    assert list(unit.indices()) == [1, 2]
    assert unit.line(2) == "a = 1;"


def test_load_empty_file(tmp_path):
    f = tmp_path / "empty.toy"
    f.write_bytes(b"")
    (unit,) = load_sources([f], tmp_path)
    assert len(unit) == 0
    assert render(unit) == ""


@pytest.mark.parametrize("raw", [b"int a;\na = 1;", b"x\n", b"a\r\nb\r\n", b"\n\n", b"only"])
def test_round_trip_bytes(tmp_path, raw):
    f = tmp_path / "p.toy"
    f.write_bytes(raw)
    (unit,) = load_sources([f], tmp_path)
    assert render(unit).encode() == raw


def test_missing_and_binary_files_are_distinct_errors(tmp_path):
    with pytest.raises(SourceNotFoundError):
        load_sources([tmp_path / "nope.toy"], tmp_path)
    bad = tmp_path / "bad.toy"
    bad.write_bytes(b"\xff\xfe\x00junk")
    with pytest.raises(SourceDecodeError):
        load_sources([bad], tmp_path)


def test_render_single_deletion():
    unit = SourceUnit.from_text("p", "1\n2\n3\n4\n5\n")
    assert render(unit, mask("p", 3)) == "1\n2\n4\n5\n"
    assert render(unit, DeletionMask()) == "1\n2\n3\n4\n5\n"


def test_render_fig1_without_line_8():
    (unit,) = load_fixture("fig1.toy")
    text = render(unit, mask(unit.path, 8))
    assert "b = 42;" not in text
    assert text.count("\n") == 14
    assert "a = 42;" in text


def test_render_rejects_out_of_range_mask():
    unit = SourceUnit.from_text("p", "a\nb\n")
    with pytest.raises(MaskError):
        render(unit, mask("p", 3))
    with pytest.raises(MaskError):
        mask("p", 0).validate([unit])


def test_unsliceable_file_cannot_be_masked():
    unit = SourceUnit.from_text("lib", "a\nb\n", sliceable=False)
    with pytest.raises(MaskError):
        render(unit, mask("lib", 1))


texts = st.lists(st.text(alphabet="abc ;{}", max_size=6), min_size=0, max_size=12).map(lambda ls: "\n".join(ls) + "\n")


@given(texts, st.data())
def test_line_count_and_monotonicity(text, data):
    unit = SourceUnit.from_text("p", text)
    idx = list(unit.indices())
    m1 = set(data.draw(st.lists(st.sampled_from(idx), unique=True))) if idx else set()
    extra = set(data.draw(st.lists(st.sampled_from(idx), unique=True))) if idx else set()
    r1 = render(unit, mask("p", *m1))
    r2 = render(unit, mask("p", *(m1 | extra)))
    lines1 = r1.splitlines()
    assert len(lines1) == len(unit) - len(m1)
    kept2 = [unit.line(i) for i in idx if i not in m1 | extra]
    kept1 = [unit.line(i) for i in idx if i not in m1]
    assert r2.splitlines() == kept2
    assert set(kept2) <= set(kept1)


def record(retained, universe, inst="X", program="p"):
    crit = SlicingCriterion("f", 1, "v")
    ret = frozenset(("f", i) for i in retained)
    return SliceRecord(inst, crit, ret, frozenset(("f", i) for i in universe) - ret, program=program)


def test_diff_slices_examples():
    a = record({1, 2, 3}, range(1, 6))
    assert diff_slices(a, a) == (frozenset(), frozenset())
    b = record({1, 2}, range(1, 6))
    assert diff_slices(a, b) == (frozenset({("f", 3)}), frozenset())


def test_diff_slices_random_against_set_subtraction():
    rng = random.Random(7)
    universe = range(1, 30)
    for _ in range(200):
        ra = {i for i in universe if rng.random() < 0.5}
        rb = {i for i in universe if rng.random() < 0.5}
        only_a, only_b = diff_slices(record(ra, universe), record(rb, universe))
        assert {i for _, i in only_a} == {i for i in ra if i not in rb}
        assert {i for _, i in only_b} == {i for i in rb if i not in ra}


def test_diff_slices_rejects_other_identity():
    with pytest.raises(ValueError):
        diff_slices(record({1}, [1, 2]), record({1}, [1, 2], program="q"))


def test_partition_overlap_rejected():
    crit = SlicingCriterion("f", 1, "v")
    with pytest.raises(ValueError):
        SliceRecord("X", crit, frozenset({("f", 1)}), frozenset({("f", 1)}))


def test_write_and_read_slice(tmp_path):
    unit = SourceUnit.from_text("f", "a\nb\nc\n")
    rec = record({1, 3}, [1, 2, 3])
    rec.check_partition([unit])
    write_slice(rec, [unit], tmp_path / "out")
    assert (tmp_path / "out" / "f").read_text() == "a\nc\n"
    back = read_slice(tmp_path / "out")
    assert back == rec
    data = json.loads((tmp_path / "out" / "slice.json").read_text())
    assert set(data) >= {"instantiation_id", "criterion", "retained", "deleted", "stats"}
    assert data["retained"] == {"f": [1, 3]}
    assert data["criterion"] == {"path": "f", "line": 1, "variable": "v"}


def test_all_lines_covers_every_unit():
    u1 = SourceUnit.from_text("a", "x\ny\n")
    u2 = SourceUnit.from_text("b", "z\n")
    assert all_lines([u1, u2]) == {("a", 1), ("a", 2), ("b", 1)}
