import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from orbslicer.criterion import SlicingCriterion, TrackedOutput
from orbslicer.engine import prepare_oracle
from orbslicer.env import ExecutionOutcome, OutcomeKind, TestSuite
from orbslicer.oracle import (
    NonDeterministicError,
    Oracle,
    OracleEntry,
    OriginalFailedError,
    digest,
    matches,
    serialize_tracked,
)
from orbslicer.source import SourceUnit

from conftest import envs

# reference values computed with coreutils: printf '\n0' | sha256sum
EMPTY_DIGEST = "c7757c0896cbfe6182d8ea2bda4a8bf94addc428980eedab8609c57ca7ff1763"
DIGEST_42 = "e9510d7f4a6b50cbda5f3868cf21ce237ff72a7f5fa83ad54c1e2718e83629bf"


def completed(*values, exit_code=0):
    return ExecutionOutcome(OutcomeKind.COMPLETED, TrackedOutput(tuple(values)), exit_code)


def test_pinned_digests():
    assert digest(TrackedOutput()) == EMPTY_DIGEST
    assert digest(TrackedOutput(("42",))) == DIGEST_42


def test_fig1_oracle_under_two_environments(fig1):
    units, crit, suite = fig1
    oracle = prepare_oracle(units, crit, envs("toy-zero", "toy-residue"), suite)
    assert set(oracle.entries) == {("toy-zero", 0), ("toy-residue", 0)}
    assert {e.digest for e in oracle.entries.values()} == {DIGEST_42}


def test_matches_examples():
    oracle = Oracle({("G", 0): OracleEntry(DIGEST_42, 0)})
    assert matches(oracle, "G", 0, completed("42"))
    assert not matches(oracle, "G", 0, completed("42", "42"))
    assert serialize_tracked(TrackedOutput(("42", "42"))) != serialize_tracked(TrackedOutput(("42",)))
    assert not matches(oracle, "G", 0, ExecutionOutcome(OutcomeKind.BUILD_FAILED))
    assert not matches(oracle, "G", 0, ExecutionOutcome(OutcomeKind.RUN_CRASHED))
    assert not matches(oracle, "G", 0, completed())


def test_exit_code_policy():
    oracle = Oracle({("G", 0): OracleEntry(DIGEST_42, 0)})
    crashed = completed("42", exit_code=139)
    assert not oracle.matches("G", 0, crashed)
    assert oracle.matches("G", 0, crashed, ignore_exit_code=True)


def test_unknown_key_is_an_error():
    with pytest.raises(KeyError):
        Oracle({}).matches("G", 0, completed("1"))


def test_empty_oracle_warns(caplog):
    units = [SourceUnit.from_text("p.toy", "main() {\n  int x;\n  if (0) {\n    x = 1;\n  }\n}\n")]
    oracle = prepare_oracle(units, SlicingCriterion("p.toy", 4, "x"), envs("toy-zero"), TestSuite())
    assert oracle.entries[("toy-zero", 0)].digest == EMPTY_DIGEST
    assert oracle.empty == {"toy-zero"}
    assert "never executed" in caplog.text


def test_nondeterministic_original_is_rejected():
    units = [SourceUnit.from_text("u.toy", "main() {\n  int x, y;\n  y = x;\n}\n")]
    with pytest.raises(NonDeterministicError) as exc:
        prepare_oracle(units, SlicingCriterion("u.toy", 3, "y"), envs("toy-zero", "toy-canary:random"), TestSuite())
    assert exc.value.env_id == "toy-canary:random"


def test_failing_original_is_rejected():
    units = [SourceUnit.from_text("d.toy", "main() {\n  int x;\n  x = 1 / read();\n}\n")]
    with pytest.raises(OriginalFailedError):
        prepare_oracle(units, SlicingCriterion("d.toy", 3, "x"), envs("toy-zero"), TestSuite.of("2", "0"))


def test_json_round_trip(tmp_path):
    oracle = Oracle({("G", 0): OracleEntry(DIGEST_42, 0), ("C", 1): OracleEntry(EMPTY_DIGEST, 3)})
    oracle.save(tmp_path / "oracle.json")
    data = json.loads((tmp_path / "oracle.json").read_text())
    assert data["digest_alg"] == "sha256" and data["runs"] == 3
    assert {"env", "test", "digest"} <= set(data["entries"][0])
    assert Oracle.load(tmp_path / "oracle.json") == oracle


values = st.lists(st.text(alphabet=st.characters(blacklist_characters="\n"), max_size=4), max_size=5)


@given(values, values)
def test_serialization_is_injective(a, b):
    if a != b:
        assert serialize_tracked(TrackedOutput(tuple(a))) != serialize_tracked(TrackedOutput(tuple(b)))


def test_concatenation_ambiguity_is_resolved():
    # "a\nb" is not a legal value, but splitting differently must still differ
    assert serialize_tracked(TrackedOutput(("a", "b"))) != serialize_tracked(TrackedOutput(("a", "b", "")))
    assert serialize_tracked(TrackedOutput(("",))) != serialize_tracked(TrackedOutput())
