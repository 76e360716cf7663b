"""Post-hoc checks of finished slices that bypass the engine's bookkeeping.

Both checks rebuild candidates from the record's line sets and evaluate them
directly (no cache, no engine state).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .criterion import DEFAULT_MARKER, SlicingCriterion, instrument
from .env import EnvironmentSpec, TestSuite, evaluate
from .oracle import Oracle
from .source import DeletionMask, SliceRecord, SourceUnit, render_all


@dataclass(frozen=True)
class Violation:
    env_id: str
    test_index: int
    detail: str


def _candidate(units, criterion: SlicingCriterion, env: EnvironmentSpec, deleted, marker: str) -> dict[str, str]:
    template = criterion.tracker_template or env.template
    instrumented = instrument(units, criterion.with_template(template), marker)
    return render_all(instrumented, DeletionMask(frozenset(deleted)))


def _mismatches(units, criterion, envs, suite, oracle, deleted, marker, ignore_exit_code) -> list[Violation]:
    found = []
    for env in envs:
        outcomes = evaluate(env, _candidate(units, criterion, env, deleted, marker), suite, marker)
        for i, outcome in enumerate(outcomes):
            if not oracle.matches(env.id, i, outcome, ignore_exit_code):
                found.append(Violation(env.id, i, f"{outcome.kind.value} {outcome.detail}".strip()))
    return found


def soundness_violations(
    record: SliceRecord,
    units: Sequence[SourceUnit],
    criterion: SlicingCriterion,
    envs: Sequence[EnvironmentSpec],
    suite: TestSuite,
    oracle: Oracle,
    marker: str = DEFAULT_MARKER,
    ignore_exit_code: bool = False,
) -> list[Violation]:
    """Re-evaluate the rendered slice in every environment; empty list means sound."""
    record.check_partition(units)
    return _mismatches(units, criterion, envs, suite, oracle, record.deleted, marker, ignore_exit_code)


def remaining_windows(record: SliceRecord, units: Sequence[SourceUnit], max_window: int):
    """Every window of 1..max_window consecutive retained lines within one sliceable file."""
    for unit in units:
        if not unit.sliceable:
            continue
        live = sorted(i for p, i in record.retained if p == unit.path)
        for pos in range(len(live)):
            for size in range(1, max_window + 1):
                if pos + size <= len(live):
                    yield unit.path, tuple(live[pos : pos + size])


def fixpoint_violations(
    record: SliceRecord,
    units: Sequence[SourceUnit],
    criterion: SlicingCriterion,
    envs: Sequence[EnvironmentSpec],
    suite: TestSuite,
    oracle: Oracle,
    max_window: int = 4,
    marker: str = DEFAULT_MARKER,
    ignore_exit_code: bool = False,
) -> list[tuple[str, tuple[int, ...]]]:
    """Windows whose deletion would still be accepted; empty list means 1..max_window minimal."""
    accepted = []
    for path, window in remaining_windows(record, units, max_window):
        deleted = record.deleted | {(path, i) for i in window}
        if not _mismatches(units, criterion, envs, suite, oracle, deleted, marker, ignore_exit_code):
            accepted.append((path, window))
    return accepted
