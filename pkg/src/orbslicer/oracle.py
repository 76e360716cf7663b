"""Recorded criterion behaviour of the original program, per environment and test."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .criterion import DEFAULT_MARKER, TrackedOutput
from .env import EnvironmentSpec, ExecutionOutcome, OutcomeKind, TestSuite, probe_determinism

log = logging.getLogger(__name__)

DEFAULT_DETERMINISM_RUNS = 3


def serialize_tracked(tracked: TrackedOutput) -> bytes:
    """Values joined by newlines, then a trailing count.

    Values never contain a newline, so the count makes the encoding
    injective (``["a", "b"]`` and ``["a\\nb"]`` cannot collide).
    """
    return ("\n".join(tracked.values) + "\n" + str(len(tracked.values))).encode("utf-8")


def digest(tracked: TrackedOutput) -> str:
    return hashlib.sha256(serialize_tracked(tracked)).hexdigest()


class OracleError(Exception):
    """The original program cannot serve as an oracle."""

    def __init__(self, message: str, env_id: str):
        super().__init__(message)
        self.env_id = env_id


class NonDeterministicError(OracleError):
    pass


class OriginalFailedError(OracleError):
    pass


@dataclass(frozen=True)
class OracleEntry:
    digest: str
    exit_code: int | None


@dataclass(frozen=True)
class Oracle:
    entries: Mapping[tuple[str, int], OracleEntry]
    runs: int = DEFAULT_DETERMINISM_RUNS
    digest_alg: str = "sha256"
    # environments where the criterion was never reached on any test
    empty: frozenset[str] = field(default=frozenset(), compare=False)

    def env_ids(self) -> set[str]:
        return {e for e, _ in self.entries}

    def matches(self, env_id: str, test_index: int, outcome: ExecutionOutcome, ignore_exit_code: bool = False) -> bool:
        try:
            entry = self.entries[(env_id, test_index)]
        except KeyError:
            raise KeyError(f"oracle has no entry for environment {env_id!r}, test {test_index}") from None
        if outcome.kind is not OutcomeKind.COMPLETED:
            return False
        if not ignore_exit_code and outcome.exit_code != entry.exit_code:
            return False
        return digest(outcome.tracked) == entry.digest

    def to_json(self) -> dict:
        return {
            "digest_alg": self.digest_alg,
            "runs": self.runs,
            "entries": [
                {"env": env, "test": test, "digest": e.digest, "exit_code": e.exit_code}
                for (env, test), e in sorted(self.entries.items())
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> Oracle:
        if data.get("digest_alg", "sha256") != "sha256":
            raise ValueError(f"unsupported digest algorithm {data['digest_alg']!r}")
        entries = {(e["env"], int(e["test"])): OracleEntry(e["digest"], e.get("exit_code", 0)) for e in data["entries"]}
        return cls(entries, int(data.get("runs", DEFAULT_DETERMINISM_RUNS)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> Oracle:
        return cls.from_json(json.loads(Path(path).read_text()))

    def merged(self, other: Oracle) -> Oracle:
        return Oracle({**self.entries, **other.entries}, self.runs, self.digest_alg, self.empty | other.empty)


def matches(o: Oracle, env_id: str, test_index: int, outcome: ExecutionOutcome, ignore_exit_code: bool = False) -> bool:
    return o.matches(env_id, test_index, outcome, ignore_exit_code)


def capture_oracle(
    envs: Sequence[EnvironmentSpec],
    sources: Mapping[str, Mapping[str, str]],
    suite: TestSuite,
    determinism_runs: int = DEFAULT_DETERMINISM_RUNS,
    marker: str = DEFAULT_MARKER,
) -> Oracle:
    """Probe and record the instrumented original in every environment.

    ``sources`` maps environment id to that environment's instrumented,
    rendered files (tracker syntax can differ between environments).
    """
    entries: dict[tuple[str, int], OracleEntry] = {}
    empty = set()
    for env in envs:
        reached = False
        probe = probe_determinism(env, sources[env.id], suite, determinism_runs, marker)
        if not probe.deterministic:
            raise NonDeterministicError(f"environment {env.id} is non-deterministic: {probe.details}", env.id)
        for i, outcome in enumerate(probe.outcomes):
            if outcome.kind is not OutcomeKind.COMPLETED:
                raise OriginalFailedError(
                    f"original program does not complete in environment {env.id} on test {i}: "
                    f"{outcome.kind.value} {outcome.detail}".rstrip(),
                    env.id,
                )
            reached = reached or bool(outcome.tracked.values)
            entries[(env.id, i)] = OracleEntry(digest(outcome.tracked), outcome.exit_code)
        if not reached:
            empty.add(env.id)
            log.warning("criterion is never executed in environment %s; the oracle is the empty sequence", env.id)
    return Oracle(entries, determinism_runs, empty=frozenset(empty))
