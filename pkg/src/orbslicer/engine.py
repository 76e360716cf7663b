"""The nVORBS fixpoint loop.

A window of 1..max_window consecutive live lines is speculatively deleted;
the candidate is built and run in every environment of the instantiation and
the deletion is kept only if the tracked output matches the oracle
everywhere.  Passes repeat until one commits nothing.
"""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Iterable, Sequence

from .cache import CacheKey, OutcomeCache, candidate_digest
from .criterion import DEFAULT_MARKER, SlicingCriterion, instrument
from .env import EnvironmentSpec, ExecutionOutcome, OutcomeKind, TestSuite, open_build, probe_determinism
from .oracle import DEFAULT_DETERMINISM_RUNS, Oracle, capture_oracle
from .source import DeletionMask, SliceRecord, SliceStats, SourceUnit, all_lines, render_all

log = logging.getLogger(__name__)


class Strategy(str, Enum):
    GROW = "grow"  # smallest accepted window first
    LARGEST = "largest"  # try every size, keep the largest accepted


@dataclass(frozen=True)
class EngineConfig:
    max_window: int = 4
    strategy: Strategy = Strategy.GROW
    max_passes: int = 100
    ignore_exit_code: bool = False
    jobs: int = 1
    determinism_runs: int = DEFAULT_DETERMINISM_RUNS
    probe_slice: bool = True
    keep_failures: bool = False
    marker: str = DEFAULT_MARKER

    def __post_init__(self):
        if self.max_window < 1:
            raise ValueError("max_window must be at least 1")
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        object.__setattr__(self, "strategy", Strategy(self.strategy))

    def to_json(self) -> dict:
        return {
            "max_window": self.max_window,
            "strategy": self.strategy.value,
            "max_passes": self.max_passes,
            "ignore_exit_code": self.ignore_exit_code,
            "determinism_runs": self.determinism_runs,
            "probe_slice": self.probe_slice,
            "marker": self.marker,
        }


def instantiation_id(env_ids: Sequence[str]) -> str:
    """``G`` + ``C`` -> ``GC``; multi-character ids are joined with ``+``."""
    if all(len(i) == 1 for i in env_ids):
        return "".join(env_ids)
    return "+".join(env_ids)


@dataclass(frozen=True)
class Instantiation:
    envs: tuple[EnvironmentSpec, ...]
    id: str = field(default="")

    def __post_init__(self):
        if not self.envs:
            raise ValueError("an instantiation needs at least one environment")
        ids = [e.id for e in self.envs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate environments in instantiation: {ids}")
        object.__setattr__(self, "id", instantiation_id(ids))

    @classmethod
    def of(cls, envs: Iterable[EnvironmentSpec], config: Sequence[EnvironmentSpec] | None = None) -> Instantiation:
        envs = list(envs)
        if config is not None:
            order = {e.id: i for i, e in enumerate(config)}
            envs.sort(key=lambda e: order[e.id])
        return cls(tuple(envs))


def lattice(envs: Sequence[EnvironmentSpec]) -> list[Instantiation]:
    """Every non-empty subset of ``envs`` (2**n - 1 instantiations), smallest first."""
    return [Instantiation(tuple(c)) for k in range(1, len(envs) + 1) for c in combinations(envs, k)]


def resolve_instantiation(text: str, envs: Sequence[EnvironmentSpec]) -> Instantiation:
    by_id = {e.id: e for e in envs}
    if text in by_id:
        return Instantiation((by_id[text],))
    parts = text.split("+")
    if len(parts) > 1 and all(p in by_id for p in parts):
        return Instantiation.of((by_id[p] for p in parts), envs)
    if all(c in by_id for c in text) and len(set(text)) == len(text):
        return Instantiation.of((by_id[c] for c in text), envs)
    raise ValueError(f"cannot resolve instantiation {text!r} from environments {', '.join(by_id)}")


def instrumented_sources(
    units: Sequence[SourceUnit], criterion: SlicingCriterion, env: EnvironmentSpec, marker: str = DEFAULT_MARKER
) -> list[SourceUnit]:
    template = criterion.tracker_template or env.template
    return instrument(units, criterion.with_template(template), marker)


def prepare_oracle(
    units: Sequence[SourceUnit],
    criterion: SlicingCriterion,
    envs: Sequence[EnvironmentSpec],
    suite: TestSuite,
    runs: int = DEFAULT_DETERMINISM_RUNS,
    marker: str = DEFAULT_MARKER,
) -> Oracle:
    """Instrument the original per environment and capture its oracle."""
    sources = {e.id: render_all(instrumented_sources(units, criterion, e, marker)) for e in envs}
    return capture_oracle(envs, sources, suite, runs, marker)


@dataclass(frozen=True)
class Accept:
    mask: DeletionMask


@dataclass(frozen=True)
class Reject:
    reason: str


def _reason(env_id: str, test: int, outcome: ExecutionOutcome) -> str:
    if outcome.kind is OutcomeKind.BUILD_FAILED:
        return f"BuildFailed({env_id})"
    if outcome.kind is OutcomeKind.RUN_CRASHED:
        return f"Crash({env_id},{test})"
    if outcome.kind is OutcomeKind.RUN_TIMED_OUT:
        return f"Timeout({env_id},{test})"
    return f"Mismatch({env_id},{test})"


class Slicer:
    """Slices one program for one criterion under one instantiation."""

    def __init__(
        self,
        units: Sequence[SourceUnit],
        criterion: SlicingCriterion,
        inst: Instantiation,
        suite: TestSuite,
        cfg: EngineConfig = EngineConfig(),
        oracle: Oracle | None = None,
        cache: OutcomeCache | None = None,
    ):
        self.units = list(units)
        self.criterion = criterion
        self.inst = inst
        self.suite = suite
        self.cfg = cfg
        self.cache = cache
        if oracle is None:
            oracle = prepare_oracle(self.units, criterion, inst.envs, suite, cfg.determinism_runs, cfg.marker)
        missing = [e.id for e in inst.envs if (e.id, 0) not in oracle.entries]
        if missing:
            raise ValueError(f"oracle lacks environment(s) {', '.join(missing)}")
        self.oracle = oracle
        self.instrumented = {e.id: instrumented_sources(self.units, criterion, e, cfg.marker) for e in inst.envs}
        self.candidates = 0
        self._count_lock = threading.Lock()
        self._pool: ThreadPoolExecutor | None = None

    # -- candidate checking ------------------------------------------------

    def _check_env(self, env: EnvironmentSpec, mask: DeletionMask) -> str | None:
        files = render_all(self.instrumented[env.id], mask)
        digest = candidate_digest(files)
        build = None

        def run(test_index: int):
            nonlocal build
            if build is None:
                build = open_build(env, files, self.cfg.keep_failures)
            return build.run(self.suite[test_index], self.cfg.marker)

        try:
            for i in range(len(self.suite)):
                if self.cache is not None:
                    key = CacheKey(env.id, digest, i)
                    outcome = self.cache.get_or_compute(key, lambda i=i: run(i), strict=env.hermetic)
                else:
                    outcome = run(i)
                if not self.oracle.matches(env.id, i, outcome, self.cfg.ignore_exit_code):
                    return _reason(env.id, i, outcome)
        finally:
            if build is not None:
                build.close()
        return None

    def check(self, mask: DeletionMask) -> str | None:
        """``None`` if the candidate matches the oracle everywhere, else the first reason (config order)."""
        if self._pool is not None and len(self.inst.envs) > 1 and self.cfg.strategy is Strategy.GROW:
            reasons = list(self._pool.map(lambda e: self._check_env(e, mask), self.inst.envs))
            return next((r for r in reasons if r is not None), None)
        for env in self.inst.envs:
            reason = self._check_env(env, mask)
            if reason is not None:
                return reason
        return None

    # -- windows -------------------------------------------------------------

    def live_lines(self, mask: DeletionMask, path: str) -> list[int]:
        unit = next(u for u in self.units if u.path == path)
        return [i for i in unit.indices() if (path, i) not in mask]

    def attempt_window(self, mask: DeletionMask, path: str, start: int, size: int) -> Accept | Reject:
        if not 1 <= size <= self.cfg.max_window:
            raise ValueError(f"window size {size} outside 1..{self.cfg.max_window}")
        unit = next((u for u in self.units if u.path == path), None)
        if unit is None or not unit.sliceable:
            raise ValueError(f"{path!r} is not a sliceable file of this program")
        live = self.live_lines(mask, path)
        if start not in live:
            raise ValueError(f"{path}:{start} is not a live, deletable line")
        pos = live.index(start)
        window = live[pos : pos + size]
        if len(window) < size:
            raise ValueError(f"window of {size} lines at {path}:{start} runs past the end of the file")
        candidate = mask | ((path, i) for i in window)
        with self._count_lock:
            self.candidates += 1
        reason = self.check(candidate)
        if reason is not None:
            return Reject(reason)
        candidate.validate(self.units)
        return Accept(candidate)

    def _largest(self, mask: DeletionMask, path: str, start: int, sizes: list[int]) -> Accept | None:
        if self._pool is not None:
            results = list(self._pool.map(lambda s: self.attempt_window(mask, path, start, s), sizes))
        else:
            results = [self.attempt_window(mask, path, start, s) for s in sizes]
        accepted = [r for r in results if isinstance(r, Accept)]
        return accepted[-1] if accepted else None

    def one_pass(self, mask: DeletionMask) -> tuple[DeletionMask, int]:
        commits = 0
        for unit in self.units:
            if not unit.sliceable:
                continue
            cursor = 1
            while True:
                live = [i for i in self.live_lines(mask, unit.path) if i >= cursor]
                if not live:
                    break
                start = live[0]
                sizes = list(range(1, min(self.cfg.max_window, len(live)) + 1))
                result = None
                if self.cfg.strategy is Strategy.GROW:
                    for size in sizes:
                        r = self.attempt_window(mask, unit.path, start, size)
                        if isinstance(r, Accept):
                            result = r
                            break
                else:
                    result = self._largest(mask, unit.path, start, sizes)
                if result is None:
                    cursor = start + 1
                    continue
                committed = sorted(result.mask.for_path(unit.path) - mask.for_path(unit.path))
                mask = result.mask
                commits += 1
                cursor = committed[-1] + 1
        return mask, commits

    def run(self, program: str = "") -> SliceRecord:
        started = time.monotonic()
        mask = DeletionMask()
        passes = 0
        accepted = 0
        capped = False
        self._pool = ThreadPoolExecutor(self.cfg.jobs) if self.cfg.jobs > 1 else None
        try:
            while True:
                passes += 1
                before = len(mask)
                mask, commits = self.one_pass(mask)
                accepted += commits
                assert len(mask) >= before
                log.debug("%s pass %d: %d commit(s), %d line(s) deleted", self.inst.id, passes, commits, len(mask))
                if commits == 0:
                    break
                if passes >= self.cfg.max_passes:
                    capped = True
                    log.warning("%s: stopped after max_passes=%d without reaching a fixpoint", self.inst.id, passes)
                    break
        finally:
            if self._pool is not None:
                self._pool.shutdown()
            self._pool = None
        nondet = False
        if self.cfg.probe_slice and self.cfg.determinism_runs >= 2:
            for env in self.inst.envs:
                probe = probe_determinism(
                    env, render_all(self.instrumented[env.id], mask), self.suite, self.cfg.determinism_runs, self.cfg.marker
                )
                if not probe.deterministic:
                    log.warning("slice is non-deterministic: %s", probe.details)
                    nondet = True
        universe = all_lines(u for u in self.units if u.sliceable)
        deleted = frozenset(mask.deleted)
        record = SliceRecord(
            instantiation_id=self.inst.id,
            criterion=SlicingCriterion(self.criterion.path, self.criterion.line, self.criterion.variable),
            retained=all_lines(self.units) - deleted,
            deleted=deleted,
            stats=SliceStats(passes, self.candidates, accepted, time.monotonic() - started, capped),
            program=program,
            nondeterministic=nondet,
        )
        assert deleted <= universe
        record.check_partition(self.units)
        return record


def slice_program(
    units: Sequence[SourceUnit],
    criterion: SlicingCriterion,
    inst: Instantiation,
    suite: TestSuite,
    cfg: EngineConfig = EngineConfig(),
    oracle: Oracle | None = None,
    cache: OutcomeCache | None = None,
    program: str = "",
) -> SliceRecord:
    """Slice ``units`` with respect to ``criterion`` under ``inst``."""
    return Slicer(units, criterion, inst, suite, cfg, oracle, cache).run(program)
