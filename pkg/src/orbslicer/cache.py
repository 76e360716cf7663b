"""Content-addressed memo of execution outcomes, optionally persisted to disk.

Layout on disk: ``<cache-dir>/<env_id>/<candidate digest>/<test_index>.json``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import threading
from collections import Counter
from concurrent.futures import Future
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

from .env import ExecutionOutcome

log = logging.getLogger(__name__)


class CacheIntegrityError(Exception):
    """Two different outcomes were stored for one key of a hermetic environment."""


def candidate_digest(files: Mapping[str, str]) -> str:
    h = hashlib.sha256()
    for path in sorted(files):
        name = path.encode("utf-8")
        body = files[path].encode("utf-8")
        h.update(b"%d:%s%d:" % (len(name), name, len(body)))
        h.update(body)
    return h.hexdigest()


@dataclass(frozen=True)
class CacheKey:
    env_id: str
    candidate_digest: str
    test_index: int


class OutcomeCache:
    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory is not None else None
        self._mem: dict[CacheKey, ExecutionOutcome] = {}
        self._inflight: dict[CacheKey, Future] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.executions: Counter[CacheKey] = Counter()
        self.disabled_envs: set[str] = set()

    def __len__(self) -> int:
        return len(self._mem)

    def _path(self, key: CacheKey) -> Path:
        return self.directory / key.env_id / key.candidate_digest / f"{key.test_index}.json"

    def _load(self, key: CacheKey) -> ExecutionOutcome | None:
        if self.directory is None:
            return None
        try:
            return ExecutionOutcome.from_json(json.loads(self._path(key).read_text()))
        except (OSError, ValueError, KeyError):
            return None

    def _persist(self, key: CacheKey, outcome: ExecutionOutcome) -> None:
        if self.directory is None:
            return
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp{threading.get_ident()}")
        tmp.write_text(json.dumps(outcome.to_json(), sort_keys=True))
        os.replace(tmp, path)

    def lookup(self, key: CacheKey) -> ExecutionOutcome | None:
        with self._lock:
            if key.env_id in self.disabled_envs:
                return None
            hit = self._mem.get(key)
            if hit is None:
                hit = self._load(key)
                if hit is not None:
                    self._mem[key] = hit
        return hit

    def store(self, key: CacheKey, outcome: ExecutionOutcome, strict: bool = True) -> None:
        """Record ``outcome``; a conflicting earlier outcome is an integrity failure.

        With ``strict`` the conflict raises :class:`CacheIntegrityError`;
        otherwise it is logged, the entry is dropped and caching stops for
        that environment.
        """
        with self._lock:
            if key.env_id in self.disabled_envs:
                return
            old = self._mem.get(key)
            if old is None:
                old = self._load(key)
            if old is not None and old != outcome:
                if strict:
                    raise CacheIntegrityError(
                        f"environment {key.env_id} produced {outcome.kind.value} after {old.kind.value} "
                        f"for the same candidate (test {key.test_index})"
                    )
                log.warning(
                    "environment %s is not hermetic: conflicting outcomes for one candidate; "
                    "disabling its cache entries",
                    key.env_id,
                )
                self._invalidate_env(key.env_id)
                return
            self._mem[key] = outcome
            self._persist(key, outcome)

    def _invalidate_env(self, env_id: str) -> None:
        for k in [k for k in self._mem if k.env_id == env_id]:
            del self._mem[k]
        self.disabled_envs.add(env_id)
        if self.directory is not None:
            shutil.rmtree(self.directory / env_id, ignore_errors=True)

    def get_or_compute(
        self, key: CacheKey, compute: Callable[[], ExecutionOutcome], strict: bool = True
    ) -> ExecutionOutcome:
        """Single-flight lookup: concurrent callers for one key share a single computation."""
        with self._lock:
            disabled = key.env_id in self.disabled_envs
            hit = None if disabled else self._mem.get(key)
            if hit is None and not disabled:
                hit = self._load(key)
                if hit is not None:
                    self._mem[key] = hit
            if hit is not None:
                self.hits += 1
                return hit
            pending = None if disabled else self._inflight.get(key)
            if pending is None:
                self.misses += 1
                self.executions[key] += 1
                mine: Future = Future()
                if not disabled:
                    self._inflight[key] = mine
        if pending is not None:
            return pending.result()
        try:
            outcome = compute()
            self.store(key, outcome, strict)
        except BaseException as exc:
            mine.set_exception(exc)
            raise
        else:
            mine.set_result(outcome)
        finally:
            # popped only after the store so late arrivals hit the memo
            with self._lock:
                self._inflight.pop(key, None)
        return outcome
