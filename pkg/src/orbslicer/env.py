"""Execution environments: build a candidate, run it on each test, report outcomes."""

from __future__ import annotations

import json
import logging
import os
import random
import shutil
import signal
import subprocess
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from . import toy
from .criterion import DEFAULT_MARKER, TOY_TRACKER, TrackedOutput, extract_tracked

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_MS = 10_000
DEFAULT_BUILD_TIMEOUT_MS = 60_000
BUILTINS = ("toy-zero", "toy-residue", "toy-typed", "toy-canary:<seed>", "toy-canary:random")

# exit statuses a shell reports for a child killed by one of these signals
_CRASH_SIGNALS = {signal.SIGSEGV, signal.SIGBUS, signal.SIGFPE, signal.SIGILL, signal.SIGABRT, signal.SIGKILL}


class ConfigError(ValueError):
    pass


class OutcomeKind(str, Enum):
    BUILD_FAILED = "BuildFailed"
    RUN_CRASHED = "RunCrashed"
    RUN_TIMED_OUT = "RunTimedOut"
    COMPLETED = "Completed"


@dataclass(frozen=True)
class ExecutionOutcome:
    kind: OutcomeKind
    tracked: TrackedOutput | None = None
    exit_code: int | None = None
    detail: str = field(default="", compare=False)

    def __post_init__(self):
        if (self.tracked is not None) != (self.kind is OutcomeKind.COMPLETED):
            raise ValueError("tracked output is present iff the run completed")

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "tracked": list(self.tracked.values) if self.tracked is not None else None,
            "exit_code": self.exit_code,
            "detail": self.detail,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> ExecutionOutcome:
        tracked = data.get("tracked")
        return cls(
            OutcomeKind(data["kind"]),
            TrackedOutput(tuple(tracked)) if tracked is not None else None,
            data.get("exit_code"),
            data.get("detail", ""),
        )


def build_failed(detail: str) -> ExecutionOutcome:
    return ExecutionOutcome(OutcomeKind.BUILD_FAILED, detail=detail)


@dataclass(frozen=True)
class TestInput:
    __test__ = False

    stdin: bytes = b""
    args: str = ""
    input_path: str | None = None
    name: str = ""

    def payload(self) -> bytes:
        if self.input_path is not None:
            return Path(self.input_path).read_bytes()
        return self.stdin


@dataclass(frozen=True)
class TestSuite:
    __test__ = False

    tests: tuple[TestInput, ...] = (TestInput(name="empty"),)

    def __post_init__(self):
        if not self.tests:
            raise ValueError("a test suite needs at least one test")

    def __len__(self) -> int:
        return len(self.tests)

    def __iter__(self):
        return iter(self.tests)

    def __getitem__(self, i: int) -> TestInput:
        return self.tests[i]

    @classmethod
    def of(cls, *payloads: str | bytes) -> TestSuite:
        return cls(tuple(TestInput(p.encode() if isinstance(p, str) else p, name=str(i)) for i, p in enumerate(payloads)))

    @classmethod
    def from_dir(cls, directory: str | Path | None) -> TestSuite:
        """Each ``*.input`` file in ``directory`` is one stdin payload, in name order."""
        if directory is None or not Path(directory).is_dir():
            return cls()
        files = sorted(Path(directory).glob("*.input"))
        if not files:
            return cls()
        return cls(tuple(TestInput(f.read_bytes(), name=f.name) for f in files))


@dataclass(frozen=True)
class EnvironmentSpec:
    id: str
    build_cmd: str | None = None
    run_cmd: str | None = None
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    env_vars: Mapping[str, str] = field(default_factory=dict)
    tracker_template: str | None = None
    builtin: str | None = None
    step_budget: int = toy.DEFAULT_STEP_BUDGET
    build_timeout_ms: int = DEFAULT_BUILD_TIMEOUT_MS

    def __post_init__(self):
        if not self.id:
            raise ConfigError("environment id must be non-empty")
        if self.timeout_ms <= 0:
            raise ConfigError(f"{self.id}: timeout_ms must be positive")
        if self.builtin is None and not self.run_cmd:
            raise ConfigError(f"{self.id}: needs either 'builtin' or 'run_cmd'")
        if self.builtin is not None:
            _builtin_model(self.builtin)  # validates

    def __hash__(self) -> int:
        return hash((self.id, self.builtin, self.build_cmd, self.run_cmd))

    @property
    def is_toy(self) -> bool:
        return self.builtin is not None

    @property
    def hermetic(self) -> bool:
        """Whether identical candidates are guaranteed to behave identically."""
        return self.is_toy and self.builtin != "toy-canary:random"

    @property
    def template(self) -> str:
        if self.tracker_template is not None:
            return self.tracker_template
        if self.is_toy:
            return TOY_TRACKER
        raise ConfigError(f"{self.id}: external environments need a tracker_template")

    @classmethod
    def from_json(cls, data: Mapping) -> EnvironmentSpec:
        data = dict(data)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown environment field(s): {', '.join(sorted(unknown))}")
        if "id" not in data:
            if "builtin" not in data:
                raise ConfigError("environment needs an 'id'")
            data["id"] = data["builtin"]
        data["env_vars"] = dict(data.get("env_vars") or {})
        return cls(**data)

    def to_json(self) -> dict:
        out = {"id": self.id}
        for name in ("builtin", "build_cmd", "run_cmd", "tracker_template"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        out["timeout_ms"] = self.timeout_ms
        if self.env_vars:
            out["env_vars"] = dict(self.env_vars)
        if self.is_toy and self.step_budget != toy.DEFAULT_STEP_BUDGET:
            out["step_budget"] = self.step_budget
        return out


def load_environments(path: str | Path) -> list[EnvironmentSpec]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read environment config {path}: {exc}") from None
    if not isinstance(data, list):
        raise ConfigError("environment config must be a JSON list of objects")
    return parse_environments(data)


def parse_environments(data: Sequence[Mapping]) -> list[EnvironmentSpec]:
    envs = [EnvironmentSpec.from_json(d) for d in data]
    ids = [e.id for e in envs]
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        raise ConfigError(f"duplicate environment id(s): {', '.join(sorted(dupes))}")
    return envs


def builtin_env(name: str, id: str | None = None, **kw) -> EnvironmentSpec:
    return EnvironmentSpec(id=id or name, builtin=name, **kw)


def _builtin_model(name: str) -> tuple[str, int | None]:
    """Map a builtin name to (memory model kind, seed); seed -1 means "fresh per run"."""
    if name in ("toy-zero", "toy-typed"):
        return "zero", None
    if name == "toy-residue":
        return "residue", None
    if name.startswith("toy-canary:"):
        seed = name.split(":", 1)[1]
        if seed == "random":
            return "canary", -1
        try:
            return "canary", int(seed)
        except ValueError:
            pass
    raise ConfigError(f"unknown builtin environment {name!r} (expected one of {', '.join(BUILTINS)})")


# --- builds ----------------------------------------------------------------


class _ToyBuild:
    def __init__(self, env: EnvironmentSpec, files: Mapping[str, str]):
        self.env = env
        self.failed: ExecutionOutcome | None = None
        self.program = None
        try:
            program = toy.parse_toy("".join(files.values()))
            if env.builtin == "toy-typed":
                toy.check_returns(program)
            self.program = program
        except toy.ToySyntaxError as exc:
            self.failed = build_failed(str(exc))

    def run(self, test: TestInput, marker: str) -> ExecutionOutcome:
        if self.failed is not None:
            return self.failed
        kind, seed = _builtin_model(self.env.builtin)
        note = ""
        if seed == -1:
            seed = random.SystemRandom().randrange(2**32)
            note = f"canary seed {seed}; "
        model = toy.MemoryModel(kind, seed)
        try:
            out, status = toy.eval_toy(self.program, model, test.payload(), self.env.step_budget)
        except toy.ToyRuntimeError as exc:
            return ExecutionOutcome(OutcomeKind.RUN_CRASHED, detail=note + str(exc))
        except toy.ToyTimeout as exc:
            return ExecutionOutcome(OutcomeKind.RUN_TIMED_OUT, detail=note + str(exc))
        return ExecutionOutcome(OutcomeKind.COMPLETED, extract_tracked(out, marker), status, note.rstrip("; "))

    def close(self) -> None:
        pass


class _CommandBuild:
    def __init__(self, env: EnvironmentSpec, files: Mapping[str, str], keep_failures: bool = False):
        self.env = env
        self.keep_failures = keep_failures
        self.failed: ExecutionOutcome | None = None
        self.any_failure = False
        self.scratch = Path(tempfile.mkdtemp(prefix=f"orbs-{env.id}-"))
        self.src_dir = self.scratch / "src"
        self.out = self.scratch / "prog"
        for rel, text in files.items():
            target = self.src_dir / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text)
        self._environ = {**os.environ, **self.env.env_vars}
        if env.build_cmd:
            cmd = env.build_cmd.replace("{src_dir}", str(self.src_dir)).replace("{out}", str(self.out))
            try:
                proc = subprocess.run(
                    cmd,
                    shell=True,
                    cwd=self.scratch,
                    env=self._environ,
                    capture_output=True,
                    timeout=env.build_timeout_ms / 1000,
                )
            except subprocess.TimeoutExpired:
                self.failed = build_failed("build timed out")
            except OSError as exc:
                self.failed = build_failed(f"cannot spawn build: {exc}")
            else:
                if proc.returncode != 0:
                    self.failed = build_failed(proc.stderr.decode(errors="replace")[-2000:])
        if self.failed is not None:
            self.any_failure = True

    def run(self, test: TestInput, marker: str) -> ExecutionOutcome:
        if self.failed is not None:
            return self.failed
        payload = test.payload()
        input_path = self.scratch / f"input-{abs(hash(test))}"
        input_path.write_bytes(payload)
        cmd = self.env.run_cmd.replace("{out}", str(self.out)).replace("{test_input}", str(input_path))
        if test.args:
            cmd = f"{cmd} {test.args}"
        outcome = self._spawn(cmd, payload, marker)
        if outcome.kind is not OutcomeKind.COMPLETED:
            self.any_failure = True
        return outcome

    def _spawn(self, cmd: str, payload: bytes, marker: str) -> ExecutionOutcome:
        try:
            proc = subprocess.Popen(
                cmd,
                shell=True,
                cwd=self.scratch,
                env=self._environ,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                start_new_session=True,
            )
        except OSError as exc:
            return ExecutionOutcome(OutcomeKind.RUN_CRASHED, detail=f"cannot spawn: {exc}")
        try:
            stdout, stderr = proc.communicate(payload, timeout=self.env.timeout_ms / 1000)
        except subprocess.TimeoutExpired:
            _kill_group(proc)
            proc.communicate()
            return ExecutionOutcome(OutcomeKind.RUN_TIMED_OUT, detail=f"exceeded {self.env.timeout_ms} ms")
        code = proc.returncode
        err = stderr.decode(errors="replace")[-2000:]
        if code < 0 or (code > 128 and code - 128 in _CRASH_SIGNALS) or code in (126, 127):
            return ExecutionOutcome(OutcomeKind.RUN_CRASHED, exit_code=code, detail=err)
        tracked = extract_tracked(stdout.decode(errors="replace"), marker)
        return ExecutionOutcome(OutcomeKind.COMPLETED, tracked, code, err)

    def close(self) -> None:
        if self.keep_failures and self.any_failure:
            log.info("keeping scratch directory %s", self.scratch)
            return
        shutil.rmtree(self.scratch, ignore_errors=True)


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


def open_build(env: EnvironmentSpec, candidate: Mapping[str, str], keep_failures: bool = False):
    """Build ``candidate`` once; the result's ``run(test, marker)`` executes one test."""
    if env.is_toy:
        return _ToyBuild(env, candidate)
    return _CommandBuild(env, candidate, keep_failures)


def evaluate(
    env: EnvironmentSpec,
    candidate: Mapping[str, str],
    suite: TestSuite,
    marker: str = DEFAULT_MARKER,
    keep_failures: bool = False,
) -> list[ExecutionOutcome]:
    """One outcome per test; a failed build yields BuildFailed for every test."""
    build = open_build(env, candidate, keep_failures)
    try:
        return [build.run(test, marker) for test in suite]
    finally:
        build.close()


@dataclass(frozen=True)
class ProbeResult:
    deterministic: bool
    outcomes: tuple[ExecutionOutcome, ...]
    details: str = ""


def probe_determinism(
    env: EnvironmentSpec,
    candidate: Mapping[str, str],
    suite: TestSuite,
    runs: int = 3,
    marker: str = DEFAULT_MARKER,
) -> ProbeResult:
    """Run the whole suite ``runs`` times and check every repetition agrees.

    Stable failures count as deterministic.
    """
    if runs < 2:
        raise ValueError("a determinism probe needs at least two runs")
    first = evaluate(env, candidate, suite, marker)
    for r in range(1, runs):
        again = evaluate(env, candidate, suite, marker)
        for i, (a, b) in enumerate(zip(first, again)):
            if a != b:
                return ProbeResult(
                    False,
                    tuple(first),
                    f"environment {env.id}: test {i} differs between run 1 and run {r + 1} "
                    f"({_describe(a)} vs {_describe(b)})",
                )
    return ProbeResult(True, tuple(first))


def _describe(o: ExecutionOutcome) -> str:
    if o.kind is OutcomeKind.COMPLETED:
        vals = list(o.tracked.values)
        shown = vals if len(vals) <= 3 else vals[:3] + ["..."]
        return f"Completed{shown} exit {o.exit_code}"
    return o.kind.value
