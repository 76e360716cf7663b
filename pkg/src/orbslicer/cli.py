"""Command-line entry point: ``orbslicer slice | compare | toy-run | envs list``.

Exit codes: 0 success, 1 usage or input error, 2 the original program cannot
serve as an oracle (or a toy syntax error for ``toy-run``), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import random
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from itertools import combinations
from pathlib import Path
from typing import Sequence

from . import __version__, toy
from .cache import CacheIntegrityError, OutcomeCache
from .compare import CorpusError, Filter, apply_filters, format_csv, format_text, parse_pairs, summarize
from .criterion import DEFAULT_MARKER, CriterionError, SlicingCriterion, instrument, tracker_line
from .engine import EngineConfig, Strategy, lattice, prepare_oracle, resolve_instantiation, slice_program
from .env import (
    BUILTINS,
    ConfigError,
    EnvironmentSpec,
    TestSuite,
    _builtin_model,
    builtin_env,
    load_environments,
    parse_environments,
)
from .oracle import OracleError
from .source import SourceError, SourceUnit, load_sources, read_slice, render_all, write_slice

log = logging.getLogger("orbslicer")

EXIT_OK, EXIT_USAGE, EXIT_ORACLE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # shared by the top-level parser and every subcommand, so global flags
    # may appear before or after the command name
    d = {"default": argparse.SUPPRESS} if suppress else {}
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="environment config (JSON list)", **d)
    p.add_argument("--jobs", type=int, help="concurrent candidate evaluations", **d)
    p.add_argument("--cache-dir", help="persist evaluation outcomes here", **d)
    p.add_argument("--keep-failures", action="store_true", help="keep scratch dirs of failed candidates", **d)
    p.add_argument("--marker", help=f"tracker output prefix (default {DEFAULT_MARKER})", **d)
    p.add_argument("-v", "--verbose", action="count", help="more logging (repeatable)", **d)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orbslicer", description=__doc__.splitlines()[0], parents=[_global_flags(False)])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.set_defaults(jobs=1, marker=DEFAULT_MARKER, keep_failures=False, verbose=0, cache_dir=None)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)
    shared = [_global_flags(True)]

    s = sub.add_parser("slice", parents=shared, help="slice a program under one or more instantiations")
    s.add_argument("sources", nargs="*", help="additional sliceable source files")
    s.add_argument("--criterion", help="<path>:<line>:<var>")
    s.add_argument("--instantiation", action="append", default=[], help="e.g. GC or toy-residue+toy-canary:1")
    s.add_argument("--all-instantiations", action="store_true", help="every non-empty subset of the config")
    s.add_argument("--context", action="append", default=[], help="non-sliceable file that is part of the program")
    s.add_argument("--tests", help="directory of NN.input stdin payloads")
    s.add_argument("--max-window", type=int, default=4)
    s.add_argument("--strategy", choices=[x.value for x in Strategy], default=Strategy.GROW.value)
    s.add_argument("--max-passes", type=int, default=100)
    s.add_argument("--determinism-runs", type=int, default=3)
    s.add_argument("--ignore-exit-code", action="store_true")
    s.add_argument("--no-cache", action="store_true")
    s.add_argument("--program-id", help="name of the program in slice identities (default: criterion file)")
    s.add_argument("--manifest", help="replay the run described by this manifest.json")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_slice)

    c = sub.add_parser("compare", parents=shared, help="classify slices across instantiations")
    c.add_argument("--slices", required=True, help="directory searched recursively for slice.json")
    c.add_argument("--pairs", help="A:B,C:D (default: every pair)")
    c.add_argument("--filters", default="", help="comma-separated: nondet, criterion")
    c.add_argument("--format", choices=["text", "csv"], default="text")
    c.add_argument("--report", help="also write the report to this file")
    c.set_defaults(func=cmd_compare)

    t = sub.add_parser("toy-run", parents=shared, help="run one toy program")
    t.add_argument("file")
    t.add_argument("--model", default="toy-zero", help=f"one of {', '.join(BUILTINS)}")
    t.add_argument("--input", help="file fed to read()/getc()")
    t.add_argument("--track", metavar="LINE:VAR", help="insert a tracker after LINE printing VAR")
    t.add_argument("--step-budget", type=int, default=toy.DEFAULT_STEP_BUDGET)
    t.set_defaults(func=cmd_toy_run)

    e = sub.add_parser("envs", parents=shared, help="inspect environments")
    e.add_argument("action", choices=["list"])
    e.set_defaults(func=cmd_envs)
    return parser


# --- environments -------------------------------------------------------------


def _environments(args, mentioned: Sequence[str] = ()) -> list[EnvironmentSpec]:
    """Configured environments, or builtins named directly in instantiations."""
    if getattr(args, "config", None):
        return load_environments(args.config)
    envs: dict[str, EnvironmentSpec] = {}
    for text in mentioned:
        for name in text.split("+"):
            if name not in envs:
                try:
                    envs[name] = builtin_env(name)
                except ConfigError:
                    raise UsageError(f"{name!r} is not a builtin environment; pass --config") from None
    return list(envs.values())


def cmd_envs(args) -> int:
    envs = _environments(args) if getattr(args, "config", None) else [
        builtin_env(n) for n in ("toy-zero", "toy-residue", "toy-typed", "toy-canary:1")
    ]
    for e in envs:
        kind = f"builtin {e.builtin}" if e.is_toy else f"command run={e.run_cmd!r}"
        flag = "" if e.hermetic else "  (not assumed hermetic)"
        print(f"{e.id:<16} {kind}  timeout={e.timeout_ms}ms{flag}")
    return EXIT_OK


# --- slice ------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class SliceJob:
    envs: list[EnvironmentSpec]
    instantiations: list[str]
    all_instantiations: bool
    criterion: str
    sources: list[str]  # absolute paths; the criterion file first
    context: list[str]
    root: str
    tests_dir: str | None
    program_id: str
    cfg: EngineConfig

    def manifest(self, config_path: str | None, suite: TestSuite) -> dict:
        return {
            "tool": "orbslicer",
            "version": __version__,
            "started": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "config": config_path,
            "environments": [e.to_json() for e in self.envs],
            "instantiations": self.instantiations,
            "all_instantiations": self.all_instantiations,
            "criterion": self.criterion,
            "program_id": self.program_id,
            "root": self.root,
            "sources": [{"file": f, "sha256": _sha256(Path(f))} for f in self.sources],
            "context": [{"file": f, "sha256": _sha256(Path(f))} for f in self.context],
            "tests": {
                "dir": self.tests_dir,
                "count": len(suite),
                "sha256": [hashlib.sha256(t.payload()).hexdigest() for t in suite],
            },
            "engine": self.cfg.to_json(),
        }

    @classmethod
    def from_manifest(cls, data: dict, args) -> SliceJob:
        for entry in data["sources"] + data.get("context", []):
            path = Path(entry["file"])
            if not path.is_file():
                raise UsageError(f"manifest source {path} no longer exists")
            if _sha256(path) != entry["sha256"]:
                raise UsageError(f"manifest source {path} changed since the recorded run")
        eng = data["engine"]
        cfg = EngineConfig(
            max_window=eng["max_window"],
            strategy=eng["strategy"],
            max_passes=eng["max_passes"],
            ignore_exit_code=eng["ignore_exit_code"],
            determinism_runs=eng["determinism_runs"],
            probe_slice=eng.get("probe_slice", True),
            marker=eng["marker"],
            jobs=args.jobs,
            keep_failures=args.keep_failures,
        )
        return cls(
            envs=parse_environments(data["environments"]),
            instantiations=data["instantiations"],
            all_instantiations=data["all_instantiations"],
            criterion=data["criterion"],
            sources=[e["file"] for e in data["sources"]],
            context=[e["file"] for e in data.get("context", [])],
            root=data["root"],
            tests_dir=data["tests"]["dir"],
            program_id=data["program_id"],
            cfg=cfg,
        )


def _engine_config(args) -> EngineConfig:
    return EngineConfig(
        max_window=args.max_window,
        strategy=args.strategy,
        max_passes=args.max_passes,
        ignore_exit_code=args.ignore_exit_code,
        jobs=args.jobs,
        determinism_runs=args.determinism_runs,
        keep_failures=args.keep_failures,
        marker=args.marker,
    )


def _job_from_args(args) -> SliceJob:
    if not args.criterion:
        raise UsageError("slice needs --criterion <path>:<line>:<var>")
    if not args.instantiation and not args.all_instantiations:
        raise UsageError("slice needs --instantiation (repeatable) or --all-instantiations")
    if args.determinism_runs < 2:
        raise UsageError("--determinism-runs must be at least 2")
    if args.all_instantiations and not args.config:
        raise UsageError("--all-instantiations needs --config")
    crit = SlicingCriterion.parse(args.criterion)
    main_file = Path(crit.path).resolve()
    if not main_file.is_file():
        raise UsageError(f"criterion file {crit.path} does not exist")
    extra = [str(Path(p).resolve()) for p in args.sources if Path(p).resolve() != main_file]
    context = [str(Path(p).resolve()) for p in args.context]
    files = [str(main_file)] + extra
    root = os.path.commonpath([str(Path(f).parent) for f in files + context])
    rel = main_file.relative_to(root).as_posix()
    try:
        cfg = _engine_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return SliceJob(
        envs=_environments(args, args.instantiation),
        instantiations=list(args.instantiation),
        all_instantiations=args.all_instantiations,
        criterion=f"{rel}:{crit.line}:{crit.variable}",
        sources=files,
        context=context,
        root=root,
        tests_dir=str(Path(args.tests).resolve()) if args.tests else None,
        program_id=args.program_id or rel,
        cfg=cfg,
    )


def _load_units(job: SliceJob) -> list[SourceUnit]:
    units = load_sources(job.sources, job.root)
    units += [replace(u, sliceable=False) for u in load_sources(job.context, job.root)]
    return units


def cmd_slice(args) -> int:
    if args.manifest:
        try:
            data = json.loads(Path(args.manifest).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read manifest {args.manifest}: {exc}") from None
        job = SliceJob.from_manifest(data, args)
        config_path = data.get("config")
    else:
        job = _job_from_args(args)
        config_path = str(Path(args.config).resolve()) if args.config else None

    units = _load_units(job)
    criterion = SlicingCriterion.parse(job.criterion)
    if job.all_instantiations:
        insts = lattice(job.envs)
    else:
        try:
            insts = [resolve_instantiation(text, job.envs) for text in job.instantiations]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    ids = [i.id for i in insts]
    if len(set(ids)) != len(ids):
        raise UsageError(f"instantiation requested twice: {ids}")
    used = [e for e in job.envs if any(e in i.envs for i in insts)]
    if job.tests_dir is not None and not Path(job.tests_dir).is_dir():
        raise UsageError(f"test directory {job.tests_dir} does not exist")
    suite = TestSuite.from_dir(job.tests_dir)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = job.manifest(config_path, suite)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    try:
        oracle = prepare_oracle(units, criterion, used, suite, job.cfg.determinism_runs, job.cfg.marker)
    except OracleError as exc:
        print(f"orbslicer: oracle capture failed in environment {exc.env_id}: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    oracle.save(out / "oracle.json")

    cache = None if args.no_cache else OutcomeCache(args.cache_dir)
    for inst in insts:
        record = slice_program(units, criterion, inst, suite, job.cfg, oracle, cache, job.program_id)
        write_slice(record, units, out / inst.id)
        kept = sum(1 for p, _ in record.retained if any(u.path == p and u.sliceable for u in units))
        total = sum(len(u) for u in units if u.sliceable)
        note = " (max passes reached)" if record.stats.max_passes_reached else ""
        note += " (non-deterministic)" if record.nondeterministic else ""
        print(f"{inst.id}: kept {kept}/{total} lines in {record.stats.passes} pass(es), "
              f"{record.stats.candidates} candidates{note}")
    manifest["finished"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return EXIT_OK


# --- compare ----------------------------------------------------------------------


def cmd_compare(args) -> int:
    root = Path(args.slices)
    files = sorted(root.rglob("slice.json")) if root.is_dir() else []
    if not files:
        raise UsageError(f"no slice.json found under {root}")
    corpus: dict[str, list] = {}
    for f in files:
        try:
            r = read_slice(f)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"{f}: unreadable slice record ({exc})") from None
        corpus.setdefault(r.instantiation_id, []).append(r)
    known = sorted(corpus, key=lambda i: (len(i), i))
    try:
        filters = [Filter(f.strip()) for f in args.filters.split(",") if f.strip()]
    except ValueError:
        raise UsageError(f"unknown filter in {args.filters!r} (expected nondet, criterion)") from None
    try:
        pairs = parse_pairs(args.pairs, known) if args.pairs else list(combinations(known, 2))
        if not pairs:
            raise UsageError("need slices from at least two instantiations to compare")
        kept, report = apply_filters(corpus, filters)
        rows = summarize(kept, pairs)
    except CorpusError as exc:
        raise UsageError(str(exc)) from None
    text = format_csv(rows) if args.format == "csv" else format_text(rows, report)
    sys.stdout.write(text)
    if args.format == "csv" and report.removed:
        for line in report.lines():
            print(f"removed {line}", file=sys.stderr)
    if args.report:
        Path(args.report).write_text(text)
    return EXIT_OK


# --- toy-run ------------------------------------------------------------------------


def cmd_toy_run(args) -> int:
    try:
        env = builtin_env(args.model, step_budget=args.step_budget)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    path = Path(args.file)
    try:
        unit = load_sources([path], path.parent)[0]
    except SourceError as exc:
        raise UsageError(str(exc)) from None
    units = [unit]
    if args.track:
        try:
            line, var = args.track.rsplit(":", 1)
            crit = SlicingCriterion(unit.path, int(line), var, env.template)
        except ValueError:
            raise UsageError(f"--track expects LINE:VAR, got {args.track!r}") from None
        tracker_line(crit, args.marker)
        units = instrument(units, crit, args.marker)
    text = "".join(render_all(units).values())
    try:
        program = toy.parse_toy(text)
        if args.model == "toy-typed":
            toy.check_returns(program)
    except toy.ToySyntaxError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    stdin = Path(args.input).read_bytes() if args.input else b""
    kind, seed = _builtin_model(args.model)
    if seed == -1:
        seed = random.SystemRandom().randrange(2**32)
        print(f"canary seed {seed}", file=sys.stderr)
    try:
        out, status = toy.eval_toy(program, toy.MemoryModel(kind, seed), stdin, args.step_budget)
    except (toy.ToyRuntimeError, toy.ToyTimeout) as exc:
        sys.stdout.write(exc.output)
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(out)
    if status:
        print(f"exit status {status}", file=sys.stderr)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except (UsageError, ConfigError, CriterionError, SourceError) as exc:
        print(f"orbslicer: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CacheIntegrityError as exc:
        print(f"orbslicer: cache integrity failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
