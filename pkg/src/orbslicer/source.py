"""Programs as immutable line sequences plus deletion masks, and slice records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

Line = tuple[str, int]  # (relative path, 1-based original line index)


class SourceError(Exception):
    pass


class SourceNotFoundError(SourceError):
    pass


class SourceDecodeError(SourceError):
    pass


class MaskError(ValueError):
    pass


@dataclass(frozen=True)
class SourceUnit:
    """One source file.

    ``lines`` never include their terminators and indices never change;
    ``insertions`` carries extra lines placed after an original line (the
    criterion tracker) without renumbering anything.
    """

    path: str
    lines: tuple[str, ...]
    final_newline: bool = True
    newline_style: str = "lf"
    sliceable: bool = True
    insertions: tuple[tuple[int, str], ...] = ()

    def __len__(self) -> int:
        return len(self.lines)

    def line(self, index: int) -> str:
        if not 1 <= index <= len(self.lines):
            raise IndexError(f"{self.path}: no line {index}")
        return self.lines[index - 1]

    def indices(self) -> range:
        return range(1, len(self.lines) + 1)

    @classmethod
    def from_text(cls, path: str, text: str, sliceable: bool = True) -> SourceUnit:
        final_newline = text.endswith("\n")
        body = text[:-1] if final_newline else text
        lines = tuple(body.split("\n")) if text else ()
        style = "crlf" if lines and all(l.endswith("\r") for l in lines) else "lf"
        return cls(path, lines, final_newline, style, sliceable)


@dataclass(frozen=True)
class DeletionMask:
    deleted: frozenset[Line] = frozenset()

    def __contains__(self, item: Line) -> bool:
        return item in self.deleted

    def __len__(self) -> int:
        return len(self.deleted)

    def __or__(self, other: DeletionMask | Iterable[Line]) -> DeletionMask:
        extra = other.deleted if isinstance(other, DeletionMask) else frozenset(other)
        return DeletionMask(self.deleted | extra)

    def for_path(self, path: str) -> frozenset[int]:
        return frozenset(i for p, i in self.deleted if p == path)

    def validate(self, units: Iterable[SourceUnit]) -> None:
        by_path = {u.path: u for u in units}
        for path, index in self.deleted:
            unit = by_path.get(path)
            if unit is None:
                raise MaskError(f"mask names unknown file {path!r}")
            if not unit.sliceable:
                raise MaskError(f"{path!r} is not sliceable")
            if not 1 <= index <= len(unit):
                raise MaskError(f"{path}: line {index} out of range 1..{len(unit)}")


def load_sources(paths: Iterable[str | Path], root: str | Path | None = None) -> list[SourceUnit]:
    """Load files as :class:`SourceUnit`; unit paths are relative to ``root`` if given."""
    units = []
    for p in paths:
        p = Path(p)
        try:
            raw = p.read_bytes()
        except FileNotFoundError:
            raise SourceNotFoundError(f"{p}: no such file") from None
        except IsADirectoryError:
            raise SourceNotFoundError(f"{p}: is a directory") from None
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SourceDecodeError(f"{p}: not valid UTF-8 text ({exc.reason})") from None
        rel = p.resolve().relative_to(Path(root).resolve()) if root is not None else Path(p.name)
        units.append(SourceUnit.from_text(rel.as_posix(), text))
    return units


def render(unit: SourceUnit, mask: DeletionMask = DeletionMask()) -> str:
    """Text of ``unit`` with masked lines physically removed."""
    gone = mask.for_path(unit.path)
    for index in gone:
        if not 1 <= index <= len(unit):
            raise MaskError(f"{unit.path}: line {index} out of range 1..{len(unit)}")
    if gone and not unit.sliceable:
        raise MaskError(f"{unit.path!r} is not sliceable")
    extra: dict[int, list[str]] = {}
    for after, text in unit.insertions:
        extra.setdefault(after, []).append(text)
    out = list(extra.get(0, ()))
    for index, text in enumerate(unit.lines, start=1):
        if index not in gone:
            out.append(text)
        out.extend(extra.get(index, ()))
    if not out:
        return ""
    return "\n".join(out) + ("\n" if unit.final_newline else "")


def render_all(units: Iterable[SourceUnit], mask: DeletionMask = DeletionMask()) -> dict[str, str]:
    return {u.path: render(u, mask) for u in units}


def all_lines(units: Iterable[SourceUnit]) -> frozenset[Line]:
    return frozenset((u.path, i) for u in units for i in u.indices())


# --- slice records ---------------------------------------------------------


@dataclass(frozen=True)
class SliceStats:
    passes: int = 0
    candidates: int = 0
    accepted: int = 0
    wall_time: float = field(default=0.0, compare=False)
    max_passes_reached: bool = False

    def to_json(self) -> dict:
        # wall time is kept out of slice.json so reruns are byte-identical
        return {
            "passes": self.passes,
            "candidates": self.candidates,
            "accepted": self.accepted,
            "max_passes_reached": self.max_passes_reached,
        }


@dataclass(frozen=True)
class SliceRecord:
    instantiation_id: str
    criterion: object  # SlicingCriterion; untyped here to avoid a cycle
    retained: frozenset[Line]
    deleted: frozenset[Line]
    stats: SliceStats = SliceStats()
    program: str = ""
    nondeterministic: bool = False

    def __post_init__(self):
        if self.retained & self.deleted:
            raise ValueError("retained and deleted lines overlap")

    @property
    def identity(self) -> tuple:
        c = self.criterion
        return (self.program, c.path, c.line, c.variable)

    def with_flags(self, **changes) -> SliceRecord:
        return replace(self, **changes)

    def check_partition(self, units: Iterable[SourceUnit]) -> None:
        universe = all_lines(units)
        if self.retained | self.deleted != universe:
            raise AssertionError("retained and deleted do not cover the program")
        if self.retained & self.deleted:
            raise AssertionError("retained and deleted overlap")

    def to_json(self) -> dict:
        c = self.criterion
        return {
            "instantiation_id": self.instantiation_id,
            "program": self.program,
            "criterion": {"path": c.path, "line": c.line, "variable": c.variable},
            "retained": _per_file(self.retained),
            "deleted": _per_file(self.deleted),
            "stats": self.stats.to_json(),
            "nondeterministic": self.nondeterministic,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> SliceRecord:
        from .criterion import SlicingCriterion

        c = data["criterion"]
        s = data.get("stats", {})
        return cls(
            instantiation_id=data["instantiation_id"],
            criterion=SlicingCriterion(c["path"], int(c["line"]), c["variable"]),
            retained=_from_per_file(data["retained"]),
            deleted=_from_per_file(data["deleted"]),
            stats=SliceStats(
                passes=s.get("passes", 0),
                candidates=s.get("candidates", 0),
                accepted=s.get("accepted", 0),
                max_passes_reached=s.get("max_passes_reached", False),
            ),
            program=data.get("program", ""),
            nondeterministic=data.get("nondeterministic", False),
        )


def _per_file(lines: Iterable[Line]) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for path, index in lines:
        out.setdefault(path, []).append(index)
    return {p: sorted(v) for p, v in sorted(out.items())}


def _from_per_file(data: Mapping[str, list[int]]) -> frozenset[Line]:
    return frozenset((p, int(i)) for p, idx in data.items() for i in idx)


def diff_slices(a: SliceRecord, b: SliceRecord) -> tuple[frozenset[Line], frozenset[Line]]:
    """Lines retained only by ``a`` and only by ``b``."""
    if a.identity != b.identity:
        raise ValueError(f"cannot diff slices of different programs/criteria: {a.identity} vs {b.identity}")
    if a.retained | a.deleted != b.retained | b.deleted:
        raise ValueError("slices cover different line sets")
    return a.retained - b.retained, b.retained - a.retained


def write_slice(record: SliceRecord, units: Iterable[SourceUnit], out_dir: str | Path) -> Path:
    """Write rendered sliced sources plus ``slice.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mask = DeletionMask(record.deleted)
    for unit in units:
        target = out_dir / unit.path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(render(replace(unit, insertions=()), mask).encode("utf-8"))
    path = out_dir / "slice.json"
    path.write_text(json.dumps(record.to_json(), indent=2, sort_keys=True) + "\n")
    return path


def read_slice(path: str | Path) -> SliceRecord:
    path = Path(path)
    if path.is_dir():
        path = path / "slice.json"
    return SliceRecord.from_json(json.loads(path.read_text()))
