"""Slicing criteria, tracker injection and extraction of tracked values."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

from .source import SourceUnit

DEFAULT_MARKER = "ORBS:"
TOY_TRACKER = 'print "{marker}", {var}'


class CriterionError(ValueError):
    pass


@dataclass(frozen=True)
class SlicingCriterion:
    path: str
    line: int
    variable: str
    tracker_template: str | None = None

    @classmethod
    def parse(cls, text: str) -> SlicingCriterion:
        """Parse ``<path>:<line>:<var>``; the path itself may contain colons."""
        try:
            path, line, var = text.rsplit(":", 2)
            line_no = int(line)
        except ValueError:
            raise CriterionError(f"criterion must look like <path>:<line>:<var>, got {text!r}") from None
        if not path or not var.isidentifier():
            raise CriterionError(f"criterion must look like <path>:<line>:<var>, got {text!r}")
        return cls(path, line_no, var)

    def __str__(self) -> str:
        return f"{self.path}:{self.line}:{self.variable}"

    def with_template(self, template: str) -> SlicingCriterion:
        return replace(self, tracker_template=template)


@dataclass(frozen=True)
class TrackedOutput:
    values: tuple[str, ...] = ()

    def __post_init__(self):
        if any("\n" in v for v in self.values):
            raise ValueError("tracked values cannot contain newlines")

    def __len__(self) -> int:
        return len(self.values)

    def __add__(self, other: TrackedOutput) -> TrackedOutput:
        return TrackedOutput(self.values + other.values)


def tracker_line(criterion: SlicingCriterion, marker: str = DEFAULT_MARKER) -> str:
    template = criterion.tracker_template
    if template is None:
        raise CriterionError("criterion has no tracker template")
    if "{var}" not in template:
        raise CriterionError(f"tracker template lacks a {{var}} placeholder: {template!r}")
    return template.replace("{marker}", marker).replace("{var}", criterion.variable)


def instrument(
    units: Iterable[SourceUnit], criterion: SlicingCriterion, marker: str = DEFAULT_MARKER
) -> list[SourceUnit]:
    """Insert the tracker right after the criterion line.

    The tracker is recorded as an insertion on the unit, so original line
    numbers (and therefore masks) are untouched and the tracker can never be
    deleted.
    """
    units = list(units)
    text = tracker_line(criterion, marker)
    out = []
    found = False
    for unit in units:
        if unit.path == criterion.path:
            if not 1 <= criterion.line <= len(unit):
                raise CriterionError(f"{criterion.path} has no line {criterion.line}")
            unit = replace(unit, insertions=unit.insertions + ((criterion.line, text),))
            found = True
        out.append(unit)
    if not found:
        raise CriterionError(f"criterion file {criterion.path!r} is not part of the program")
    return out


def extract_tracked(raw_output: str, marker: str = DEFAULT_MARKER) -> TrackedOutput:
    """Values of lines that start with ``marker`` (prefix stripped once), in order."""
    values = []
    for line in raw_output.split("\n"):
        if line.startswith(marker):
            values.append(line[len(marker) :].rstrip("\r"))
    return TrackedOutput(tuple(values))
