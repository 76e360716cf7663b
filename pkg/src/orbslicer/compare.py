"""Comparing slices of the same program and criterion across instantiations.

Relations are computed over retained original line indices.  Filters drop a
slice identity from every instantiation at once.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .source import SliceRecord

Corpus = Mapping[str, Sequence[SliceRecord]]


class Relation(str, Enum):
    EQUAL = "="
    PROPER_SUPERSET = "⊃"
    PROPER_SUBSET = "⊂"
    INCOMPARABLE = "≠"


class Filter(str, Enum):
    NONDETERMINISTIC = "nondet"
    CRITERION_ABSENT = "criterion"


class CorpusError(ValueError):
    pass


def relation(a: frozenset, b: frozenset) -> Relation:
    if a == b:
        return Relation.EQUAL
    if a > b:
        return Relation.PROPER_SUPERSET
    if a < b:
        return Relation.PROPER_SUBSET
    return Relation.INCOMPARABLE


def classify(a: SliceRecord, b: SliceRecord) -> Relation:
    if a.identity != b.identity:
        raise ValueError(f"cannot compare slices of different programs/criteria: {a.identity} vs {b.identity}")
    return relation(a.retained, b.retained)


def comparison_count(instantiations: int, slice_identities: int) -> int:
    """Pairwise comparisons among ``instantiations`` for each slice identity."""
    if instantiations < 2:
        raise ValueError("need at least two instantiations to compare")
    if slice_identities < 0:
        raise ValueError("slice count cannot be negative")
    return instantiations * (instantiations - 1) // 2 * slice_identities


def _index(corpus: Corpus) -> dict[str, dict[tuple, SliceRecord]]:
    out = {}
    for inst, records in corpus.items():
        by_id = {}
        for r in records:
            if r.identity in by_id:
                raise CorpusError(f"instantiation {inst} has two slices for {r.identity}")
            by_id[r.identity] = r
        out[inst] = by_id
    identities = [set(v) for v in out.values()]
    if identities and any(s != identities[0] for s in identities):
        missing = set.union(*identities) - set.intersection(*identities)
        raise CorpusError(f"ragged corpus: {len(missing)} slice identit(ies) missing from some instantiation")
    return out


@dataclass
class FilterReport:
    removed: dict[tuple, list[str]] = field(default_factory=dict)

    def add(self, identity: tuple, reason: str) -> None:
        self.removed.setdefault(identity, []).append(reason)

    def lines(self) -> list[str]:
        return [f"{'/'.join(map(str, ident))}: {', '.join(reasons)}" for ident, reasons in sorted(self.removed.items())]


def apply_filters(corpus: Corpus, filters: Iterable[Filter | str]) -> tuple[dict[str, list[SliceRecord]], FilterReport]:
    """Drop identities flagged non-deterministic anywhere, or whose criterion
    line is deleted by at least one instantiation."""
    filters = {Filter(f) for f in filters}
    index = _index(corpus)
    report = FilterReport()
    identities = sorted(next(iter(index.values()), {}))
    for ident in identities:
        records = [index[inst][ident] for inst in index]
        if Filter.NONDETERMINISTIC in filters:
            flagged = sorted(r.instantiation_id for r in records if r.nondeterministic)
            if flagged:
                report.add(ident, f"non-deterministic in {', '.join(flagged)}")
        if Filter.CRITERION_ABSENT in filters:
            c = records[0].criterion
            absent = sorted(r.instantiation_id for r in records if (c.path, c.line) not in r.retained)
            if absent:
                report.add(ident, f"criterion line deleted in {', '.join(absent)}")
    kept = {inst: [r for ident, r in sorted(by_id.items()) if ident not in report.removed] for inst, by_id in index.items()}
    return kept, report


@dataclass(frozen=True)
class SummaryRow:
    pair: tuple[str, str]
    equal: int = 0
    superset: int = 0
    subset: int = 0
    incomparable: int = 0

    @property
    def total(self) -> int:
        return self.equal + self.superset + self.subset + self.incomparable


def summarize(corpus: Corpus, pairs: Sequence[tuple[str, str]]) -> list[SummaryRow]:
    index = _index(corpus)
    rows = []
    for a, b in pairs:
        for inst in (a, b):
            if inst not in index:
                raise CorpusError(f"unknown instantiation {inst!r}")
        counts = {rel: 0 for rel in Relation}
        for ident, ra in index[a].items():
            counts[classify(ra, index[b][ident])] += 1
        rows.append(
            SummaryRow(
                (a, b),
                counts[Relation.EQUAL],
                counts[Relation.PROPER_SUPERSET],
                counts[Relation.PROPER_SUBSET],
                counts[Relation.INCOMPARABLE],
            )
        )
    return rows


def parse_pairs(text: str, known: Iterable[str]) -> list[tuple[str, str]]:
    """Parse ``A:B,C:D``; ids may themselves contain ``:`` as long as the split is unambiguous."""
    known = set(known)
    pairs = []
    for item in filter(None, (p.strip() for p in text.split(","))):
        splits = [
            (item[:i], item[i + 1 :])
            for i, ch in enumerate(item)
            if ch == ":" and item[:i] in known and item[i + 1 :] in known
        ]
        if len(splits) != 1:
            raise CorpusError(f"cannot parse pair {item!r} against instantiations {', '.join(sorted(known))}")
        pairs.append(splits[0])
    return pairs


def format_csv(rows: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pair", "equal", "superset", "subset", "incomparable"])
    for r in rows:
        w.writerow([f"{r.pair[0]}:{r.pair[1]}", r.equal, r.superset, r.subset, r.incomparable])
    return buf.getvalue()


def format_text(rows: Sequence[SummaryRow], report: FilterReport | None = None) -> str:
    labels = [f"{a} vs. {b}" for a, b in (r.pair for r in rows)]
    width = max([len("comparison")] + [len(s) for s in labels])
    out = [f"{'comparison':<{width}}  {'=':>6} {'⊃':>6} {'⊂':>6} {'≠':>6}"]
    for label, r in zip(labels, rows):
        out.append(f"{label:<{width}}  {r.equal:>6} {r.superset:>6} {r.subset:>6} {r.incomparable:>6}")
    if report is not None and report.removed:
        out.append("")
        out.append(f"removed {len(report.removed)} slice identit(ies):")
        out.extend("  " + line for line in report.lines())
        if any("non-deterministic" in r for rs in report.removed.values() for r in rs):
            out.append("  (non-determinism is detected by a finite repeated-run probe and is approximate)")
    return "\n".join(out) + "\n"
