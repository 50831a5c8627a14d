"""Ground-truth relevance labels read from a JSONL file.

Each line is ``{query_id, doc_id, retrieval_date, label}``. A line whose
``retrieval_date`` is null or absent labels the (query, doc) pair on every
date; a dated line for the same pair takes precedence.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from relgrade.corpus import PairRecord, _date, iter_jsonl, write_jsonl
from relgrade.errors import FormatError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GoldLabel:
    query_id: str
    doc_id: str
    retrieval_date: dt.date | None
    label: bool

    @property
    def key(self):
        return (self.query_id, self.doc_id, self.retrieval_date)

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "doc_id": self.doc_id,
            "retrieval_date": None if self.retrieval_date is None else self.retrieval_date.isoformat(),
            "label": self.label,
        }


@dataclass
class GoldReport:
    """Bookkeeping from :func:`load_gold_labels`."""

    matched: int = 0
    unlabeled: int = 0
    unmatched: list = field(default_factory=list)


def read_gold(path) -> list[GoldLabel]:
    labels = []
    seen = set()
    for lineno, obj in iter_jsonl(path):
        try:
            label = obj["label"]
            if not isinstance(label, bool):
                raise ValueError("label must be true or false")
            date = obj.get("retrieval_date")
            entry = GoldLabel(
                str(obj["query_id"]), str(obj["doc_id"]),
                None if date is None else _date(date), label,
            )
        except KeyError as exc:
            raise FormatError(f"missing key {exc.args[0]!r}", path, lineno) from None
        except ValueError as exc:
            raise FormatError(str(exc), path, lineno) from None
        if entry.key in seen:
            raise FormatError(f"duplicate gold key {entry.key}", path, lineno)
        seen.add(entry.key)
        labels.append(entry)
    return labels


def write_gold(path, labels: Iterable[GoldLabel]) -> int:
    return write_jsonl(path, (g.to_json() for g in labels))


def attach_gold(pairs: Sequence[PairRecord], labels: Sequence[GoldLabel]) -> tuple[list[PairRecord], GoldReport]:
    dated = {g.key: g.label for g in labels if g.retrieval_date is not None}
    undated = {(g.query_id, g.doc_id): g.label for g in labels if g.retrieval_date is None}
    used_dated = set()
    used_undated = set()
    report = GoldReport()
    out = []
    for pair in pairs:
        if pair.key in dated:
            label = dated[pair.key]
            used_dated.add(pair.key)
        elif (pair.query_id, pair.doc_id) in undated:
            label = undated[(pair.query_id, pair.doc_id)]
            used_undated.add((pair.query_id, pair.doc_id))
        else:
            label = None
        if label is None:
            report.unlabeled += 1
        else:
            report.matched += 1
        out.append(replace(pair, label=label))
    report.unmatched = sorted(
        [k for k in dated if k not in used_dated]
        + [(q, d, None) for (q, d) in undated if (q, d) not in used_undated],
        key=lambda k: (k[0], k[1], "" if k[2] is None else k[2].isoformat()),
    )
    if report.unmatched:
        logger.warning("%d gold labels match no pair", len(report.unmatched))
    if report.unlabeled:
        logger.warning("%d pairs have no gold label", report.unlabeled)
    return out, report


def load_gold_labels(path, pairs: Sequence[PairRecord]) -> tuple[list[PairRecord], GoldReport]:
    """Attach labels from ``path`` to ``pairs``; unmatched and missing keys are reported."""
    return attach_gold(pairs, read_gold(path))
