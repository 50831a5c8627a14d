from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Iterable

from relgrade.corpus import PairKey, PairRecord, _date, iter_jsonl, write_jsonl
from relgrade.errors import FormatError


@dataclass(frozen=True)
class GraderVerdict:
    """One grader's decision on one pair.

    ``relevant`` is ``None`` when the grader failed on the pair; ``raw`` then
    carries the error. Such verdicts are never counted as either class.
    """

    query_id: str
    doc_id: str
    retrieval_date: dt.date
    relevant: bool | None
    raw: str = ""

    @property
    def key(self) -> PairKey:
        return (self.query_id, self.doc_id, self.retrieval_date)

    @property
    def graded(self) -> bool:
        return self.relevant is not None

    @classmethod
    def for_pair(cls, pair: PairRecord, relevant: bool | None, raw: str = "") -> "GraderVerdict":
        return cls(pair.query_id, pair.doc_id, pair.retrieval_date, relevant, raw)

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "doc_id": self.doc_id,
            "retrieval_date": self.retrieval_date.isoformat(),
            "label": self.relevant,
            "raw": self.raw,
        }


def write_verdicts(path, verdicts: Iterable[GraderVerdict]) -> int:
    return write_jsonl(path, (v.to_json() for v in verdicts))


def read_verdicts(path) -> list[GraderVerdict]:
    out = []
    seen = set()
    for lineno, obj in iter_jsonl(path):
        try:
            label = obj.get("label")
            if label is not None and not isinstance(label, bool):
                raise ValueError("label must be true, false or null")
            verdict = GraderVerdict(
                str(obj["query_id"]), str(obj["doc_id"]), _date(obj["retrieval_date"]),
                label, str(obj.get("raw", "")),
            )
        except KeyError as exc:
            raise FormatError(f"missing key {exc.args[0]!r}", path, lineno) from None
        except ValueError as exc:
            raise FormatError(str(exc), path, lineno) from None
        if verdict.key in seen:
            raise FormatError(f"duplicate verdict for {verdict.key}", path, lineno)
        seen.add(verdict.key)
        out.append(verdict)
    return out
