"""Confusion-matrix metrics and multi-grader comparison tables.

Positive class is "relevant". A metric whose denominator is zero is
undefined and carried as ``None``; it renders as an em dash in text tables
and as an empty cell in CSV, never as zero.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence, Union

import numpy as np

from relgrade.corpus import PairKey, PairRecord
from relgrade.errors import DomainError, UsageError

if TYPE_CHECKING:
    from relgrade.grading.verdicts import GraderVerdict

UNDEFINED_TEXT = "—"

Truth = Union[Mapping[PairKey, bool], Sequence[PairRecord]]


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    ungraded: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsRow:
    model: str
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    ungraded: int = 0

    def values(self) -> tuple[float | None, ...]:
        return (self.accuracy, self.precision, self.recall, self.f1)


def truth_map(truth: Truth) -> dict[PairKey, bool]:
    if isinstance(truth, Mapping):
        return dict(truth)
    out = {}
    for pair in truth:
        if pair.label is None:
            raise UsageError(f"truth pair {pair.key} has no label")
        out[pair.key] = pair.label
    return out


def confusion(verdicts: Sequence["GraderVerdict"], truth: Truth) -> ConfusionMatrix:
    labels = truth_map(truth)
    tp = fp = fn = tn = ungraded = 0
    for v in verdicts:
        if v.key not in labels:
            raise UsageError(f"verdict for {v.key} has no ground-truth label")
        if v.relevant is None:
            ungraded += 1
            continue
        actual = labels[v.key]
        if v.relevant and actual:
            tp += 1
        elif v.relevant:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, fn, tn, ungraded)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def metrics(cm: ConfusionMatrix, model: str = "") -> MetricsRow:
    if cm.total == 0:
        raise DomainError("metrics are undefined for an empty confusion matrix")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    if precision and recall:
        f1 = 2.0 / (1.0 / precision + 1.0 / recall)
    else:
        f1 = None
    return MetricsRow(model, accuracy, precision, recall, f1, cm.ungraded)


def fmt(value: float | None, undefined: str = UNDEFINED_TEXT) -> str:
    return undefined if value is None else f"{value:.4f}"


CSV_COLUMNS = ("model", "accuracy", "precision", "recall", "f1", "ungraded")
TEXT_HEADER = ("Model", "Accuracy", "Precision", "Recall", "F1-score", "Ungraded")


@dataclass
class ComparisonReport:
    rows: list[MetricsRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([row.model, *(fmt(v, "") for v in row.values()), row.ungraded])
        return buf.getvalue()

    def to_text(self) -> str:
        table = [TEXT_HEADER] + [
            (row.model, *(fmt(v) for v in row.values()), str(row.ungraded)) for row in self.rows
        ]
        widths = [max(len(r[i]) for r in table) for i in range(len(TEXT_HEADER))]
        rule = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
        lines = [rule]
        for i, r in enumerate(table):
            lines.append("| " + " | ".join(c.rjust(w) if j else c.ljust(w)
                                          for j, (c, w) in enumerate(zip(r, widths))) + " |")
            if i == 0:
                lines.append(rule.replace("-", "="))
        lines.append(rule)
        return "\n".join(lines) + "\n"

    def write(self, csv_path, text_path=None) -> None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        if text_path is not None:
            with open(text_path, "w", encoding="utf-8") as fh:
                fh.write(self.to_text())


def compare(graders: Sequence[tuple[str, Sequence["GraderVerdict"]]], truth: Truth) -> ComparisonReport:
    """Score each named grader on the same ground truth, in input order.

    Every grader must cover exactly the same pair set.
    """
    if not graders:
        raise UsageError("compare needs at least one grader")
    labels = truth_map(truth)
    reference = None
    rows = []
    for name, verdicts in graders:
        keys = {v.key for v in verdicts}
        if len(keys) != len(verdicts):
            raise UsageError(f"grader {name!r} has more than one verdict for some pair")
        if reference is None:
            reference = keys
        elif keys != reference:
            raise UsageError(f"grader {name!r} was scored on a different pair set")
        rows.append(metrics(confusion(verdicts, labels), name))
    return ComparisonReport(rows)


@dataclass
class ThresholdCurve:
    """Precision/recall of ``cosine >= t`` for every distinct cosine ``t``."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray


def threshold_curve(pairs: Sequence[PairRecord]) -> ThresholdCurve:
    cos = np.array([p.cosine for p in pairs], dtype=np.float64)
    labels = truth_map(pairs)
    y = np.array([labels[p.key] for p in pairs], dtype=bool)
    order = np.argsort(-cos, kind="mergesort")
    cos, y = cos[order], y[order]
    n_pos = int(y.sum())
    if n_pos == 0:
        raise DomainError("threshold curve needs at least one positive pair")
    # keep the last index of each run of equal cosines (threshold is inclusive)
    last = np.r_[np.flatnonzero(np.diff(cos) != 0), len(cos) - 1]
    tp = np.cumsum(y)[last]
    predicted = last + 1
    return ThresholdCurve(cos[last], tp / predicted, tp / n_pos)


def best_precision_at_recall(curve: ThresholdCurve, target: float, tol: float) -> float | None:
    """Highest threshold-grader precision among thresholds with recall within ``tol`` of ``target``."""
    mask = np.abs(curve.recall - target) <= tol
    if not mask.any():
        return None
    return float(curve.precision[mask].max())
