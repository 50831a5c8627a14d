import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relgrade.errors import DomainError, UsageError
from relgrade.evaluation import (
    ComparisonReport,
    ConfusionMatrix,
    best_precision_at_recall,
    compare,
    confusion,
    metrics,
    threshold_curve,
)
from relgrade.grading import GraderVerdict, grade_with_threshold

from conftest import pair
from metric_fixtures import CASES, build, render


@pytest.mark.parametrize("name, outcomes, expected", CASES, ids=[c[0] for c in CASES])
def test_hand_tallied(name, outcomes, expected):
    verdicts, truth = build(outcomes)
    assert render(metrics(confusion(verdicts, truth))) == expected


def test_confusion_counts():
    verdicts, truth = build("TTTFMMNNNNU")
    cm = confusion(verdicts, truth)
    assert (cm.tp, cm.fp, cm.fn, cm.tn, cm.ungraded) == (3, 1, 2, 4, 1)
    assert cm.total == 10


def test_hand_example():
    row = metrics(ConfusionMatrix(tp=3, fp=1, fn=2, tn=4))
    assert row.accuracy == pytest.approx(0.7)
    assert row.precision == pytest.approx(0.75)
    assert row.recall == pytest.approx(0.6)
    assert row.f1 == pytest.approx(2 / 3)


def test_threshold_grader_hand_tally():
    cosines = [0.91, 0.15, 0.62, 0.48, 0.77, 0.05, 0.59, 0.33, 0.70, 0.12,
               0.81, 0.44, 0.66, 0.29, 0.55, 0.95, 0.38, 0.60, 0.21, 0.50]
    labels = [1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 1, 1, 0, 1, 0, 0]
    truth = [pair(doc_id=f"d{i}", cosine=c, label=bool(y)) for i, (c, y) in enumerate(zip(cosines, labels))]
    cm = confusion(grade_with_threshold(truth, 0.6), truth)
    # predicted relevant (cos >= 0.6): idx 0,2,4,8,10,12,15,17 -> truth 1,1,0,1,1,0,1,1
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (6, 2, 3, 9)


def test_missing_truth():
    with pytest.raises(UsageError):
        confusion([GraderVerdict("q", "x", pair().retrieval_date, True)], [pair(label=True)])


def test_empty_matrix():
    with pytest.raises(DomainError):
        metrics(ConfusionMatrix())


def test_unlabeled_truth_rejected():
    with pytest.raises(UsageError):
        confusion([], [pair()])


@given(st.text(alphabet="TFMN", min_size=1, max_size=40), st.randoms())
def test_permutation_invariant(outcomes, rnd):
    verdicts, truth = build(outcomes)
    shuffled = list(verdicts)
    rnd.shuffle(shuffled)
    assert metrics(confusion(shuffled, truth)) == metrics(confusion(verdicts, truth))


@given(st.text(alphabet="TFMN", min_size=1, max_size=40))
def test_metric_ranges_and_f1_identity(outcomes):
    row = metrics(confusion(*build(outcomes)))
    for v in row.values():
        assert v is None or 0.0 <= v <= 1.0
    p, r = row.precision, row.recall
    if p and r:
        assert row.f1 == pytest.approx(2 * p * r / (p + r), abs=1e-12)
        assert min(p, r) <= row.f1 + 1e-12 and row.f1 <= max(p, r) + 1e-12


@given(st.lists(st.booleans(), min_size=1, max_size=50).filter(any))
def test_all_positive_grader_base_rate(labels):
    truth = [pair(doc_id=f"d{i}", cosine=0.0, label=y) for i, y in enumerate(labels)]
    row = metrics(confusion(grade_with_threshold(truth, -1.0), truth))
    assert row.recall == 1.0
    assert row.precision == sum(labels) / len(labels)


@given(st.lists(st.booleans(), min_size=1, max_size=50))
def test_all_negative_grader(labels):
    truth = [pair(doc_id=f"d{i}", cosine=0.0, label=y) for i, y in enumerate(labels)]
    row = metrics(confusion(grade_with_threshold(truth, 2.0), truth))
    assert row.precision is None and row.f1 is None
    assert row.accuracy == labels.count(False) / len(labels)


def test_recall_non_increasing_in_threshold(rng):
    truth = [pair(doc_id=f"d{i}", cosine=float(c), label=bool(rng.random() < 0.3))
             for i, c in enumerate(rng.uniform(-1, 1, 200))]
    recalls = [metrics(confusion(grade_with_threshold(truth, t), truth)).recall
               for t in np.linspace(-1, 1, 41)]
    assert all(a >= b for a, b in zip(recalls, recalls[1:]))


class TestCompare:
    def test_perfect(self):
        verdicts, truth = build("TTNN")
        report = compare([("perfect", verdicts)], truth)
        assert render(report.rows[0]) == ("1.0000",) * 4

    def test_identical_graders(self):
        verdicts, truth = build("TFMN")
        report = compare([("a", verdicts), ("b", list(verdicts))], truth)
        assert report.rows[0].values() == report.rows[1].values()
        assert [r.model for r in report.rows] == ["a", "b"]

    def test_misaligned(self):
        verdicts, truth = build("TFMN")
        with pytest.raises(UsageError):
            compare([("a", verdicts), ("b", verdicts[:3])], truth)

    def test_duplicate_verdicts(self):
        verdicts, truth = build("TN")
        with pytest.raises(UsageError):
            compare([("a", verdicts + verdicts[:1])], truth)

    def test_no_graders(self):
        with pytest.raises(UsageError):
            compare([], [])

    def test_rendering(self, tmp_path):
        verdicts, truth = build("MMNN")
        report = compare([("never", verdicts)], truth)
        csv_text = report.to_csv()
        assert csv_text.splitlines() == ["model,accuracy,precision,recall,f1,ungraded",
                                         "never,0.5000,,0.0000,,0"]
        text = report.to_text()
        assert "F1-score" in text and "—" in text and "0.0000" in text
        report.write(tmp_path / "r.csv", tmp_path / "r.txt")
        assert (tmp_path / "r.csv").read_text() == csv_text
        assert (tmp_path / "r.txt").read_text() == text

    def test_ungraded_column(self):
        verdicts, truth = build("TUUN")
        assert compare([("j", verdicts)], truth).rows[0].ungraded == 2


class TestThresholdCurve:
    def test_matches_grader(self, rng):
        truth = [pair(doc_id=f"d{i}", cosine=float(round(c, 2)), label=bool(rng.random() < 0.4))
                 for i, c in enumerate(rng.uniform(-1, 1, 150))]
        curve = threshold_curve(truth)
        for t, p, r in zip(curve.thresholds, curve.precision, curve.recall):
            row = metrics(confusion(grade_with_threshold(truth, t), truth))
            assert row.precision == pytest.approx(p) and row.recall == pytest.approx(r)

    def test_best_precision(self):
        truth = [pair(doc_id=f"d{i}", cosine=c, label=y)
                 for i, (c, y) in enumerate([(0.9, True), (0.8, False), (0.7, True), (0.1, False)])]
        curve = threshold_curve(truth)
        assert best_precision_at_recall(curve, 0.5, 0.01) == 1.0
        assert best_precision_at_recall(curve, 1.0, 0.01) == pytest.approx(2 / 3)
        assert best_precision_at_recall(curve, 0.2, 0.01) is None

    def test_needs_positive(self):
        with pytest.raises(DomainError):
            threshold_curve([pair(label=False)])
