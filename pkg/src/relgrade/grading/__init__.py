"""Relevance graders and the verdict/gold-label file formats."""

from relgrade.grading.gold import GoldLabel, GoldReport, attach_gold, load_gold_labels, read_gold, write_gold
from relgrade.grading.judge import (
    DEFAULT_SYSTEM_PROMPT,
    JudgeClient,
    JudgeConfig,
    build_request,
    grade_with_judge,
    parse_verdict,
)
from relgrade.grading.local import grade_with_head, grade_with_threshold
from relgrade.grading.verdicts import GraderVerdict, read_verdicts, write_verdicts

__all__ = [
    "DEFAULT_SYSTEM_PROMPT",
    "GoldLabel",
    "GoldReport",
    "GraderVerdict",
    "JudgeClient",
    "JudgeConfig",
    "attach_gold",
    "build_request",
    "grade_with_head",
    "grade_with_judge",
    "grade_with_threshold",
    "load_gold_labels",
    "parse_verdict",
    "read_gold",
    "read_verdicts",
    "write_gold",
    "write_verdicts",
]
