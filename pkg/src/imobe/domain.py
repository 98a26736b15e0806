"""Curriculum model and attainment computations.

Outcome hierarchy (unit -> lesson -> course -> exit -> program), assessment
items with per-course-outcome weights, raw scores, and the report that rolls
student marks up to course- and program-outcome attainment values in [0, 1].

All functions are pure over immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import (
    EmptyCohort,
    MismatchedItem,
    NoMappedItems,
    UnknownOutcome,
    ValidationFailure,
)


class OutcomeLevel(str, Enum):
    UNIT = "UnitOutcome"
    LESSON = "LessonOutcome"
    COURSE = "CourseOutcome"
    EXIT = "ExitOutcome"
    PROGRAM = "ProgramOutcome"


# index position == hierarchy depth; parents sit exactly one step later
LEVEL_ORDER = [
    OutcomeLevel.UNIT,
    OutcomeLevel.LESSON,
    OutcomeLevel.COURSE,
    OutcomeLevel.EXIT,
    OutcomeLevel.PROGRAM,
]


class AssessmentKind(str, Enum):
    TEST = "Test"
    ASSIGNMENT = "Assignment"
    PRESENTATION = "Presentation"
    PROJECT = "Project"


@dataclass(frozen=True)
class OutcomeNode:
    id: str
    level: OutcomeLevel
    description: str = ""
    parent_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "level": self.level.value,
            "description": self.description,
            "parent_ids": list(self.parent_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeNode":
        return cls(
            id=d["id"],
            level=OutcomeLevel(d["level"]),
            description=d.get("description", ""),
            parent_ids=tuple(d.get("parent_ids", [])),
        )


@dataclass(frozen=True)
class AssessmentItem:
    id: str
    course_id: str
    kind: AssessmentKind
    max_marks: float
    co_weights: dict  # CourseOutcome id -> non-negative weight

    def __post_init__(self):
        if self.max_marks <= 0:
            raise ValidationFailure(f"item {self.id}: max_marks must be > 0")
        if any(w < 0 for w in self.co_weights.values()):
            raise ValidationFailure(f"item {self.id}: negative co_weight")
        if not any(w > 0 for w in self.co_weights.values()):
            raise ValidationFailure(f"item {self.id}: needs at least one positive co_weight")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "course_id": self.course_id,
            "kind": self.kind.value,
            "max_marks": self.max_marks,
            "co_weights": dict(self.co_weights),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AssessmentItem":
        return cls(
            id=d["id"],
            course_id=d["course_id"],
            kind=AssessmentKind(d["kind"]),
            max_marks=float(d["max_marks"]),
            co_weights={k: float(v) for k, v in d["co_weights"].items()},
        )


@dataclass(frozen=True)
class Score:
    student_id: str
    item_id: str
    raw: float

    def to_dict(self) -> dict:
        return {"student_id": self.student_id, "item_id": self.item_id, "raw": self.raw}

    @classmethod
    def from_dict(cls, d: dict) -> "Score":
        return cls(student_id=d["student_id"], item_id=d["item_id"], raw=float(d["raw"]))


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations


@dataclass
class AttainmentReport:
    course_id: str
    threshold: float
    per_student: dict  # student_id -> {co_id: attainment}
    cohort: dict       # co_id -> {"mean": x, "fraction_above_threshold": y}
    po_rollup: dict    # po_id -> attainment

    def to_dict(self) -> dict:
        # canonical key ordering so equal reports serialize identically
        return {
            "course_id": self.course_id,
            "threshold": self.threshold,
            "per_student": {
                s: {c: self.per_student[s][c] for c in sorted(self.per_student[s])}
                for s in sorted(self.per_student)
            },
            "cohort": {
                c: {
                    "mean": self.cohort[c]["mean"],
                    "fraction_above_threshold": self.cohort[c]["fraction_above_threshold"],
                }
                for c in sorted(self.cohort)
            },
            "po_rollup": {p: self.po_rollup[p] for p in sorted(self.po_rollup)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttainmentReport":
        return cls(
            course_id=d["course_id"],
            threshold=d["threshold"],
            per_student=d["per_student"],
            cohort=d["cohort"],
            po_rollup=d["po_rollup"],
        )


def validate_hierarchy(nodes: list[OutcomeNode]) -> ValidationReport:
    """Check level adjacency, acyclicity, orphan and dangling-parent rules.

    Violations are returned as data; a valid hierarchy yields an empty report.
    """
    report = ValidationReport()
    by_id = {}
    for node in nodes:
        if node.id in by_id:
            report.violations.append(f"duplicate id {node.id}")
        by_id[node.id] = node

    depth = {lvl: i for i, lvl in enumerate(LEVEL_ORDER)}
    for node in nodes:
        if node.level is not OutcomeLevel.PROGRAM and not node.parent_ids:
            report.violations.append(f"orphan {node.id}: non-Program node without parent")
        for pid in node.parent_ids:
            parent = by_id.get(pid)
            if parent is None:
                report.violations.append(f"dangling parent {pid} on {node.id}")
                continue
            if depth[parent.level] != depth[node.level] + 1:
                report.violations.append(
                    f"level skip {node.level.value}→{parent.level.value} on {node.id}"
                )

    # cycle check via DFS over parent edges
    WHITE, GREY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in by_id}

    def visit(nid):
        color[nid] = GREY
        for pid in by_id[nid].parent_ids:
            if pid not in by_id:
                continue
            if color[pid] == GREY:
                report.violations.append(f"cycle through {pid}")
            elif color[pid] == WHITE:
                visit(pid)
        color[nid] = BLACK

    for nid in by_id:
        if color[nid] == WHITE:
            visit(nid)
    return report


def item_attainment(score: Score, item: AssessmentItem) -> float:
    """Fraction of the item's marks earned, in [0, 1]."""
    if score.item_id != item.id:
        raise MismatchedItem(f"score is for {score.item_id}, item is {item.id}")
    if not 0 <= score.raw <= item.max_marks:
        raise ValidationFailure(
            f"raw {score.raw} outside [0, {item.max_marks}] for item {item.id}"
        )
    return score.raw / item.max_marks


def co_attainment(student_scores: list[Score], items: list[AssessmentItem], co: str) -> float:
    """Weighted mean of item fractions over items mapping this course outcome.

    An item the student has no score for contributes a fraction of 0: missing
    submissions lower attainment rather than vanishing from it.
    """
    by_item = {s.item_id: s for s in student_scores}
    num = 0.0
    den = 0.0
    # fixed summation order so results are independent of input ordering
    for item in sorted(items, key=lambda i: i.id):
        w = item.co_weights.get(co, 0.0)
        if w <= 0:
            continue
        score = by_item.get(item.id)
        frac = item_attainment(score, item) if score is not None else 0.0
        num += w * frac
        den += w
    if den == 0:
        raise NoMappedItems(f"no item weights course outcome {co}")
    return num / den


def cohort_attainment(
    all_scores: list[Score], items: list[AssessmentItem], co: str, threshold: float
) -> dict:
    """Cohort mean and the exact fraction of students at or above the threshold."""
    students = sorted({s.student_id for s in all_scores})
    if not students:
        raise EmptyCohort("no student has any score")
    values = []
    for sid in students:
        mine = [s for s in all_scores if s.student_id == sid]
        values.append(co_attainment(mine, items, co))
    above = sum(1 for v in values if v >= threshold)
    return {
        "mean": sum(values) / len(values),
        "fraction_above_threshold": above / len(values),
    }


def po_rollup(co_values: dict, hierarchy: list[OutcomeNode]) -> dict:
    """Roll course-outcome values up to program outcomes through exit outcomes.

    Each program outcome gets the unweighted mean of the measured course
    outcomes that reach it; unreached program outcomes are absent.
    """
    by_id = {n.id: n for n in hierarchy}
    contributions: dict[str, list[float]] = {}
    for co_id in sorted(co_values):
        value = co_values[co_id]
        node = by_id.get(co_id)
        if node is None or node.level is not OutcomeLevel.COURSE:
            raise UnknownOutcome(f"{co_id} is not a known course outcome")
        reached = set()
        for exit_id in node.parent_ids:
            exit_node = by_id.get(exit_id)
            if exit_node is None or exit_node.level is not OutcomeLevel.EXIT:
                continue
            for po_id in exit_node.parent_ids:
                po_node = by_id.get(po_id)
                if po_node is not None and po_node.level is OutcomeLevel.PROGRAM:
                    reached.add(po_id)
        for po_id in reached:
            contributions.setdefault(po_id, []).append(value)
    return {po: sum(vals) / len(vals) for po, vals in contributions.items()}


def build_report(
    course_id: str,
    all_scores: list[Score],
    items: list[AssessmentItem],
    hierarchy: list[OutcomeNode],
    threshold: float = 0.5,
    student_id: Optional[str] = None,
) -> AttainmentReport:
    """Compose the full attainment report for one course.

    With ``student_id`` set, per_student is restricted to that student; cohort
    statistics still cover everyone with a score (the cohort is context).
    """
    if not 0 < threshold < 1:
        raise ValidationFailure(f"threshold {threshold} outside (0,1)")
    validation = validate_hierarchy(hierarchy)
    if not validation.valid:
        raise ValidationFailure("; ".join(validation.violations))

    course_items = [i for i in items if i.course_id == course_id]
    if not course_items:
        raise ValidationFailure(f"no assessment items for course {course_id}")
    item_ids = {i.id for i in course_items}
    scores = [s for s in all_scores if s.item_id in item_ids]
    students = sorted({s.student_id for s in scores})
    if not students:
        raise EmptyCohort(f"no scores recorded for course {course_id}")

    cos = sorted({co for i in course_items for co, w in i.co_weights.items() if w > 0})

    per_student = {}
    for sid in students:
        mine = [s for s in scores if s.student_id == sid]
        per_student[sid] = {co: co_attainment(mine, course_items, co) for co in cos}

    cohort = {co: cohort_attainment(scores, course_items, co, threshold) for co in cos}
    rollup = po_rollup({co: cohort[co]["mean"] for co in cos}, hierarchy)

    if student_id is not None:
        per_student = {student_id: per_student.get(student_id, {})}

    return AttainmentReport(
        course_id=course_id,
        threshold=threshold,
        per_student=per_student,
        cohort=cohort,
        po_rollup=rollup,
    )
