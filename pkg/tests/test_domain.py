import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imobe import domain
from imobe.domain import (
    AssessmentItem,
    AssessmentKind,
    OutcomeLevel,
    OutcomeNode,
    Score,
    build_report,
    co_attainment,
    cohort_attainment,
    item_attainment,
    po_rollup,
    validate_hierarchy,
)
from imobe.errors import (
    EmptyCohort,
    MismatchedItem,
    NoMappedItems,
    UnknownOutcome,
    ValidationFailure,
)

from .oracle import brute_report

TOL = 1e-9


def node(nid, level, parents=()):
    return OutcomeNode(id=nid, level=level, parent_ids=tuple(parents))


def item(iid, weights, max_marks=10.0, course="C1"):
    return AssessmentItem(id=iid, course_id=course, kind=AssessmentKind.TEST,
                          max_marks=max_marks, co_weights=weights)


CHAIN = [
    node("u", OutcomeLevel.UNIT, ["l"]),
    node("l", OutcomeLevel.LESSON, ["c"]),
    node("c", OutcomeLevel.COURSE, ["e"]),
    node("e", OutcomeLevel.EXIT, ["p"]),
    node("p", OutcomeLevel.PROGRAM),
]


class TestValidateHierarchy:
    def test_empty_is_valid(self):
        assert validate_hierarchy([]).valid

    def test_level_skip(self):
        nodes = [
            node("co1", OutcomeLevel.COURSE, ["po1"]),
            node("po1", OutcomeLevel.PROGRAM),
        ]
        report = validate_hierarchy(nodes)
        assert len(report.violations) == 1
        assert "level skip CourseOutcome→ProgramOutcome" in report.violations[0]

    def test_five_node_chain(self):
        assert validate_hierarchy(CHAIN).valid

    def test_orphan(self):
        report = validate_hierarchy([node("c", OutcomeLevel.COURSE)])
        assert any("orphan" in v for v in report.violations)

    def test_dangling_parent(self):
        report = validate_hierarchy([node("c", OutcomeLevel.COURSE, ["ghost"])])
        assert any("dangling parent ghost" in v for v in report.violations)

    def test_cycle(self):
        nodes = [
            node("e1", OutcomeLevel.EXIT, ["p1"]),
            node("p1", OutcomeLevel.PROGRAM),
        ]
        # force a cycle by handcrafting mutual parents at adjacent levels
        bad = [
            node("c1", OutcomeLevel.COURSE, ["e1"]),
            OutcomeNode(id="e1", level=OutcomeLevel.EXIT, parent_ids=("p1",)),
            OutcomeNode(id="p1", level=OutcomeLevel.PROGRAM, parent_ids=()),
        ]
        assert validate_hierarchy(bad).valid
        cyc = [
            OutcomeNode(id="a", level=OutcomeLevel.COURSE, parent_ids=("b",)),
            OutcomeNode(id="b", level=OutcomeLevel.EXIT, parent_ids=("a", "p")),
            OutcomeNode(id="p", level=OutcomeLevel.PROGRAM, parent_ids=()),
        ]
        report = validate_hierarchy(cyc)
        assert any("cycle" in v or "level skip" in v for v in report.violations)


class TestItemAttainment:
    def test_zero(self):
        it = item("i1", {"c": 1.0}, max_marks=40)
        assert item_attainment(Score("s1", "i1", 0.0), it) == 0.0

    def test_full_marks(self):
        it = item("i1", {"c": 1.0}, max_marks=40)
        assert item_attainment(Score("s1", "i1", 40.0), it) == 1.0

    def test_partial(self):
        # oracle: 8 / 10 = 0.8 by hand
        it = item("i1", {"c": 1.0}, max_marks=10)
        assert item_attainment(Score("s1", "i1", 8.0), it) == pytest.approx(0.8, abs=TOL)

    def test_mismatch(self):
        it = item("i1", {"c": 1.0})
        with pytest.raises(MismatchedItem):
            item_attainment(Score("s1", "other", 5.0), it)


class TestCoAttainment:
    def test_single_item_identity(self):
        it = item("i1", {"c": 1.0})
        assert co_attainment([Score("s1", "i1", 7.0)], [it], "c") == pytest.approx(0.7, abs=TOL)

    def test_weighted_mean(self):
        # oracle: (3*1.0 + 1*0.5) / 4 = 0.875 by hand
        items = [item("i1", {"c": 3.0}), item("i2", {"c": 1.0})]
        scores = [Score("s1", "i1", 10.0), Score("s1", "i2", 5.0)]
        assert co_attainment(scores, items, "c") == pytest.approx(0.875, abs=TOL)

    def test_weight_scale_invariance(self):
        items = [item("i1", {"c": 3.0}), item("i2", {"c": 1.0})]
        scaled = [item("i1", {"c": 30.0}), item("i2", {"c": 10.0})]
        scores = [Score("s1", "i1", 10.0), Score("s1", "i2", 5.0)]
        assert co_attainment(scores, items, "c") == pytest.approx(
            co_attainment(scores, scaled, "c"), abs=1e-12)

    def test_missing_score_counts_as_zero(self):
        items = [item("i1", {"c": 1.0}), item("i2", {"c": 1.0})]
        scores = [Score("s1", "i1", 10.0)]
        assert co_attainment(scores, items, "c") == pytest.approx(0.5, abs=TOL)

    def test_no_mapped_items(self):
        with pytest.raises(NoMappedItems):
            co_attainment([Score("s1", "i1", 1.0)], [item("i1", {"c": 1.0})], "other")


class TestCohortAttainment:
    def test_singleton(self):
        it = item("i1", {"c": 1.0})
        out = cohort_attainment([Score("s1", "i1", 9.0)], [it], "c", 0.5)
        assert out == {"mean": pytest.approx(0.9, abs=TOL), "fraction_above_threshold": 1.0}

    def test_two_students(self):
        # oracle: students at 0.4 and 0.6 -> mean 0.5, fraction 0.5 by hand
        it = item("i1", {"c": 1.0})
        scores = [Score("s1", "i1", 4.0), Score("s2", "i1", 6.0)]
        out = cohort_attainment(scores, [it], "c", 0.5)
        assert out["mean"] == pytest.approx(0.5, abs=TOL)
        assert out["fraction_above_threshold"] == pytest.approx(0.5, abs=TOL)

    def test_identical_students(self):
        it = item("i1", {"c": 1.0})
        scores = [Score(f"s{i}", "i1", 7.0) for i in range(4)]
        out = cohort_attainment(scores, [it], "c", 0.5)
        assert out["mean"] == pytest.approx(0.7, abs=TOL)
        assert out["fraction_above_threshold"] in (0.0, 1.0)

    def test_empty(self):
        with pytest.raises(EmptyCohort):
            cohort_attainment([], [item("i1", {"c": 1.0})], "c", 0.5)


HIER = [
    node("co1", OutcomeLevel.COURSE, ["ex1"]),
    node("co2", OutcomeLevel.COURSE, ["ex1"]),
    node("co3", OutcomeLevel.COURSE, ["ex2"]),
    node("ex1", OutcomeLevel.EXIT, ["po1"]),
    node("ex2", OutcomeLevel.EXIT, ["po2"]),
    node("po1", OutcomeLevel.PROGRAM),
    node("po2", OutcomeLevel.PROGRAM),
]


class TestPoRollup:
    def test_single_path(self):
        out = po_rollup({"co1": 0.6}, HIER)
        assert out == {"po1": pytest.approx(0.6, abs=TOL)}

    def test_mean_of_two(self):
        # oracle: (0.2 + 0.8) / 2 = 0.5 by hand
        out = po_rollup({"co1": 0.2, "co2": 0.8}, HIER)
        assert out["po1"] == pytest.approx(0.5, abs=TOL)

    def test_unreached_po_absent(self):
        out = po_rollup({"co1": 0.3}, HIER)
        assert "po2" not in out

    def test_unknown_co(self):
        with pytest.raises(UnknownOutcome):
            po_rollup({"nope": 0.5}, HIER)


class TestBuildReport:
    def test_empty_scores(self):
        items = [item("i1", {"co1": 1.0})]
        with pytest.raises(EmptyCohort):
            build_report("C1", [], items, HIER, 0.5)

    def test_single_everything(self):
        items = [item("i1", {"co1": 1.0})]
        rep = build_report("C1", [Score("s1", "i1", 8.0)], items, HIER, 0.5)
        assert rep.per_student["s1"]["co1"] == pytest.approx(0.8, abs=TOL)
        assert rep.cohort["co1"]["mean"] == pytest.approx(0.8, abs=TOL)
        assert rep.po_rollup["po1"] == pytest.approx(0.8, abs=TOL)

    def test_bad_threshold(self):
        items = [item("i1", {"co1": 1.0})]
        with pytest.raises(ValidationFailure):
            build_report("C1", [Score("s1", "i1", 8.0)], items, HIER, 1.5)

    def test_three_by_two_fixture_matches_oracle(self):
        items = [item("i1", {"co1": 2.0, "co2": 1.0}), item("i2", {"co2": 3.0, "co3": 1.0})]
        scores = [
            Score("s1", "i1", 8.0), Score("s1", "i2", 5.0),
            Score("s2", "i1", 6.0), Score("s2", "i2", 9.0),
            Score("s3", "i1", 10.0), Score("s3", "i2", 2.0),
        ]
        rep = build_report("C1", scores, items, HIER, 0.5).to_dict()
        expected = brute_report(
            "C1", [s.to_dict() for s in scores], [i.to_dict() for i in items],
            [n.to_dict() for n in HIER], 0.5)
        assert_report_close(rep, expected)

    def test_permutation_invariance(self):
        items = [item("i1", {"co1": 2.0}), item("i2", {"co2": 3.0})]
        scores = [Score("s1", "i1", 8.0), Score("s2", "i2", 5.0), Score("s1", "i2", 3.0)]
        a = build_report("C1", scores, items, HIER, 0.5).to_dict()
        b = build_report("C1", list(reversed(scores)), items, HIER, 0.5).to_dict()
        assert a == b


def assert_report_close(got: dict, expected: dict, tol: float = TOL):
    assert got["course_id"] == expected["course_id"]
    assert got["per_student"].keys() == expected["per_student"].keys()
    for sid, cos in expected["per_student"].items():
        for co, v in cos.items():
            assert math.isclose(got["per_student"][sid][co], v, abs_tol=tol), (sid, co)
    assert got["cohort"].keys() == expected["cohort"].keys()
    for co, stats in expected["cohort"].items():
        assert math.isclose(got["cohort"][co]["mean"], stats["mean"], abs_tol=tol)
        assert math.isclose(got["cohort"][co]["fraction_above_threshold"],
                            stats["fraction_above_threshold"], abs_tol=tol)
    assert got["po_rollup"].keys() == expected["po_rollup"].keys()
    for po, v in expected["po_rollup"].items():
        assert math.isclose(got["po_rollup"][po], v, abs_tol=tol)


# --- randomized instances for property tests ---

@st.composite
def instances(draw):
    n_students = draw(st.integers(1, 5))
    n_items = draw(st.integers(1, 4))
    n_cos = draw(st.integers(1, 3))
    cos = [f"co{i}" for i in range(1, n_cos + 1)]
    items = []
    for i in range(n_items):
        weights = {}
        for co in cos:
            w = draw(st.one_of(st.just(0.0), st.floats(0.1, 5.0, allow_nan=False)))
            if w > 0:
                weights[co] = w
        if not weights:
            weights[draw(st.sampled_from(cos))] = 1.0
        max_marks = draw(st.floats(1.0, 100.0, allow_nan=False))
        items.append(AssessmentItem(id=f"i{i}", course_id="C1", kind=AssessmentKind.TEST,
                                    max_marks=max_marks, co_weights=weights))
    scores = []
    for s in range(n_students):
        for it in items:
            if draw(st.booleans()):
                raw = draw(st.floats(0.0, it.max_marks, allow_nan=False))
                scores.append(Score(f"s{s}", it.id, raw))
    if not scores:
        scores.append(Score("s0", items[0].id, items[0].max_marks / 2))
    threshold = draw(st.floats(0.05, 0.95, allow_nan=False))
    return items, scores, cos, threshold


def hier_for(cos):
    nodes = [node(co, OutcomeLevel.COURSE, ["ex1"]) for co in cos]
    nodes.append(node("ex1", OutcomeLevel.EXIT, ["po1"]))
    nodes.append(node("po1", OutcomeLevel.PROGRAM))
    return nodes


@settings(max_examples=200, deadline=None)
@given(instances())
def test_report_matches_brute_force_oracle(instance):
    items, scores, cos, threshold = instance
    hierarchy = hier_for(cos)
    rep = build_report("C1", scores, items, hierarchy, threshold).to_dict()
    expected = brute_report("C1", [s.to_dict() for s in scores],
                            [i.to_dict() for i in items],
                            [n.to_dict() for n in hierarchy], threshold)
    assert_report_close(rep, expected)


@settings(max_examples=200, deadline=None)
@given(instances())
def test_all_values_in_unit_interval(instance):
    items, scores, cos, threshold = instance
    rep = build_report("C1", scores, items, hier_for(cos), threshold)
    for cos_map in rep.per_student.values():
        for v in cos_map.values():
            assert 0.0 <= v <= 1.0
    for stats in rep.cohort.values():
        assert 0.0 <= stats["mean"] <= 1.0
        assert 0.0 <= stats["fraction_above_threshold"] <= 1.0
    for v in rep.po_rollup.values():
        assert 0.0 <= v <= 1.0


@settings(max_examples=200, deadline=None)
@given(instances(), st.data())
def test_weight_scale_invariance(instance, data):
    items, scores, cos, threshold = instance
    factor = data.draw(st.floats(0.01, 100.0, allow_nan=False))
    scaled = [
        AssessmentItem(id=i.id, course_id=i.course_id, kind=i.kind, max_marks=i.max_marks,
                       co_weights={k: v * factor for k, v in i.co_weights.items()})
        for i in items
    ]
    a = build_report("C1", scores, items, hier_for(cos), threshold).to_dict()
    b = build_report("C1", scores, scaled, hier_for(cos), threshold).to_dict()
    assert_report_close(a, b, tol=1e-12)


@settings(max_examples=200, deadline=None)
@given(instances(), st.data())
def test_monotone_in_any_single_raw_score(instance, data):
    items, scores, cos, threshold = instance
    idx = data.draw(st.integers(0, len(scores) - 1))
    target = scores[idx]
    max_marks = next(i.max_marks for i in items if i.id == target.item_id)
    bumped_raw = data.draw(st.floats(target.raw, max_marks, allow_nan=False))
    bumped = list(scores)
    bumped[idx] = Score(target.student_id, target.item_id, bumped_raw)

    before = build_report("C1", scores, items, hier_for(cos), threshold)
    after = build_report("C1", bumped, items, hier_for(cos), threshold)
    eps = 1e-12
    for sid, cos_map in before.per_student.items():
        for co, v in cos_map.items():
            assert after.per_student[sid][co] >= v - eps
    for co, stats in before.cohort.items():
        assert after.cohort[co]["mean"] >= stats["mean"] - eps
    for po, v in before.po_rollup.items():
        assert after.po_rollup[po] >= v - eps


@settings(max_examples=100, deadline=None)
@given(instances(), st.randoms())
def test_student_permutation_invariance(instance, rng):
    items, scores, cos, threshold = instance
    shuffled = list(scores)
    rng.shuffle(shuffled)
    a = build_report("C1", scores, items, hier_for(cos), threshold).to_dict()
    b = build_report("C1", shuffled, items, hier_for(cos), threshold).to_dict()
    assert a == b
