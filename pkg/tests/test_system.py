import pytest

from imobe import domain
from imobe.errors import (
    EmptyCohort,
    ImobeError,
    InvalidCredentials,
    ScopeForbidden,
    ValidationFailure,
)
from imobe.protocol import MessageKind, Phase, canonical_trace
from imobe.runtime import Credentials

from .conftest import demo_fixture, demo_scores_csv


class TestSeed:
    def test_demo_counts(self, make_system):
        system = make_system(seed=False)
        counts = system.seed(demo_fixture())
        assert counts == {"outcomes": 9, "items": 4, "users": 5}

    def test_idempotent_reseed(self, make_system):
        system = make_system(seed=False)
        system.seed(demo_fixture())
        counts = system.seed(demo_fixture())
        assert counts == {"outcomes": 9, "items": 4, "users": 5}
        assert system.store.version_of("outcome/CO1") == 2

    def test_empty_fixture(self, make_system):
        system = make_system(seed=False)
        assert system.seed({}) == {"outcomes": 0, "items": 0, "users": 0}

    def test_invalid_item(self, make_system):
        system = make_system(seed=False)
        bad = {"items": [{"id": "x", "course_id": "C", "kind": "Test",
                          "max_marks": 0, "co_weights": {"co": 1}}]}
        with pytest.raises(ValidationFailure):
            system.seed(bad)


class TestImportScores:
    def test_valid_rows(self, make_system):
        system = make_system(scores=False)
        session = system.login("prof.amin", "amin-pw")
        before = system.audit.count("StoreWrite")
        out = system.import_scores_csv(session.credentials, demo_scores_csv())
        assert out == {"accepted": 12, "rejected": []}
        assert system.audit.count("StoreWrite") - before == 12

    def test_row_over_max_rejected_with_line(self, make_system):
        system = make_system(scores=False)
        session = system.login("prof.amin", "amin-pw")
        csv = ("course_id,item_id,student_id,raw_score\n"
               "C101,quiz1,stu.bella,8\n"
               "C101,quiz1,stu.chen,11\n")
        out = system.import_scores_csv(session.credentials, csv)
        assert out["accepted"] == 1
        assert out["rejected"] == [{"line": 3, "reason": "ValidationFailure",
                                    "detail": out["rejected"][0]["detail"]}]

    def test_missing_header(self, make_system):
        system = make_system(scores=False)
        session = system.login("prof.amin", "amin-pw")
        with pytest.raises(ValidationFailure):
            system.import_scores_csv(session.credentials, "a,b\n1,2\n")


class TestWorkflow:
    def test_canonical_trace(self, seeded_system):
        session = seeded_system.login("prof.amin", "amin-pw")
        corr, _ = seeded_system.submit_assessment(session, "C101",
                                                  {"type": "CourseReport"})
        assert seeded_system.trace_steps(corr) == canonical_trace()
        assert seeded_system.workflows[corr].phase is Phase.PRESENTED

    def test_agent_path_equals_library_path(self, seeded_system):
        session = seeded_system.login("prof.amin", "amin-pw")
        _, payload = seeded_system.submit_assessment(session, "C101",
                                                     {"type": "CourseReport"})
        fix = demo_fixture()
        scores = []
        for line in demo_scores_csv().strip().splitlines()[1:]:
            _, item_id, student_id, raw = line.split(",")
            scores.append(domain.Score(student_id, item_id, float(raw)))
        direct = domain.build_report(
            "C101", scores,
            [domain.AssessmentItem.from_dict(i) for i in fix["items"]],
            [domain.OutcomeNode.from_dict(n) for n in fix["hierarchy"]],
            0.5).to_dict()
        assert payload == direct

    def test_student_own_result(self, seeded_system):
        session = seeded_system.login("stu.bella", "bella-pw")
        corr, payload = seeded_system.submit_assessment(
            session, "C101", {"type": "StudentResult", "student_id": "stu.bella"})
        assert list(payload["per_student"]) == ["stu.bella"]
        # student path is longer than the canonical trace but must stay sound
        steps = seeded_system.trace_steps(corr)
        assert steps[0] == ("client", "UIA", MessageKind.ASSESS_REQUEST)
        assert steps[-1] == ("UIA", "client", MessageKind.PRESENT)
        assert all(s[0] != "client" or s[1] == "UIA" for s in steps)

    def test_student_course_report_forbidden(self, seeded_system):
        session = seeded_system.login("stu.bella", "bella-pw")
        with pytest.raises(ScopeForbidden):
            seeded_system.submit_assessment(session, "C101", {"type": "CourseReport"})

    def test_student_other_result_forbidden(self, seeded_system):
        session = seeded_system.login("stu.bella", "bella-pw")
        with pytest.raises(ScopeForbidden):
            seeded_system.submit_assessment(
                session, "C101", {"type": "StudentResult", "student_id": "stu.chen"})

    def test_empty_course_fails_workflow(self, make_system):
        system = make_system(scores=False)
        session = system.login("prof.amin", "amin-pw")
        with pytest.raises(EmptyCohort):
            system.submit_assessment(session, "C101", {"type": "CourseReport"})
        failed = [w for w in system.workflows.values() if w.phase is Phase.FAILED]
        assert len(failed) == 1

    def test_failed_workflow_one_error_to_client_nothing_to_store(self, make_system):
        system = make_system(scores=False)
        session = system.login("stu.bella", "bella-pw")
        with pytest.raises(ScopeForbidden):
            system.submit_assessment(session, "C101", {"type": "CourseReport"})
        corr = [c for c in system.workflows][0]
        trace = system.trace_of(corr)
        errors_to_client = [e for e in trace if e.kind is MessageKind.ERROR
                            and e.to.startswith("client/")]
        store_bound = [e for e in trace if e.to == "store"]
        assert len(errors_to_client) <= 1  # the drain consumed it; check phase too
        assert store_bound == []
        assert system.workflows[corr].phase is Phase.FAILED

    def test_forged_token_rejected(self, seeded_system):
        session = seeded_system.login("prof.amin", "amin-pw")
        forged = Credentials(session.credentials.principal, "f" * 64,
                             session.credentials.issued_at)
        object.__setattr__(session, "credentials", forged)
        before = seeded_system.audit.count("AuthFailure")
        with pytest.raises(ImobeError):
            seeded_system.submit_assessment(session, "C101", {"type": "CourseReport"})
        assert seeded_system.audit.count("AuthFailure") == before + 1

    def test_store_failure_fails_workflow(self, seeded_system, monkeypatch):
        def boom(*a, **k):
            raise OSError("disk gone")
        monkeypatch.setattr(seeded_system.store, "query", boom)
        session = seeded_system.login("prof.amin", "amin-pw")
        with pytest.raises(ImobeError):
            seeded_system.submit_assessment(session, "C101", {"type": "CourseReport"})

    def test_determinism_across_runs(self, make_system, tmp_path):
        def run(path):
            from imobe.config import Config
            from imobe.system import System
            from imobe.util import ManualClock
            system = System(Config(store_path=str(path)), clock=ManualClock(5000),
                            deterministic=True)
            system.seed(demo_fixture())
            session = system.login("prof.amin", "amin-pw")
            system.import_scores_csv(session.credentials, demo_scores_csv())
            corr, payload = system.submit_assessment(session, "C101",
                                                     {"type": "CourseReport"})
            return system.trace_steps(corr), payload

        steps1, payload1 = run(tmp_path / "a.ndjson")
        steps2, payload2 = run(tmp_path / "b.ndjson")
        assert steps1 == steps2
        assert payload1 == payload2


class TestAuditCompleteness:
    def test_store_write_count_matches_puts(self, seeded_system):
        # 9 outcomes + 4 items + 5 users + 12 scores
        assert seeded_system.audit.count("StoreWrite") == 30

    def test_audit_envelopes_mirrored_to_saa(self, seeded_system):
        audits = [e for e in seeded_system.runtime.trace
                  if e.kind is MessageKind.AUDIT_EVENT]
        assert len(audits) == 30
        assert all(e.sender == "store" and e.to == "SAA" for e in audits)


class TestSessions:
    def test_login_wrong_secret_audited(self, seeded_system):
        before = seeded_system.audit.count("AuthFailure")
        with pytest.raises(InvalidCredentials):
            seeded_system.login("prof.amin", "wrong")
        assert seeded_system.audit.count("AuthFailure") == before + 1

    def test_session_expiry(self, seeded_system, clock):
        session = seeded_system.login("prof.amin", "amin-pw")
        clock.advance(3600 * 1000 + 1)
        assert seeded_system.session_by_token(session.credentials.token) is None

    def test_close_session_removes_container(self, seeded_system):
        session = seeded_system.login("prof.amin", "amin-pw")
        assert session.container_id in seeded_system.runtime.containers
        seeded_system.close_session(session)
        assert session.container_id not in seeded_system.runtime.containers
