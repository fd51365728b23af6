from __future__ import annotations

import threading

import pytest

from editloop.errors import DuplicateIdError, InvariantViolation, NotFoundError
from editloop.models import (
    EditRecord,
    EditType,
    EntityType,
    EvaluationSession,
    KnowledgeCategory,
    KnowledgeEntry,
    PaperRecord,
    Participant,
    ResearchQuestionArtifact,
    Scope,
    TaskStatus,
    TaskType,
    AgentTask,
)
from editloop.storage import StoreQuery

from .conftest import seed_world, ts
from .oracles import scope_sort


def make_edit(i, artifact_id, processed=False, minute=None) -> EditRecord:
    return EditRecord(
        id=f"edit-{i}",
        entity_type=EntityType.RESEARCH_QUESTION,
        entity_id=artifact_id,
        edit_type=EditType.DIRECT_EDIT,
        field_name="question",
        original_value=f"v{i}",
        new_value=f"v{i}x",
        created_at=ts(minute if minute is not None else i),
        processed=processed,
    )


def make_knowledge(store, i, scope=Scope.PROJECT, scope_id="proj", minute=None, by="p1"):
    artifact = store.list_kind("evaluation_research_questions")[0]
    return KnowledgeEntry(
        id=f"know-{i}",
        text=f"Insight number {i}.",
        category=KnowledgeCategory.METHODOLOGICAL_REFINEMENTS,
        scope=scope,
        scope_id=scope_id,
        source_question_ids=[artifact.id],
        created_by=by,
        created_at=ts(minute if minute is not None else i),
    )


class TestPutGet:
    def test_round_trip_equality(self, store):
        seed_world(store)
        entry = make_knowledge(store, 1)
        store.put(entry)
        assert store.get_knowledge("know-1") == entry

    def test_empty_title_rejected(self, store):
        with pytest.raises(InvariantViolation):
            store.put(PaperRecord(id="p", title="   ", created_at=ts(0)))

    def test_distance_invariant_gate(self, store):
        seed_world(store)
        artifact = store.get_artifact("p1-q1")
        artifact.current_question = "tampered"
        with pytest.raises(InvariantViolation):
            store.put(artifact)

    def test_immutable_kind_rejects_id_conflict(self, store):
        seed_world(store)
        edit = make_edit(1, "p1-q1")
        store.put(edit)
        with pytest.raises(DuplicateIdError):
            store.put(make_edit(1, "p1-q1"))

    def test_mutable_kind_upserts(self, store):
        seed_world(store)
        paper = store.get_paper("paper-1")
        paper.full_text = "updated text"
        store.put(paper)
        assert store.get_paper("paper-1").full_text == "updated text"

    def test_unresolvable_provenance_rejected(self, store):
        seed_world(store)
        entry = make_knowledge(store, 1)
        entry.source_question_ids = ["ghost"]
        with pytest.raises(InvariantViolation):
            store.put(entry)

    def test_put_many_atomic(self, store):
        seed_world(store)
        good = make_knowledge(store, 1)
        bad = make_knowledge(store, 2)
        bad.source_question_ids = []
        with pytest.raises(InvariantViolation):
            store.put_many([good, bad])
        assert store.get_knowledge("know-1") is None

    def test_read_your_writes_in_transaction(self, store):
        seed_world(store)
        with store.transaction():
            store.put(make_knowledge(store, 1))
            assert store.get_knowledge("know-1") is not None


class TestUnprocessedEdits:
    def test_fresh_project_empty(self, store):
        seed_world(store)
        assert store.query_unprocessed_edits("proj") == []

    def test_order_and_processed_filter(self, store):
        seed_world(store)
        edits = [make_edit(3, "p1-q1"), make_edit(1, "p1-q2"), make_edit(2, "p1-q3")]
        for e in edits:
            store.put(e)
        store.mark_processed(["edit-2"])

        # Shadow-log oracle: linear scan over what we inserted.
        expected = sorted(
            (e for e in edits if e.id != "edit-2"), key=lambda e: e.created_at
        )
        got = store.query_unprocessed_edits("proj")
        assert [e.id for e in got] == [e.id for e in expected]

    def test_unknown_project_is_empty(self, store):
        seed_world(store)
        assert store.query_unprocessed_edits("nope") == []

    def test_mark_processed_idempotent(self, store):
        seed_world(store)
        store.put(make_edit(1, "p1-q1"))
        store.mark_processed(["edit-1"])
        before = store.get_edit("edit-1")
        store.mark_processed(["edit-1"])
        assert store.get_edit("edit-1") == before

    def test_mark_processed_unknown_raises(self, store):
        seed_world(store)
        with pytest.raises(NotFoundError):
            store.mark_processed(["ghost"])


class TestKnowledgeByScope:
    def test_single_scope_creation_order(self, store):
        seed_world(store)
        store.put_many([make_knowledge(store, 1), make_knowledge(store, 2)])
        got = store.knowledge_by_scope("p1", "proj")
        assert [e.id for e in got] == ["know-1", "know-2"]

    def test_user_scope_precedes_despite_timestamps(self, store):
        seed_world(store)
        project_entries = [make_knowledge(store, i, minute=i) for i in range(1, 6)]
        user_entry = make_knowledge(
            store, 9, scope=Scope.USER, scope_id="p1", minute=30
        )
        store.put_many(project_entries + [user_entry])
        got = store.knowledge_by_scope("p1", "proj")
        assert got[0].id == "know-9"
        assert got == scope_sort(got)

    def test_other_users_entries_hidden(self, store):
        seed_world(store)
        store.put(make_knowledge(store, 1, scope=Scope.USER, scope_id="someone-else"))
        assert store.knowledge_by_scope("p1", "proj") == []

    def test_global_entries_visible_last(self, store):
        seed_world(store)
        store.put_many(
            [
                make_knowledge(store, 1, scope=Scope.GLOBAL, scope_id=None, minute=0),
                make_knowledge(store, 2, minute=1),
            ]
        )
        got = store.knowledge_by_scope("p1", "proj")
        assert [e.id for e in got] == ["know-2", "know-1"]


class TestConcurrentWrites:
    def test_no_lost_writes(self, store):
        seed_world(store)
        shadow: list[str] = []
        shadow_lock = threading.Lock()
        errors: list[Exception] = []

        def writer(worker: int):
            try:
                for i in range(125):
                    edit = make_edit(f"{worker}-{i}", "p1-q1", minute=i)
                    store.put(edit)
                    with shadow_lock:
                        shadow.append(edit.id)
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=writer, args=(w,)) for w in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        stored_ids = {e.id for e in store.list_kind("ai_entity_edits")}
        assert len(shadow) == 1000
        assert set(shadow) <= stored_ids
        assert len(stored_ids) == 1000


class TestTaskAtomics:
    def _task(self, i=1):
        return AgentTask(
            id=f"task-{i}",
            task_type=TaskType.FETCH_PAPER_CONTENT,
            input_data={"paper_id": "paper-1"},
            created_at=ts(i),
        )

    def test_cas_success_and_failure(self, store):
        store.put(self._task())
        claimed = store.cas_task("task-1", TaskStatus.QUEUED, TaskStatus.RUNNING, attempts_delta=1)
        assert claimed.status == TaskStatus.RUNNING and claimed.attempts == 1
        assert store.cas_task("task-1", TaskStatus.QUEUED, TaskStatus.RUNNING) is None
        history = store.get_task("task-1").status_history
        assert history[-1]["from"] == "queued" and history[-1]["to"] == "running"

    def test_two_claimers_one_winner(self, store):
        store.put(self._task())
        results = []

        def claim():
            results.append(
                store.cas_task("task-1", TaskStatus.QUEUED, TaskStatus.RUNNING, attempts_delta=1)
            )

        threads = [threading.Thread(target=claim) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sum(1 for r in results if r is not None) == 1

    def test_oldest_queued_first(self, store):
        store.put_many([self._task(2), self._task(1)])
        assert store.next_queued_task().id == "task-1"

    def test_task_log_sequencing(self, store):
        store.put(self._task())
        for i in range(5):
            store.append_task_log("task-1", __import__("editloop.models", fromlist=["LogType"]).LogType.INFO, f"m{i}")
        logs = store.task_logs("task-1")
        assert [l.sequence_no for l in logs] == [1, 2, 3, 4, 5]

    def test_log_unknown_task_rejected(self, store):
        from editloop.models import LogType

        with pytest.raises(NotFoundError):
            store.append_task_log("ghost", LogType.INFO, "hello")


class TestQueries:
    def test_find_with_query(self, store):
        seed_world(store)
        got = store.find(
            StoreQuery(kind="evaluation_research_questions", session_id="p1-s1", limit=2)
        )
        assert [a.position for a in got] == [1, 2]

    def test_no_query_returns_invalid_entity(self, store):
        seed_world(store)
        for artifact in store.list_kind("evaluation_research_questions"):
            assert artifact.validate() == []

    def test_artifact_project_resolution(self, store):
        seed_world(store)
        assert store.project_of_artifact("p1-q1") == "proj"
        assert store.project_of_artifact("ghost") is None
