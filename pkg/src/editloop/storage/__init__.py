"""Persistence contract: the single source of truth for all modules.

Two backends ship: :class:`~editloop.storage.memory.MemoryStore` (tests,
replay) and :class:`~editloop.storage.sqlite.SqliteStore` (embedded,
persistent). Both enforce type invariants on write, serialize writers, and
never return an entity that violates its invariants. ``schema.sql``
documents the table inventory the SQLite backend realizes.
"""

from __future__ import annotations

import abc
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Iterable, Optional

from ..errors import DuplicateIdError, InvariantViolation, NotFoundError
from ..models import (
    SCOPE_RANK,
    AgentTask,
    ApiLogRecord,
    EditRecord,
    EvaluationSession,
    GenerationMetadata,
    KnowledgeEntry,
    PaperRecord,
    Participant,
    ResearchQuestionArtifact,
    Scope,
    TaskLogEntry,
    TaskStatus,
    UserInteraction,
)

# Kinds that may be re-put as full-record updates. Everything else is
# insert-only; EditRecord.processed additionally flips via mark_processed.
MUTABLE_KINDS = {
    "publication_raw",
    "evaluation_research_questions",
    "evaluation_participants",
    "evaluation_sessions",
    "agent_tasks",
}


@dataclass
class StoreQuery:
    """Declarative filter over one entity kind.

    Ordering is always (created_at ascending, id) — total and stable.
    """

    kind: str
    ids: Optional[list[str]] = None
    paper_id: Optional[str] = None
    session_id: Optional[str] = None
    entity_id: Optional[str] = None
    processed: Optional[bool] = None
    scope: Optional[Scope] = None
    status: Optional[str] = None
    limit: Optional[int] = None


def _sort_key(entity: Any):
    created = getattr(entity, "created_at", None)
    marker = created.isoformat() if isinstance(created, datetime) else ""
    return (marker, getattr(entity, "id", ""))


def matches(query: StoreQuery, entity: Any) -> bool:
    if query.ids is not None and getattr(entity, "id", None) not in query.ids:
        return False
    for attr, wanted in (
        ("paper_id", query.paper_id),
        ("session_id", query.session_id),
        ("entity_id", query.entity_id),
        ("processed", query.processed),
        ("scope", query.scope),
    ):
        if wanted is not None and getattr(entity, attr, None) != wanted:
            return False
    if query.status is not None:
        status = getattr(entity, "status", None)
        if getattr(status, "value", status) != query.status:
            return False
    return True


class Store(abc.ABC):
    """Uniform persistence interface; see module docstring for guarantees."""

    # -- write path -------------------------------------------------------

    @abc.abstractmethod
    def put(self, entity: Any) -> str:
        """Validate and persist one entity; returns its id.

        Immutable kinds reject id conflicts; mutable kinds upsert.
        """

    @abc.abstractmethod
    def put_many(self, entities: Iterable[Any]) -> list[str]:
        """Atomic batch put: either every entity lands or none do."""

    @abc.abstractmethod
    def transaction(self):
        """Context manager serializing a read-modify-write section."""

    # -- generic reads ----------------------------------------------------

    @abc.abstractmethod
    def get(self, kind: str, entity_id: str) -> Any | None:
        ...

    @abc.abstractmethod
    def list_kind(self, kind: str) -> list[Any]:
        ...

    def find(self, query: StoreQuery) -> list[Any]:
        rows = [e for e in self.list_kind(query.kind) if matches(query, e)]
        rows.sort(key=_sort_key)
        if query.limit is not None:
            rows = rows[: query.limit]
        return rows

    # -- typed conveniences -------------------------------------------------

    def get_paper(self, paper_id: str) -> PaperRecord | None:
        return self.get("publication_raw", paper_id)

    def get_artifact(self, artifact_id: str) -> ResearchQuestionArtifact | None:
        return self.get("evaluation_research_questions", artifact_id)

    def get_edit(self, edit_id: str) -> EditRecord | None:
        return self.get("ai_entity_edits", edit_id)

    def get_metadata(self, entity_id: str) -> GenerationMetadata | None:
        return self.get("ai_entity_metadata", entity_id)

    def get_knowledge(self, entry_id: str) -> KnowledgeEntry | None:
        return self.get("implicit_domain_knowledge", entry_id)

    def get_participant(self, participant_id: str) -> Participant | None:
        return self.get("evaluation_participants", participant_id)

    def get_session(self, session_id: str) -> EvaluationSession | None:
        return self.get("evaluation_sessions", session_id)

    def get_task(self, task_id: str) -> AgentTask | None:
        return self.get("agent_tasks", task_id)

    def papers(self) -> list[PaperRecord]:
        return self.find(StoreQuery(kind="publication_raw"))

    def artifacts_by_session(self, session_id: str) -> list[ResearchQuestionArtifact]:
        return self.find(
            StoreQuery(kind="evaluation_research_questions", session_id=session_id)
        )

    def artifacts_by_paper(self, paper_id: str) -> list[ResearchQuestionArtifact]:
        return self.find(StoreQuery(kind="evaluation_research_questions", paper_id=paper_id))

    def edits_for_entity(self, entity_id: str) -> list[EditRecord]:
        return self.find(StoreQuery(kind="ai_entity_edits", entity_id=entity_id))

    def participants_in_project(self, project_id: str) -> list[Participant]:
        rows = [
            p
            for p in self.list_kind("evaluation_participants")
            if p.project_id == project_id
        ]
        rows.sort(key=lambda p: (p.order_index, p.id))
        return rows

    def sessions_for_participant(self, participant_id: str) -> list[EvaluationSession]:
        rows = [
            s
            for s in self.list_kind("evaluation_sessions")
            if s.participant_id == participant_id
        ]
        rows.sort(key=lambda s: (s.started_at.isoformat(), s.id))
        return rows

    def project_of_session(self, session_id: str) -> str | None:
        session = self.get_session(session_id)
        if session is None:
            return None
        participant = self.get_participant(session.participant_id)
        return participant.project_id if participant else None

    def project_of_artifact(self, artifact_id: str) -> str | None:
        artifact = self.get_artifact(artifact_id)
        if artifact is None:
            return None
        return self.project_of_session(artifact.session_id)

    def artifacts_in_project(self, project_id: str) -> list[ResearchQuestionArtifact]:
        session_ids = {
            s.id
            for p in self.participants_in_project(project_id)
            for s in self.sessions_for_participant(p.id)
        }
        rows = [
            a
            for a in self.list_kind("evaluation_research_questions")
            if a.session_id in session_ids
        ]
        rows.sort(key=_sort_key)
        return rows

    # -- contract queries ---------------------------------------------------

    def query_unprocessed_edits(self, project_id: str) -> list[EditRecord]:
        """Unprocessed EditRecords in the project, created_at ascending."""
        artifact_ids = {a.id for a in self.artifacts_in_project(project_id)}
        rows = [
            e
            for e in self.list_kind("ai_entity_edits")
            if not e.processed and e.entity_id in artifact_ids
        ]
        rows.sort(key=_sort_key)
        return rows

    def knowledge_by_scope(self, participant_id: str, project_id: str) -> list[KnowledgeEntry]:
        """Entries visible to a participant: user first, project, then global."""
        rows = []
        for entry in self.list_kind("implicit_domain_knowledge"):
            if entry.scope == Scope.USER and entry.scope_id == participant_id:
                rows.append(entry)
            elif entry.scope == Scope.PROJECT and entry.scope_id == project_id:
                rows.append(entry)
            elif entry.scope == Scope.GLOBAL:
                rows.append(entry)
        rows.sort(key=lambda e: (SCOPE_RANK[e.scope], e.created_at.isoformat(), e.id))
        return rows

    def knowledge_for_project(self, project_id: str) -> list[KnowledgeEntry]:
        """Entries belonging to a project: project scope plus its users' scope."""
        participant_ids = {p.id for p in self.participants_in_project(project_id)}
        rows = [
            e
            for e in self.list_kind("implicit_domain_knowledge")
            if (e.scope == Scope.PROJECT and e.scope_id == project_id)
            or (e.scope == Scope.USER and e.scope_id in participant_ids)
        ]
        rows.sort(key=_sort_key)
        return rows

    # -- atomic operations ----------------------------------------------------

    @abc.abstractmethod
    def mark_processed(self, edit_ids: Iterable[str]) -> None:
        """Flip processed false->true; idempotent; unknown ids raise."""

    @abc.abstractmethod
    def set_artifact_knowledge_processed(
        self, artifact_id: str, expected: bool, value: bool
    ) -> bool:
        """Compare-and-set the knowledge_processed flag; returns success."""

    @abc.abstractmethod
    def cas_task(
        self,
        task_id: str,
        expect_status: TaskStatus,
        to_status: TaskStatus,
        *,
        attempts_delta: int = 0,
        output_data: dict | None = None,
        error_message: str | None = None,
        lease_expires_at: datetime | None = None,
        at: datetime | None = None,
    ) -> AgentTask | None:
        """Atomic status transition; records it in status_history."""

    @abc.abstractmethod
    def append_task_log(
        self,
        task_id: str,
        log_type,
        message: str,
        created_at: datetime | None = None,
    ) -> TaskLogEntry:
        """Append a log entry with the next gapless sequence_no."""

    @abc.abstractmethod
    def append_task_action(
        self,
        task_id: str,
        action_type: str,
        *,
        attempts: int = 1,
        error_message: str | None = None,
    ) -> None:
        """Record one workflow-node execution for step-level tracking."""

    @abc.abstractmethod
    def append_trace(self, trace: dict) -> None:
        """Append one LLM trace snapshot (append-only)."""

    @abc.abstractmethod
    def traces(self) -> list[dict]:
        ...

    def tasks(self, status: TaskStatus | None = None) -> list[AgentTask]:
        return self.find(
            StoreQuery(kind="agent_tasks", status=status.value if status else None)
        )

    def next_queued_task(self) -> AgentTask | None:
        queued = self.tasks(TaskStatus.QUEUED)
        return queued[0] if queued else None

    def task_logs(self, task_id: str) -> list[TaskLogEntry]:
        rows = [l for l in self.list_kind("project_agent_log") if l.task_id == task_id]
        rows.sort(key=lambda l: l.sequence_no)
        return rows

    # -- shared validation --------------------------------------------------

    def _validate_for_put(self, entity: Any) -> str:
        from ..models import ENTITY_KINDS

        kind = ENTITY_KINDS.get(type(entity))
        if kind is None:
            raise InvariantViolation([f"unknown entity type {type(entity).__name__}"])
        violations = entity.validate()
        if kind == "implicit_domain_knowledge":
            violations = validate_entry_with_provenance(self, entity)
        if violations:
            raise InvariantViolation(violations)
        return kind


def validate_entry_with_provenance(store: Store, entry: KnowledgeEntry) -> list[str]:
    from ..models import validate_knowledge_entry

    return validate_knowledge_entry(
        entry, artifact_exists=lambda qid: store.get_artifact(qid) is not None
    )
