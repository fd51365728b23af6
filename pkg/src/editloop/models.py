"""Core domain entities, their invariants, and edit-history replay.

Every type carries ``validate()`` returning a list of violated rules (empty
means the entity is well-formed) plus ``to_dict``/``from_dict`` giving the
canonical JSON shape: snake_case fields, RFC 3339 timestamps, lowercase
enumeration strings.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Iterable, Optional

from .distances import edit_distance
from .errors import LedgerCorruptionError
from .serde import new_id, parse_rfc3339, rfc3339, utcnow


class EntityType(str, Enum):
    RESEARCH_QUESTION = "research_question"
    CONTRIBUTION = "contribution"
    TITLE = "title"
    OTHER = "other"


class EditType(str, Enum):
    DIRECT_EDIT = "direct_edit"
    PROMPT_REGENERATION = "prompt_regeneration"
    CONTEXT_GENERATION = "context_generation"
    DELETE = "delete"
    RATING = "rating"


class KnowledgeCategory(str, Enum):
    DOMAIN_TERMINOLOGY_EVOLUTION = "domain_terminology_evolution"
    METHODOLOGICAL_REFINEMENTS = "methodological_refinements"
    CONCEPTUAL_DEPTH_CHANGES = "conceptual_depth_changes"


CATEGORY_VALUES = tuple(c.value for c in KnowledgeCategory)


class Scope(str, Enum):
    USER = "user"
    PROJECT = "project"
    GLOBAL = "global"


SCOPE_RANK = {Scope.USER: 0, Scope.PROJECT: 1, Scope.GLOBAL: 2}


class TaskType(str, Enum):
    FETCH_PAPER_CONTENT = "fetch_paper_content"
    GENERATE_EVALUATION_QUESTIONS = "generate_evaluation_questions"
    EXTRACT_IMPLICIT_KNOWLEDGE = "extract_implicit_knowledge"


class TaskStatus(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


class LogType(str, Enum):
    INFO = "info"
    WARN = "warn"
    ERROR = "error"
    NODE_ENTER = "node_enter"
    NODE_EXIT = "node_exit"


class ParticipantStatus(str, Enum):
    PENDING = "pending"
    ACTIVE = "active"
    DONE = "done"


# Field names an EditRecord may target on a question artifact.
EDITABLE_TEXT_FIELDS = ("question", "contribution")
EDIT_FIELD_NAMES = EDITABLE_TEXT_FIELDS + ("quality_rating", "deleted")

# Knowledge entry texts are kept prompt-sized: at most two sentences
# (approximated by terminal punctuation) and a hard character bound.
KNOWLEDGE_TEXT_MAX_SENTENCES = 2
KNOWLEDGE_TEXT_MAX_CHARS = 400


def _ts(value: datetime | None) -> datetime:
    return value if value is not None else utcnow()


@dataclass
class PaperRecord:
    id: str
    title: str
    authors: str = ""
    abstract: str = ""
    full_text: str = ""
    source_url: Optional[str] = None
    created_at: datetime = field(default_factory=utcnow)

    def validate(self) -> list[str]:
        violations = []
        if not self.title.strip():
            violations.append("title must be non-empty")
        return violations

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "authors": self.authors,
            "abstract": self.abstract,
            "full_text": self.full_text,
            "source_url": self.source_url,
            "created_at": rfc3339(self.created_at),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PaperRecord":
        return cls(
            id=data["id"],
            title=data["title"],
            authors=data.get("authors", ""),
            abstract=data.get("abstract", ""),
            full_text=data.get("full_text", ""),
            source_url=data.get("source_url"),
            created_at=parse_rfc3339(data["created_at"]),
        )


@dataclass
class ResearchQuestionArtifact:
    """The bidirectional artifact unit: immutable initial state + live state.

    ``initial_question``/``initial_contribution`` never change after
    creation; the four distance fields always equal the edit distance
    between initial and current values at the stated granularity.
    """

    id: str
    paper_id: str
    session_id: str
    position: int
    initial_question: str
    current_question: str
    initial_contribution: str
    current_contribution: str
    quality_rating: Optional[int] = None
    deleted: bool = False
    dist_q_chars: int = 0
    dist_q_words: int = 0
    dist_c_chars: int = 0
    dist_c_words: int = 0
    knowledge_processed: bool = False
    created_at: datetime = field(default_factory=utcnow)

    @classmethod
    def fresh(
        cls,
        *,
        id: str,
        paper_id: str,
        session_id: str,
        position: int,
        question: str,
        contribution: str,
        created_at: datetime | None = None,
    ) -> "ResearchQuestionArtifact":
        """A newly generated artifact: current equals initial, distances zero."""
        return cls(
            id=id,
            paper_id=paper_id,
            session_id=session_id,
            position=position,
            initial_question=question,
            current_question=question,
            initial_contribution=contribution,
            current_contribution=contribution,
            created_at=_ts(created_at),
        )

    def recompute_distances(self) -> None:
        self.dist_q_chars = edit_distance(self.initial_question, self.current_question, "chars")
        self.dist_q_words = edit_distance(self.initial_question, self.current_question, "words")
        self.dist_c_chars = edit_distance(
            self.initial_contribution, self.current_contribution, "chars"
        )
        self.dist_c_words = edit_distance(
            self.initial_contribution, self.current_contribution, "words"
        )

    def has_changes(self) -> bool:
        return bool(
            self.dist_q_chars or self.dist_q_words or self.dist_c_chars or self.dist_c_words
        )

    def validate(self) -> list[str]:
        violations = []
        # Positions 1..3 for a standard generation; "generate more" may extend.
        if self.position < 1:
            violations.append("position must be >= 1")
        if self.quality_rating is not None and self.quality_rating not in (1, 2, 3, 4, 5):
            violations.append("quality_rating must be in 1..5 when present")
        expected = (
            edit_distance(self.initial_question, self.current_question, "chars"),
            edit_distance(self.initial_question, self.current_question, "words"),
            edit_distance(self.initial_contribution, self.current_contribution, "chars"),
            edit_distance(self.initial_contribution, self.current_contribution, "words"),
        )
        actual = (self.dist_q_chars, self.dist_q_words, self.dist_c_chars, self.dist_c_words)
        if expected != actual:
            violations.append(
                f"distance fields {actual} do not match recomputed values {expected}"
            )
        return violations

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "paper_id": self.paper_id,
            "session_id": self.session_id,
            "position": self.position,
            "initial_question": self.initial_question,
            "current_question": self.current_question,
            "initial_contribution": self.initial_contribution,
            "current_contribution": self.current_contribution,
            "quality_rating": self.quality_rating,
            "deleted": self.deleted,
            "dist_q_chars": self.dist_q_chars,
            "dist_q_words": self.dist_q_words,
            "dist_c_chars": self.dist_c_chars,
            "dist_c_words": self.dist_c_words,
            "knowledge_processed": self.knowledge_processed,
            "created_at": rfc3339(self.created_at),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ResearchQuestionArtifact":
        return cls(
            id=data["id"],
            paper_id=data["paper_id"],
            session_id=data["session_id"],
            position=data["position"],
            initial_question=data["initial_question"],
            current_question=data["current_question"],
            initial_contribution=data["initial_contribution"],
            current_contribution=data["current_contribution"],
            quality_rating=data.get("quality_rating"),
            deleted=data.get("deleted", False),
            dist_q_chars=data.get("dist_q_chars", 0),
            dist_q_words=data.get("dist_q_words", 0),
            dist_c_chars=data.get("dist_c_chars", 0),
            dist_c_words=data.get("dist_c_words", 0),
            knowledge_processed=data.get("knowledge_processed", False),
            created_at=parse_rfc3339(data["created_at"]),
        )


@dataclass
class EditRecord:
    """One user modification. Immutable except for the processed flag."""

    id: str
    entity_type: EntityType
    entity_id: str
    edit_type: EditType
    field_name: str
    original_value: str
    new_value: str
    user_prompt: Optional[str] = None
    created_at: datetime = field(default_factory=utcnow)
    processed: bool = False

    def validate(self) -> list[str]:
        violations = []
        if self.edit_type == EditType.PROMPT_REGENERATION:
            if self.user_prompt is None:
                violations.append("user_prompt required for prompt_regeneration edits")
        elif self.user_prompt is not None:
            violations.append("user_prompt only allowed on prompt_regeneration edits")
        if self.field_name not in EDIT_FIELD_NAMES:
            violations.append(f"field_name {self.field_name!r} outside known fields")
        return violations

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "entity_type": self.entity_type.value,
            "entity_id": self.entity_id,
            "edit_type": self.edit_type.value,
            "field_name": self.field_name,
            "original_value": self.original_value,
            "new_value": self.new_value,
            "user_prompt": self.user_prompt,
            "created_at": rfc3339(self.created_at),
            "processed": self.processed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EditRecord":
        return cls(
            id=data["id"],
            entity_type=EntityType(data["entity_type"]),
            entity_id=data["entity_id"],
            edit_type=EditType(data["edit_type"]),
            field_name=data["field_name"],
            original_value=data["original_value"],
            new_value=data["new_value"],
            user_prompt=data.get("user_prompt"),
            created_at=parse_rfc3339(data["created_at"]),
            processed=data.get("processed", False),
        )


@dataclass
class GenerationMetadata:
    """Generation context for a machine-generated artifact (one per artifact)."""

    entity_id: str
    generation_prompt: str
    model_id: str
    temperature: float
    max_tokens: int
    trace_id: str
    created_at: datetime = field(default_factory=utcnow)
    knowledge_inclusion: str = "excluded"  # which injection rule fired

    @property
    def id(self) -> str:
        return self.entity_id

    def validate(self) -> list[str]:
        return [] if self.entity_id else ["entity_id must be non-empty"]

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "generation_prompt": self.generation_prompt,
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "trace_id": self.trace_id,
            "created_at": rfc3339(self.created_at),
            "knowledge_inclusion": self.knowledge_inclusion,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationMetadata":
        return cls(
            entity_id=data["entity_id"],
            generation_prompt=data["generation_prompt"],
            model_id=data["model_id"],
            temperature=data["temperature"],
            max_tokens=data["max_tokens"],
            trace_id=data["trace_id"],
            created_at=parse_rfc3339(data["created_at"]),
            knowledge_inclusion=data.get("knowledge_inclusion", "excluded"),
        )


@dataclass
class KnowledgeEntry:
    """One extracted insight with category, scope, and provenance."""

    id: str
    text: str
    category: KnowledgeCategory
    scope: Scope
    scope_id: Optional[str]
    source_question_ids: list[str]
    created_by: str
    created_at: datetime = field(default_factory=utcnow)

    def validate(self) -> list[str]:
        return validate_knowledge_entry(self)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "category": self.category.value,
            "scope": self.scope.value,
            "scope_id": self.scope_id,
            "source_question_ids": list(self.source_question_ids),
            "created_by": self.created_by,
            "created_at": rfc3339(self.created_at),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KnowledgeEntry":
        return cls(
            id=data["id"],
            text=data["text"],
            category=KnowledgeCategory(data["category"]),
            scope=Scope(data["scope"]),
            scope_id=data.get("scope_id"),
            source_question_ids=list(data["source_question_ids"]),
            created_by=data["created_by"],
            created_at=parse_rfc3339(data["created_at"]),
        )


def _sentence_count(text: str) -> int:
    # Terminal punctuation only counts before whitespace or end-of-text, so
    # abbreviation dots ("e.g.") do not split sentences.
    segments = [s for s in re.split(r"[.!?]+(?=\s|$)", text.strip()) if s.strip()]
    return len(segments)


def validate_knowledge_entry(
    candidate: Any,
    artifact_exists: Callable[[str], bool] | None = None,
) -> list[str]:
    """Check a KnowledgeEntry-like value; returns one message per violation.

    Accepts either a KnowledgeEntry or a plain mapping and never raises on
    malformed input. Provenance resolvability is only checked when an
    ``artifact_exists`` predicate is supplied.
    """
    violations: list[str] = []
    if isinstance(candidate, KnowledgeEntry):
        text = candidate.text
        category = candidate.category.value
        source_ids = candidate.source_question_ids
        scope = candidate.scope.value
        scope_id = candidate.scope_id
    elif isinstance(candidate, dict):
        text = candidate.get("text")
        category = candidate.get("category")
        source_ids = candidate.get("source_question_ids")
        scope = candidate.get("scope")  # scope rules apply only when present
        scope_id = candidate.get("scope_id")
    else:
        return ["candidate must be a KnowledgeEntry or mapping"]

    if not isinstance(text, str) or not text.strip():
        violations.append("text must be non-empty")
    else:
        if _sentence_count(text) > KNOWLEDGE_TEXT_MAX_SENTENCES:
            violations.append("text exceeds two sentences")
        if len(text) > KNOWLEDGE_TEXT_MAX_CHARS:
            violations.append(f"text exceeds {KNOWLEDGE_TEXT_MAX_CHARS} characters")

    if category not in CATEGORY_VALUES:
        violations.append(f"category {category!r} outside closed set {CATEGORY_VALUES}")

    if not isinstance(source_ids, (list, tuple)) or len(source_ids) == 0:
        violations.append("source_question_ids must be a non-empty list (provenance required)")
    elif artifact_exists is not None:
        for qid in source_ids:
            if not artifact_exists(qid):
                violations.append(f"source question {qid!r} does not resolve to an artifact")

    if scope is not None:
        if scope == Scope.GLOBAL.value:
            if scope_id:
                violations.append("global scope must not carry a scope_id")
        elif scope in (Scope.USER.value, Scope.PROJECT.value):
            if not scope_id:
                violations.append(f"{scope} scope requires a scope_id")
        else:
            violations.append(f"scope {scope!r} outside closed set")

    return violations


@dataclass
class Participant:
    id: str
    project_id: str
    domain_expertise: str = ""
    order_index: int = 1
    status: ParticipantStatus = ParticipantStatus.PENDING

    def validate(self) -> list[str]:
        violations = []
        if self.order_index < 1:
            violations.append("order_index must be >= 1")
        return violations

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "project_id": self.project_id,
            "domain_expertise": self.domain_expertise,
            "order_index": self.order_index,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Participant":
        return cls(
            id=data["id"],
            project_id=data["project_id"],
            domain_expertise=data.get("domain_expertise", ""),
            order_index=data.get("order_index", 1),
            status=ParticipantStatus(data.get("status", "pending")),
        )


@dataclass
class EvaluationSession:
    id: str
    participant_id: str
    paper_id: str
    started_at: datetime = field(default_factory=utcnow)
    ended_at: Optional[datetime] = None
    trace_id: Optional[str] = None

    @property
    def duration_seconds(self) -> Optional[float]:
        if self.ended_at is None:
            return None
        return (self.ended_at - self.started_at).total_seconds()

    def validate(self) -> list[str]:
        violations = []
        if self.ended_at is not None and self.ended_at < self.started_at:
            violations.append("ended_at must not precede started_at")
        return violations

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "participant_id": self.participant_id,
            "paper_id": self.paper_id,
            "started_at": rfc3339(self.started_at),
            "ended_at": rfc3339(self.ended_at) if self.ended_at else None,
            "duration_seconds": self.duration_seconds,
            "trace_id": self.trace_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluationSession":
        return cls(
            id=data["id"],
            participant_id=data["participant_id"],
            paper_id=data["paper_id"],
            started_at=parse_rfc3339(data["started_at"]),
            ended_at=parse_rfc3339(data["ended_at"]) if data.get("ended_at") else None,
            trace_id=data.get("trace_id"),
        )


@dataclass
class AgentTask:
    """Asynchronous unit of work executed by the planner-routed workers."""

    id: str
    task_type: TaskType
    status: TaskStatus = TaskStatus.QUEUED
    input_data: dict = field(default_factory=dict)
    output_data: Optional[dict] = None
    attempts: int = 0
    error_message: Optional[str] = None
    created_at: datetime = field(default_factory=utcnow)
    # Transition audit: list of {"from": status|None, "to": status, "at": ts}.
    status_history: list[dict] = field(default_factory=list)
    lease_expires_at: Optional[datetime] = None

    def validate(self) -> list[str]:
        violations = []
        if self.attempts < 0:
            violations.append("attempts must be >= 0")
        if self.status == TaskStatus.COMPLETED and self.output_data is None:
            violations.append("completed tasks must carry output_data")
        if self.status != TaskStatus.COMPLETED and self.output_data is not None:
            violations.append("output_data only allowed on completed tasks")
        if self.status == TaskStatus.FAILED and not self.error_message:
            violations.append("failed tasks must carry error_message")
        if self.status != TaskStatus.FAILED and self.error_message:
            violations.append("error_message only allowed on failed tasks")
        return violations

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "task_type": self.task_type.value,
            "status": self.status.value,
            "input_data": copy.deepcopy(self.input_data),
            "output_data": copy.deepcopy(self.output_data),
            "attempts": self.attempts,
            "error_message": self.error_message,
            "created_at": rfc3339(self.created_at),
            "status_history": copy.deepcopy(self.status_history),
            "lease_expires_at": rfc3339(self.lease_expires_at)
            if self.lease_expires_at
            else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AgentTask":
        return cls(
            id=data["id"],
            task_type=TaskType(data["task_type"]),
            status=TaskStatus(data.get("status", "queued")),
            input_data=data.get("input_data") or {},
            output_data=data.get("output_data"),
            attempts=data.get("attempts", 0),
            error_message=data.get("error_message"),
            created_at=parse_rfc3339(data["created_at"]),
            status_history=data.get("status_history") or [],
            lease_expires_at=parse_rfc3339(data["lease_expires_at"])
            if data.get("lease_expires_at")
            else None,
        )


@dataclass
class TaskLogEntry:
    task_id: str
    sequence_no: int
    log_type: LogType
    message: str
    created_at: datetime = field(default_factory=utcnow)

    @property
    def id(self) -> str:
        return f"{self.task_id}:{self.sequence_no}"

    def validate(self) -> list[str]:
        return [] if self.sequence_no >= 1 else ["sequence_no starts at 1"]

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "sequence_no": self.sequence_no,
            "log_type": self.log_type.value,
            "message": self.message,
            "created_at": rfc3339(self.created_at),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TaskLogEntry":
        return cls(
            task_id=data["task_id"],
            sequence_no=data["sequence_no"],
            log_type=LogType(data["log_type"]),
            message=data["message"],
            created_at=parse_rfc3339(data["created_at"]),
        )


@dataclass
class ApiLogRecord:
    """External document-retrieval call log (stub fetcher included)."""

    id: str
    task_id: Optional[str]
    provider: str
    search_terms: str
    papers_found: int
    created_at: datetime = field(default_factory=utcnow)

    def validate(self) -> list[str]:
        return []

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "task_id": self.task_id,
            "provider": self.provider,
            "search_terms": self.search_terms,
            "papers_found": self.papers_found,
            "created_at": rfc3339(self.created_at),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ApiLogRecord":
        return cls(
            id=data["id"],
            task_id=data.get("task_id"),
            provider=data["provider"],
            search_terms=data["search_terms"],
            papers_found=data["papers_found"],
            created_at=parse_rfc3339(data["created_at"]),
        )


@dataclass
class UserInteraction:
    """Granular UI/API interaction row: one per mutating request."""

    id: str
    interaction_type: str
    entity_id: Optional[str] = None
    participant_id: Optional[str] = None
    payload: dict = field(default_factory=dict)
    created_at: datetime = field(default_factory=utcnow)

    def validate(self) -> list[str]:
        return []

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "interaction_type": self.interaction_type,
            "entity_id": self.entity_id,
            "participant_id": self.participant_id,
            "payload": copy.deepcopy(self.payload),
            "created_at": rfc3339(self.created_at),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UserInteraction":
        return cls(
            id=data["id"],
            interaction_type=data["interaction_type"],
            entity_id=data.get("entity_id"),
            participant_id=data.get("participant_id"),
            payload=data.get("payload") or {},
            created_at=parse_rfc3339(data["created_at"]),
        )


def apply_edit_value(artifact: ResearchQuestionArtifact, field_name: str, value: str) -> None:
    """Write a recorded new_value onto the named artifact field, with type coercion."""
    if field_name == "question":
        artifact.current_question = value
    elif field_name == "contribution":
        artifact.current_contribution = value
    elif field_name == "quality_rating":
        artifact.quality_rating = int(value) if value != "" else None
    elif field_name == "deleted":
        artifact.deleted = value == "true"
    else:
        raise ValueError(f"unknown field_name: {field_name!r}")


def read_edit_value(artifact: ResearchQuestionArtifact, field_name: str) -> str:
    """Current value of the named field, rendered the way EditRecords store it."""
    if field_name == "question":
        return artifact.current_question
    if field_name == "contribution":
        return artifact.current_contribution
    if field_name == "quality_rating":
        return "" if artifact.quality_rating is None else str(artifact.quality_rating)
    if field_name == "deleted":
        return "true" if artifact.deleted else "false"
    raise ValueError(f"unknown field_name: {field_name!r}")


def replay_state(
    artifact: ResearchQuestionArtifact, history: Iterable[EditRecord]
) -> ResearchQuestionArtifact:
    """Reconstruct the current state by applying the history to the initial state.

    ``context_generation`` records are creation provenance markers, not state
    transitions, and are skipped. A mismatch between a record's
    original_value and the running state raises LedgerCorruptionError.
    """
    state = replace(
        artifact,
        current_question=artifact.initial_question,
        current_contribution=artifact.initial_contribution,
        quality_rating=None,
        deleted=False,
    )
    for record in history:
        if record.entity_id != artifact.id:
            raise LedgerCorruptionError(
                f"edit {record.id} references {record.entity_id}, not {artifact.id}"
            )
        if record.edit_type == EditType.CONTEXT_GENERATION:
            continue
        running = read_edit_value(state, record.field_name)
        if running != record.original_value:
            raise LedgerCorruptionError(
                f"edit {record.id} expected {record.field_name}={record.original_value!r}, "
                f"replay has {running!r}"
            )
        apply_edit_value(state, record.field_name, record.new_value)
    state.recompute_distances()
    return state


ENTITY_KINDS = {
    PaperRecord: "publication_raw",
    ResearchQuestionArtifact: "evaluation_research_questions",
    EditRecord: "ai_entity_edits",
    GenerationMetadata: "ai_entity_metadata",
    KnowledgeEntry: "implicit_domain_knowledge",
    Participant: "evaluation_participants",
    EvaluationSession: "evaluation_sessions",
    AgentTask: "agent_tasks",
    TaskLogEntry: "project_agent_log",
    ApiLogRecord: "api_logs",
    UserInteraction: "user_interactions",
}

KIND_CLASSES = {kind: cls for cls, kind in ENTITY_KINDS.items()}
