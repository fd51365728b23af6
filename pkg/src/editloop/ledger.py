"""Edit capture: records modifications, keeps distances current, aggregates.

``record_edit`` is the single write path for user modifications. It uses
optimistic concurrency — the caller's ``original_value`` must equal the
stored current value — and recomputes all four distance fields atomically
with the ledger append.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Optional

from .errors import (
    ArtifactDeletedError,
    ConflictError,
    InvariantViolation,
    NotFoundError,
)
from .models import (
    EDIT_FIELD_NAMES,
    EditRecord,
    EditType,
    EntityType,
    ResearchQuestionArtifact,
    apply_edit_value,
    read_edit_value,
)
from .serde import new_id, utcnow
from .storage import Store


@dataclass
class SessionMetrics:
    session_id: str
    dist_q_chars: int
    dist_c_chars: int
    edit_counts: dict[str, int]
    duration_seconds: Optional[float]

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "dist_q_chars": self.dist_q_chars,
            "dist_c_chars": self.dist_c_chars,
            "edit_counts": dict(self.edit_counts),
            "duration_seconds": self.duration_seconds,
        }


class EditLedger:
    def __init__(
        self,
        store: Store,
        id_factory: Callable[[], str] = new_id,
        clock: Callable[[], datetime] = utcnow,
    ) -> None:
        self.store = store
        self.id_factory = id_factory
        self.clock = clock

    def record_edit(
        self,
        entity_id: str,
        edit_type: EditType,
        field_name: str,
        original_value: str,
        new_value: str,
        user_prompt: str | None = None,
        created_at: datetime | None = None,
    ) -> tuple[EditRecord, ResearchQuestionArtifact]:
        """Append one edit and apply it to the artifact, atomically.

        Raises NotFoundError for unknown entities, ConflictError when
        original_value is stale, ArtifactDeletedError for writes against a
        soft-deleted artifact (the delete edit itself excepted).
        """
        if field_name not in EDIT_FIELD_NAMES:
            raise InvariantViolation([f"field_name {field_name!r} outside known fields"])
        with self.store.transaction():
            artifact = self.store.get_artifact(entity_id)
            if artifact is None:
                raise NotFoundError(f"artifact {entity_id} not found")
            if artifact.deleted:
                raise ArtifactDeletedError(f"artifact {entity_id} is deleted")
            current = read_edit_value(artifact, field_name)
            if current != original_value:
                raise ConflictError(
                    f"stale original_value for {field_name}: stored value differs"
                )
            record = EditRecord(
                id=self.id_factory(),
                entity_type=EntityType.RESEARCH_QUESTION,
                entity_id=entity_id,
                edit_type=edit_type,
                field_name=field_name,
                original_value=original_value,
                new_value=new_value,
                user_prompt=user_prompt,
                created_at=created_at or self.clock(),
            )
            violations = record.validate()
            if violations:
                raise InvariantViolation(violations)
            apply_edit_value(artifact, field_name, new_value)
            artifact.recompute_distances()
            # A fresh edit reopens the artifact for knowledge extraction.
            artifact.knowledge_processed = False
            self.store.put_many([record, artifact])
            return record, artifact

    def session_metrics(self, session_id: str) -> SessionMetrics:
        """Distance sums over non-deleted artifacts; edit counts over all."""
        session = self.store.get_session(session_id)
        if session is None:
            raise NotFoundError(f"session {session_id} not found")
        artifacts = self.store.artifacts_by_session(session_id)
        counts = {edit_type.value: 0 for edit_type in EditType}
        for artifact in artifacts:
            for record in self.store.edits_for_entity(artifact.id):
                counts[record.edit_type.value] += 1
        live = [a for a in artifacts if not a.deleted]
        return SessionMetrics(
            session_id=session_id,
            dist_q_chars=sum(a.dist_q_chars for a in live),
            dist_c_chars=sum(a.dist_c_chars for a in live),
            edit_counts=counts,
            duration_seconds=session.duration_seconds,
        )
