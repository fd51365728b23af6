"""Thread-safe in-memory store: the test and replay backend."""

from __future__ import annotations

import copy
import threading
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Iterable

from ..errors import DuplicateIdError, NotFoundError
from ..models import (
    ENTITY_KINDS,
    AgentTask,
    LogType,
    TaskLogEntry,
    TaskStatus,
)
from ..serde import new_id, rfc3339, utcnow
from . import MUTABLE_KINDS, Store


class MemoryStore(Store):
    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._data: dict[str, dict[str, Any]] = {kind: {} for kind in ENTITY_KINDS.values()}
        self._traces: list[dict] = []
        self._task_actions: list[dict] = []

    @contextmanager
    def transaction(self):
        with self._lock:
            yield self

    # -- write path -------------------------------------------------------

    def put(self, entity: Any) -> str:
        with self._lock:
            return self._put_locked(entity)

    def put_many(self, entities: Iterable[Any]) -> list[str]:
        items = list(entities)
        with self._lock:
            # Validate everything up front so a late failure writes nothing.
            staged = []
            for entity in items:
                kind = self._validate_for_put(entity)
                entity_id = getattr(entity, "id")
                if entity_id in self._data[kind] and kind not in MUTABLE_KINDS:
                    raise DuplicateIdError(f"{kind} id {entity_id} already exists")
                staged.append((kind, entity_id, copy.deepcopy(entity)))
            for kind, entity_id, stored in staged:
                self._data[kind][entity_id] = stored
            return [entity_id for _, entity_id, _ in staged]

    def _put_locked(self, entity: Any) -> str:
        kind = self._validate_for_put(entity)
        entity_id = getattr(entity, "id")
        if entity_id in self._data[kind] and kind not in MUTABLE_KINDS:
            raise DuplicateIdError(f"{kind} id {entity_id} already exists")
        self._data[kind][entity_id] = copy.deepcopy(entity)
        return entity_id

    # -- reads --------------------------------------------------------------

    def get(self, kind: str, entity_id: str) -> Any | None:
        with self._lock:
            entity = self._data[kind].get(entity_id)
            return copy.deepcopy(entity) if entity is not None else None

    def list_kind(self, kind: str) -> list[Any]:
        with self._lock:
            return [copy.deepcopy(e) for e in self._data[kind].values()]

    # -- atomic operations ----------------------------------------------------

    def mark_processed(self, edit_ids: Iterable[str]) -> None:
        with self._lock:
            records = []
            for edit_id in edit_ids:
                record = self._data["ai_entity_edits"].get(edit_id)
                if record is None:
                    raise NotFoundError(f"edit {edit_id} not found")
                records.append(record)
            for record in records:
                record.processed = True

    def set_artifact_knowledge_processed(
        self, artifact_id: str, expected: bool, value: bool
    ) -> bool:
        with self._lock:
            artifact = self._data["evaluation_research_questions"].get(artifact_id)
            if artifact is None:
                raise NotFoundError(f"artifact {artifact_id} not found")
            if artifact.knowledge_processed != expected:
                return False
            artifact.knowledge_processed = value
            return True

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
        with self._lock:
            task = self._data["agent_tasks"].get(task_id)
            if task is None:
                raise NotFoundError(f"task {task_id} not found")
            if task.status != expect_status:
                return None
            task.status = to_status
            task.attempts += attempts_delta
            task.output_data = copy.deepcopy(output_data) if output_data is not None else None
            task.error_message = error_message
            task.lease_expires_at = lease_expires_at
            task.status_history.append(
                {
                    "from": expect_status.value,
                    "to": to_status.value,
                    "at": rfc3339(at or utcnow()),
                }
            )
            return copy.deepcopy(task)

    def append_task_log(
        self,
        task_id: str,
        log_type: LogType,
        message: str,
        created_at: datetime | None = None,
    ) -> TaskLogEntry:
        with self._lock:
            if task_id not in self._data["agent_tasks"]:
                raise NotFoundError(f"task {task_id} not found")
            next_no = (
                sum(1 for l in self._data["project_agent_log"].values() if l.task_id == task_id)
                + 1
            )
            entry = TaskLogEntry(
                task_id=task_id,
                sequence_no=next_no,
                log_type=log_type,
                message=message,
                created_at=created_at or utcnow(),
            )
            self._data["project_agent_log"][entry.id] = entry
            return copy.deepcopy(entry)

    def append_task_action(
        self,
        task_id: str,
        action_type: str,
        *,
        attempts: int = 1,
        error_message: str | None = None,
    ) -> None:
        with self._lock:
            self._task_actions.append(
                {
                    "id": new_id(),
                    "task_id": task_id,
                    "action_type": action_type,
                    "attempts": attempts,
                    "error_message": error_message,
                    "created_at": rfc3339(utcnow()),
                }
            )

    def task_actions(self, task_id: str | None = None) -> list[dict]:
        with self._lock:
            rows = [copy.deepcopy(a) for a in self._task_actions]
        if task_id is not None:
            rows = [a for a in rows if a["task_id"] == task_id]
        return rows

    def append_trace(self, trace: dict) -> None:
        with self._lock:
            self._traces.append(copy.deepcopy(trace))

    def traces(self) -> list[dict]:
        with self._lock:
            return [copy.deepcopy(t) for t in self._traces]
