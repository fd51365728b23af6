"""Embedded SQLite backend realizing schema.sql.

All access is serialized through one process-wide lock per store instance;
SQLite provides durability and the documented relational shape. Payload
columns (task input/output, interaction payloads) hold opaque JSON.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from contextlib import contextmanager
from datetime import datetime
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

from ..errors import DuplicateIdError, NotFoundError
from ..models import (
    KIND_CLASSES,
    AgentTask,
    ApiLogRecord,
    EditRecord,
    EvaluationSession,
    GenerationMetadata,
    KnowledgeEntry,
    LogType,
    PaperRecord,
    Participant,
    ResearchQuestionArtifact,
    TaskLogEntry,
    TaskStatus,
    UserInteraction,
)
from ..serde import new_id, rfc3339, utcnow
from . import MUTABLE_KINDS, Store


def _load_schema() -> str:
    return resources.files("editloop.storage").joinpath("schema.sql").read_text()


# Per-kind translation between entity dicts and row dicts.


def _identity(data: dict) -> dict:
    return data


def _entry_to_row(data: dict) -> dict:
    row = dict(data)
    row["knowledge_category"] = row.pop("category")
    row["source_question_ids"] = json.dumps(row["source_question_ids"])
    return row


def _entry_from_row(row: dict) -> dict:
    data = dict(row)
    data["category"] = data.pop("knowledge_category")
    data["source_question_ids"] = json.loads(data["source_question_ids"])
    return data


def _participant_to_row(data: dict) -> dict:
    row = dict(data)
    row["evaluation_status"] = row.pop("status")
    return row


def _participant_from_row(row: dict) -> dict:
    data = dict(row)
    data["status"] = data.pop("evaluation_status")
    return data


def _session_to_row(data: dict) -> dict:
    row = dict(data)
    row.pop("duration_seconds", None)
    return row


def _task_to_row(data: dict) -> dict:
    row = dict(data)
    row["input_data"] = json.dumps(row["input_data"])
    row["output_data"] = json.dumps(row["output_data"]) if row["output_data"] is not None else None
    row["status_history"] = json.dumps(row["status_history"])
    return row


def _task_from_row(row: dict) -> dict:
    data = dict(row)
    data["input_data"] = json.loads(data["input_data"])
    data["output_data"] = json.loads(data["output_data"]) if data["output_data"] else None
    data["status_history"] = json.loads(data["status_history"])
    return data


def _interaction_to_row(data: dict) -> dict:
    row = dict(data)
    row["payload"] = json.dumps(row["payload"])
    return row


def _interaction_from_row(row: dict) -> dict:
    data = dict(row)
    data["payload"] = json.loads(data["payload"])
    return data


def _bool_columns(row: dict, names: tuple[str, ...]) -> dict:
    for name in names:
        if name in row:
            row[name] = int(bool(row[name]))
    return row


_TABLES: dict[str, dict] = {
    "publication_raw": {"key": "id", "to_row": _identity, "from_row": _identity},
    "evaluation_research_questions": {
        "key": "id",
        "to_row": lambda d: _bool_columns(dict(d), ("deleted", "knowledge_processed")),
        "from_row": lambda r: {
            **r,
            "deleted": bool(r["deleted"]),
            "knowledge_processed": bool(r["knowledge_processed"]),
        },
    },
    "ai_entity_edits": {
        "key": "id",
        "to_row": lambda d: _bool_columns(dict(d), ("processed",)),
        "from_row": lambda r: {**r, "processed": bool(r["processed"])},
    },
    "ai_entity_metadata": {"key": "entity_id", "to_row": _identity, "from_row": _identity},
    "implicit_domain_knowledge": {
        "key": "id",
        "to_row": _entry_to_row,
        "from_row": _entry_from_row,
    },
    "evaluation_participants": {
        "key": "id",
        "to_row": _participant_to_row,
        "from_row": _participant_from_row,
    },
    "evaluation_sessions": {"key": "id", "to_row": _session_to_row, "from_row": _identity},
    "agent_tasks": {"key": "id", "to_row": _task_to_row, "from_row": _task_from_row},
    "project_agent_log": {"key": None, "to_row": _identity, "from_row": _identity},
    "api_logs": {"key": "id", "to_row": _identity, "from_row": _identity},
    "user_interactions": {
        "key": "id",
        "to_row": _interaction_to_row,
        "from_row": _interaction_from_row,
    },
}


class SqliteStore(Store):
    def __init__(self, path: str | Path = ":memory:") -> None:
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(str(path), check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._conn.isolation_level = None  # explicit transactions only
        with self._lock:
            self._conn.executescript(_load_schema())

    def close(self) -> None:
        self._conn.close()

    @contextmanager
    def transaction(self):
        with self._lock:
            if self._in_txn():  # nested scopes join the outer transaction
                yield self
                return
            self._conn.execute("BEGIN IMMEDIATE")
            try:
                yield self
            except BaseException:
                self._conn.execute("ROLLBACK")
                raise
            else:
                self._conn.execute("COMMIT")

    def _in_txn(self) -> bool:
        return self._conn.in_transaction

    @contextmanager
    def _write(self):
        """Run inside the current transaction, or a fresh one."""
        with self._lock:
            if self._in_txn():
                yield
            else:
                with self.transaction():
                    yield

    # -- write path -------------------------------------------------------

    def _insert_row(self, kind: str, entity: Any) -> str:
        spec = _TABLES[kind]
        row = spec["to_row"](entity.to_dict())
        columns = ", ".join(row)
        placeholders = ", ".join("?" for _ in row)
        verb = "INSERT OR REPLACE" if kind in MUTABLE_KINDS else "INSERT"
        try:
            self._conn.execute(
                f"{verb} INTO {kind} ({columns}) VALUES ({placeholders})",
                tuple(row.values()),
            )
        except sqlite3.IntegrityError as exc:
            if "UNIQUE" in str(exc) or "PRIMARY KEY" in str(exc):
                raise DuplicateIdError(f"{kind} id {getattr(entity, 'id', '?')} already exists")
            raise
        return getattr(entity, "id")

    def put(self, entity: Any) -> str:
        with self._lock:
            kind = self._validate_for_put(entity)
            with self._write():
                return self._insert_row(kind, entity)

    def put_many(self, entities: Iterable[Any]) -> list[str]:
        items = list(entities)
        with self._lock:
            kinds = [self._validate_for_put(e) for e in items]
            with self._write():
                return [self._insert_row(kind, e) for kind, e in zip(kinds, items)]

    # -- reads --------------------------------------------------------------

    def _row_to_entity(self, kind: str, row: sqlite3.Row) -> Any:
        data = _TABLES[kind]["from_row"](dict(row))
        return KIND_CLASSES[kind].from_dict(data)

    def get(self, kind: str, entity_id: str) -> Any | None:
        key = _TABLES[kind]["key"] or "task_id"
        with self._lock:
            cur = self._conn.execute(f"SELECT * FROM {kind} WHERE {key} = ?", (entity_id,))
            row = cur.fetchone()
        return self._row_to_entity(kind, row) if row else None

    def list_kind(self, kind: str) -> list[Any]:
        with self._lock:
            rows = self._conn.execute(f"SELECT * FROM {kind}").fetchall()
        return [self._row_to_entity(kind, row) for row in rows]

    # -- atomic operations ----------------------------------------------------

    def mark_processed(self, edit_ids: Iterable[str]) -> None:
        ids = list(edit_ids)
        with self._lock, self._write():
            for edit_id in ids:
                cur = self._conn.execute(
                    "SELECT 1 FROM ai_entity_edits WHERE id = ?", (edit_id,)
                )
                if cur.fetchone() is None:
                    raise NotFoundError(f"edit {edit_id} not found")
            for edit_id in ids:
                self._conn.execute(
                    "UPDATE ai_entity_edits SET processed = 1 WHERE id = ?", (edit_id,)
                )

    def set_artifact_knowledge_processed(
        self, artifact_id: str, expected: bool, value: bool
    ) -> bool:
        with self._lock, self._write():
            cur = self._conn.execute(
                "SELECT knowledge_processed FROM evaluation_research_questions WHERE id = ?",
                (artifact_id,),
            )
            row = cur.fetchone()
            if row is None:
                raise NotFoundError(f"artifact {artifact_id} not found")
            if bool(row[0]) != expected:
                return False
            self._conn.execute(
                "UPDATE evaluation_research_questions SET knowledge_processed = ? WHERE id = ?",
                (int(value), artifact_id),
            )
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
        with self._lock, self._write():
            task = self.get("agent_tasks", task_id)
            if task is None:
                raise NotFoundError(f"task {task_id} not found")
            if task.status != expect_status:
                return None
            task.status = to_status
            task.attempts += attempts_delta
            task.output_data = output_data
            task.error_message = error_message
            task.lease_expires_at = lease_expires_at
            task.status_history.append(
                {
                    "from": expect_status.value,
                    "to": to_status.value,
                    "at": rfc3339(at or utcnow()),
                }
            )
            self._insert_row("agent_tasks", task)
            return task

    def append_task_log(
        self,
        task_id: str,
        log_type: LogType,
        message: str,
        created_at: datetime | None = None,
    ) -> TaskLogEntry:
        with self._lock, self._write():
            cur = self._conn.execute("SELECT 1 FROM agent_tasks WHERE id = ?", (task_id,))
            if cur.fetchone() is None:
                raise NotFoundError(f"task {task_id} not found")
            cur = self._conn.execute(
                "SELECT COALESCE(MAX(sequence_no), 0) + 1 FROM project_agent_log"
                " WHERE task_id = ?",
                (task_id,),
            )
            next_no = cur.fetchone()[0]
            entry = TaskLogEntry(
                task_id=task_id,
                sequence_no=next_no,
                log_type=log_type,
                message=message,
                created_at=created_at or utcnow(),
            )
            self._insert_row("project_agent_log", entry)
            return entry

    def append_task_action(
        self,
        task_id: str,
        action_type: str,
        *,
        attempts: int = 1,
        error_message: str | None = None,
    ) -> None:
        with self._lock, self._write():
            self._conn.execute(
                "INSERT INTO task_action (id, task_id, action_type, attempts,"
                " error_message, created_at) VALUES (?, ?, ?, ?, ?, ?)",
                (new_id(), task_id, action_type, attempts, error_message, rfc3339(utcnow())),
            )

    def task_actions(self, task_id: str | None = None) -> list[dict]:
        query = "SELECT * FROM task_action"
        params: tuple = ()
        if task_id is not None:
            query += " WHERE task_id = ?"
            params = (task_id,)
        with self._lock:
            rows = self._conn.execute(query + " ORDER BY created_at, id", params).fetchall()
        return [dict(r) for r in rows]

    def append_trace(self, trace: dict) -> None:
        with self._lock, self._write():
            self._conn.execute(
                "INSERT INTO llm_traces (trace_id, task_id, request, response, created_at)"
                " VALUES (?, ?, ?, ?, ?)",
                (
                    trace["trace_id"],
                    trace.get("task_id"),
                    json.dumps(trace["request"]),
                    json.dumps(trace["response"]),
                    trace["created_at"],
                ),
            )

    def traces(self) -> list[dict]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM llm_traces ORDER BY created_at, trace_id"
            ).fetchall()
        return [
            {
                "trace_id": r["trace_id"],
                "task_id": r["task_id"],
                "request": json.loads(r["request"]),
                "response": json.loads(r["response"]),
                "created_at": r["created_at"],
            }
            for r in rows
        ]
