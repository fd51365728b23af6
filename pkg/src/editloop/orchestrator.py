"""Fire-and-forget task engine: queueing, claiming, planner-routed execution.

Clients create tasks and poll; workers claim the oldest queued task via an
atomic compare-and-set, route it through the planner to node functions,
and persist the terminal status atomically with its outputs. Per-task logs
are gapless and strictly ordered.
"""

from __future__ import annotations

import logging
import random
import threading
import time
from dataclasses import dataclass
from datetime import timedelta
from typing import Optional

from .errors import NotFoundError, TaskValidationError
from .fetcher import fetch_paper
from .models import (
    AgentTask,
    LogType,
    Scope,
    TaskLogEntry,
    TaskStatus,
    TaskType,
)
from .runtime import Runtime
from .serde import rfc3339

logger = logging.getLogger(__name__)

# Required payload fields (name -> type) per task type; documented schema.
PAYLOAD_SCHEMAS: dict[TaskType, dict] = {
    TaskType.FETCH_PAPER_CONTENT: {"required": {"paper_id": str}, "optional": {}},
    TaskType.GENERATE_EVALUATION_QUESTIONS: {
        "required": {"paper_id": str, "session_id": str, "participant_id": str},
        "optional": {"count": int},
    },
    TaskType.EXTRACT_IMPLICIT_KNOWLEDGE: {
        "required": {"project_id": str},
        "optional": {"scope": str},
    },
}


class _LeaseLost(Exception):
    """Terminal CAS failed: another worker owns the task now."""


def validate_task_input(task_type: TaskType, input_data: dict) -> None:
    schema = PAYLOAD_SCHEMAS[task_type]
    if not isinstance(input_data, dict):
        raise TaskValidationError("input_data must be an object")
    for name, kind in schema["required"].items():
        if name not in input_data:
            raise TaskValidationError(f"missing required field {name!r}", field=name)
        if not isinstance(input_data[name], kind):
            raise TaskValidationError(
                f"field {name!r} must be {kind.__name__}", field=name
            )
    for name, kind in schema["optional"].items():
        if name in input_data and not isinstance(input_data[name], kind):
            raise TaskValidationError(
                f"field {name!r} must be {kind.__name__}", field=name
            )


def create_task(runtime: Runtime, task_type: str | TaskType, input_data: dict) -> str:
    """Queue a task and return its id immediately; nothing executes inline."""
    try:
        resolved = TaskType(task_type)
    except ValueError:
        raise TaskValidationError(f"unknown task_type {task_type!r}", field="task_type")
    validate_task_input(resolved, input_data)
    now = runtime.clock()
    task = AgentTask(
        id=runtime.id_factory(),
        task_type=resolved,
        status=TaskStatus.QUEUED,
        input_data=dict(input_data),
        created_at=now,
        status_history=[{"from": None, "to": TaskStatus.QUEUED.value, "at": rfc3339(now)}],
    )
    runtime.store.put(task)
    return task.id


def claim_next(runtime: Runtime, worker_id: str) -> AgentTask | None:
    """Atomically claim the oldest queued task, or None when idle."""
    store = runtime.store
    while True:
        candidate = store.next_queued_task()
        if candidate is None:
            return None
        lease = runtime.clock() + timedelta(seconds=runtime.config.lease_timeout_s)
        claimed = store.cas_task(
            candidate.id,
            TaskStatus.QUEUED,
            TaskStatus.RUNNING,
            attempts_delta=1,
            lease_expires_at=lease,
            at=runtime.clock(),
        )
        if claimed is not None:
            store.append_task_log(
                claimed.id, LogType.INFO, f"claimed by {worker_id}", created_at=runtime.clock()
            )
            return claimed
        # Lost the race; try the next queued task.


def append_log(runtime: Runtime, task_id: str, log_type: LogType, message: str) -> TaskLogEntry:
    return runtime.store.append_task_log(
        task_id, log_type, message, created_at=runtime.clock()
    )


def _node_fetch(runtime: Runtime, task: AgentTask) -> dict:
    paper = fetch_paper(
        runtime.store,
        runtime.fetcher,
        task.input_data["paper_id"],
        task_id=task.id,
        id_factory=runtime.id_factory,
        clock=runtime.clock,
    )
    return {"paper_id": paper.id, "full_text_chars": len(paper.full_text)}


def _node_extract(runtime: Runtime, task: AgentTask, project_id: str) -> dict:
    scope = Scope(task.input_data.get("scope", Scope.PROJECT.value))
    summary = runtime.engine.extraction_pass(
        project_id,
        scope=scope,
        task_id=task.id,
        log=lambda message: append_log(runtime, task.id, LogType.INFO, message),
    )
    return {
        "project_id": project_id,
        "artifacts_seen": summary.artifacts_seen,
        "extraction_calls": summary.artifacts_called,
        "entries_added": summary.entries_added,
    }


def _node_generate(runtime: Runtime, task: AgentTask) -> tuple[dict, list]:
    participant = runtime.store.get_participant(task.input_data["participant_id"])
    if participant is None:
        raise NotFoundError(f"participant {task.input_data['participant_id']} not found")
    artifacts, batch = runtime.generator.prepare_question_set(
        task.input_data["paper_id"],
        task.input_data["session_id"],
        participant,
        count=task.input_data.get("count"),
        task_id=task.id,
    )
    output = {
        "session_id": task.input_data["session_id"],
        "question_ids": [a.id for a in artifacts],
    }
    return output, batch


def _run_node(runtime: Runtime, task: AgentTask, name: str, action: str, fn) -> dict:
    append_log(runtime, task.id, LogType.NODE_ENTER, name)
    try:
        output = fn()
    except Exception as exc:
        runtime.store.append_task_action(task.id, action, error_message=str(exc))
        append_log(runtime, task.id, LogType.ERROR, f"{name}: {exc}")
        raise
    runtime.store.append_task_action(task.id, action)
    append_log(runtime, task.id, LogType.NODE_EXIT, name)
    return output


def execute_task(runtime: Runtime, task: AgentTask) -> AgentTask:
    """Run one claimed task to a terminal status.

    The planner routes by task_type. A generation task first runs the
    extraction pass over the project's unprocessed edits, then the
    generator node; its artifacts commit atomically with the completed
    status so a lost lease discards the work instead of duplicating it.
    """
    if task.status != TaskStatus.RUNNING:
        raise TaskValidationError(f"task {task.id} is not running")
    store = runtime.store
    output: dict = {}
    try:
        append_log(runtime, task.id, LogType.NODE_ENTER, "planner")
        route = task.task_type
        runtime.store.append_task_action(task.id, "planner")
        append_log(runtime, task.id, LogType.NODE_EXIT, "planner")

        if route == TaskType.GENERATE_EVALUATION_QUESTIONS:
            participant = store.get_participant(task.input_data["participant_id"])
            if participant is None:
                raise NotFoundError(
                    f"participant {task.input_data['participant_id']} not found"
                )
            # Extraction commits on its own: its entries stand even if the
            # generation half fails and gets retried later.
            output.update(
                _run_node(
                    runtime,
                    task,
                    "extract_implicit_knowledge",
                    "extraction",
                    lambda: _node_extract(runtime, task, participant.project_id),
                )
            )
            generated, batch = _run_node(
                runtime,
                task,
                "generate_evaluation_questions",
                "generation",
                lambda: _node_generate(runtime, task),
            )
            output.update(generated)
            # Artifacts commit atomically with the terminal status: a lost
            # lease rolls the batch back instead of duplicating the set.
            with store.transaction():
                store.put_many(batch)
                final = store.cas_task(
                    task.id,
                    TaskStatus.RUNNING,
                    TaskStatus.COMPLETED,
                    output_data=output,
                    at=runtime.clock(),
                )
                if final is None:
                    raise _LeaseLost(task.id)
        else:
            if route == TaskType.FETCH_PAPER_CONTENT:
                node_name, action = "fetch_paper_content", "fetch"
                fn = lambda: _node_fetch(runtime, task)
            else:
                node_name, action = "extract_implicit_knowledge", "extraction"
                fn = lambda: _node_extract(runtime, task, task.input_data["project_id"])
            output.update(_run_node(runtime, task, node_name, action, fn))
            final = store.cas_task(
                task.id,
                TaskStatus.RUNNING,
                TaskStatus.COMPLETED,
                output_data=output,
                at=runtime.clock(),
            )
            if final is None:
                raise _LeaseLost(task.id)
        append_log(runtime, task.id, LogType.INFO, "task completed")
        return final
    except _LeaseLost:
        append_log(
            runtime, task.id, LogType.WARN, "lease lost before commit; work discarded"
        )
        return store.get_task(task.id)
    except Exception as exc:
        failed = store.cas_task(
            task.id,
            TaskStatus.RUNNING,
            TaskStatus.FAILED,
            error_message=str(exc) or type(exc).__name__,
            at=runtime.clock(),
        )
        if failed is None:
            return store.get_task(task.id)
        append_log(runtime, task.id, LogType.ERROR, f"task failed: {exc}")
        return failed


def retry_task(runtime: Runtime, task_id: str) -> bool:
    """Explicitly requeue a failed task; refused past max_attempts."""
    task = runtime.store.get_task(task_id)
    if task is None:
        raise NotFoundError(f"task {task_id} not found")
    if task.status != TaskStatus.FAILED:
        return False
    if task.attempts >= runtime.config.max_attempts:
        append_log(
            runtime,
            task_id,
            LogType.WARN,
            f"retry refused: attempts {task.attempts} >= max {runtime.config.max_attempts}",
        )
        return False
    requeued = runtime.store.cas_task(
        task_id, TaskStatus.FAILED, TaskStatus.QUEUED, at=runtime.clock()
    )
    if requeued is not None:
        append_log(runtime, task_id, LogType.WARN, "task requeued by explicit retry")
        return True
    return False


def recover_stale(runtime: Runtime) -> int:
    """Requeue running tasks whose lease expired (worker presumed dead).

    Recovery is recorded as running->failed (lease expiry) followed by the
    standard failed->queued retry edge, keeping the transition history
    within the legal set.
    """
    now = runtime.clock()
    recovered = 0
    for task in runtime.store.tasks(TaskStatus.RUNNING):
        if task.lease_expires_at is None or task.lease_expires_at > now:
            continue
        failed = runtime.store.cas_task(
            task.id,
            TaskStatus.RUNNING,
            TaskStatus.FAILED,
            error_message="lease expired; worker presumed dead",
            at=now,
        )
        if failed is None:
            continue
        append_log(runtime, task.id, LogType.WARN, "lease expired; requeueing")
        if task.attempts < runtime.config.max_attempts:
            runtime.store.cas_task(task.id, TaskStatus.FAILED, TaskStatus.QUEUED, at=now)
            recovered += 1
    return recovered


def drain(runtime: Runtime, worker_id: str = "inline", limit: int | None = None) -> int:
    """Synchronously execute queued tasks until the queue is empty."""
    executed = 0
    while limit is None or executed < limit:
        task = claim_next(runtime, worker_id)
        if task is None:
            return executed
        execute_task(runtime, task)
        executed += 1
    return executed


class Worker(threading.Thread):
    def __init__(self, runtime: Runtime, worker_id: str) -> None:
        super().__init__(name=worker_id, daemon=True)
        self.runtime = runtime
        self.worker_id = worker_id
        # Thread has a private _stop attribute; do not shadow it.
        self._halt = threading.Event()

    def stop(self) -> None:
        self._halt.set()

    def run(self) -> None:
        interval = self.runtime.config.poll_interval_s
        while not self._halt.is_set():
            try:
                recover_stale(self.runtime)
                task = claim_next(self.runtime, self.worker_id)
            except Exception:
                logger.exception("worker %s: claim failed", self.worker_id)
                task = None
            if task is None:
                # Jittered backoff up to the poll ceiling.
                self._halt.wait(interval * (0.5 + random.random()))
                interval = min(interval * 2, self.runtime.config.poll_max_interval_s)
                continue
            interval = self.runtime.config.poll_interval_s
            try:
                execute_task(self.runtime, task)
            except Exception:
                logger.exception("worker %s: execution crashed", self.worker_id)


class WorkerPool:
    def __init__(self, runtime: Runtime, count: int | None = None) -> None:
        self.runtime = runtime
        self.workers = [
            Worker(runtime, f"worker-{i + 1}")
            for i in range(count if count is not None else runtime.config.worker_count)
        ]

    def start(self) -> None:
        for worker in self.workers:
            worker.start()

    def stop(self, timeout: float = 5.0) -> None:
        for worker in self.workers:
            worker.stop()
        for worker in self.workers:
            worker.join(timeout=timeout)
