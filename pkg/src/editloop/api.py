"""HTTP JSON boundary for the web client and CLI.

Stateless between requests: every durable fact lives in storage, so a
service restart loses nothing. Mutations are audited — each mutating
endpoint lands exactly one EditRecord or one AgentTask (paper creation
with no text queues its fetch task), plus a user_interactions row.

Route inventory:
    POST /papers                      GET  /papers
    GET  /papers/{id}/questions       PATCH /questions/{id}
    POST /questions/{id}/regenerate   POST /questions/{id}/rating
    DELETE /questions/{id}            GET  /questions/{id}/history
    POST /tasks                       GET  /tasks/{id}
    GET  /projects/{id}/knowledge     GET  /projects/{id}/stats

Error codes (closed set): validation_error, invalid_field, invalid_rating,
invalid_task, not_found, conflict, gone, gateway_error, internal_error.
"""

from __future__ import annotations

import logging
from typing import Optional

from fastapi import FastAPI, Header, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .distances import compute_diff
from .errors import (
    ArtifactDeletedError,
    ConflictError,
    ContractViolationError,
    GatewayError,
    InvariantViolation,
    NotFoundError,
    ParseError,
    TaskValidationError,
)
from .generator import FIELD_SCOPES
from .models import (
    EditType,
    PaperRecord,
    ResearchQuestionArtifact,
    TaskStatus,
    TaskType,
    UserInteraction,
)
from .orchestrator import WorkerPool, create_task
from .runtime import Runtime

logger = logging.getLogger(__name__)

LOG_TAIL = 20


class ApiError(Exception):
    def __init__(self, http_status: int, code: str, message: str, field: str | None = None):
        self.http_status = http_status
        self.code = code
        self.message = message
        self.field = field
        super().__init__(message)


class PaperBody(BaseModel):
    title: str
    authors: str = ""
    abstract: str = ""
    full_text: str = ""
    source_url: Optional[str] = None


class DirectEditBody(BaseModel):
    field_name: str
    original_value: str
    new_value: str


class RegenerateBody(BaseModel):
    user_prompt: str
    field_scope: str = "question"


class RatingBody(BaseModel):
    rating: int


class TaskBody(BaseModel):
    task_type: str
    input_data: dict = Field(default_factory=dict)


def artifact_view(artifact: ResearchQuestionArtifact) -> dict:
    return artifact.to_dict()


def create_app(
    runtime: Runtime, start_workers: bool = False, worker_count: int | None = None
) -> FastAPI:
    app = FastAPI(title="editloop", docs_url=None, redoc_url=None)
    app.state.runtime = runtime
    app.state.pool = None

    if start_workers:

        @app.on_event("startup")
        def _start_pool() -> None:
            app.state.pool = WorkerPool(runtime, worker_count)
            app.state.pool.start()

        @app.on_event("shutdown")
        def _stop_pool() -> None:
            if app.state.pool is not None:
                app.state.pool.stop()

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        body = {"code": exc.code, "message": exc.message}
        if exc.field:
            body["field"] = exc.field
        return JSONResponse(status_code=exc.http_status, content=body)

    store = runtime.store

    def interaction(kind: str, entity_id: str | None, participant: str | None, payload: dict):
        store.put(
            UserInteraction(
                id=runtime.id_factory(),
                interaction_type=kind,
                entity_id=entity_id,
                participant_id=participant,
                payload=payload,
                created_at=runtime.clock(),
            )
        )

    def get_artifact_or_raise(question_id: str) -> ResearchQuestionArtifact:
        artifact = store.get_artifact(question_id)
        if artifact is None:
            raise ApiError(404, "not_found", f"question {question_id} not found")
        return artifact

    # -- papers --------------------------------------------------------------

    @app.post("/papers", status_code=201)
    def create_paper(
        body: PaperBody, x_participant_id: Optional[str] = Header(default=None)
    ):
        paper = PaperRecord(
            id=runtime.id_factory(),
            title=body.title,
            authors=body.authors,
            abstract=body.abstract,
            full_text=body.full_text,
            source_url=body.source_url,
            created_at=runtime.clock(),
        )
        try:
            store.put(paper)
        except InvariantViolation as exc:
            raise ApiError(422, "validation_error", str(exc))
        task_id = None
        if not paper.full_text:
            task_id = create_task(
                runtime, TaskType.FETCH_PAPER_CONTENT, {"paper_id": paper.id}
            )
        interaction("create_paper", paper.id, x_participant_id, {"task_id": task_id})
        return {"paper": paper.to_dict(), "task_id": task_id}

    @app.get("/papers")
    def list_papers():
        return {"papers": [p.to_dict() for p in store.papers()]}

    @app.get("/papers/{paper_id}/questions")
    def paper_questions(paper_id: str):
        if store.get_paper(paper_id) is None:
            raise ApiError(404, "not_found", f"paper {paper_id} not found")
        artifacts = store.artifacts_by_paper(paper_id)
        return {"questions": [artifact_view(a) for a in artifacts]}

    # -- question mutations ----------------------------------------------------

    @app.patch("/questions/{question_id}")
    def direct_edit(
        question_id: str,
        body: DirectEditBody,
        x_participant_id: Optional[str] = Header(default=None),
    ):
        if body.field_name not in ("question", "contribution"):
            raise ApiError(
                422,
                "invalid_field",
                f"field_name must be question or contribution, got {body.field_name!r}",
                field="field_name",
            )
        get_artifact_or_raise(question_id)
        try:
            _, artifact = runtime.ledger.record_edit(
                question_id,
                EditType.DIRECT_EDIT,
                body.field_name,
                original_value=body.original_value,
                new_value=body.new_value,
            )
        except ArtifactDeletedError as exc:
            raise ApiError(410, "gone", str(exc))
        except ConflictError as exc:
            raise ApiError(409, "conflict", str(exc))
        except NotFoundError as exc:
            raise ApiError(404, "not_found", str(exc))
        interaction("direct_edit", question_id, x_participant_id, {"field": body.field_name})
        return artifact_view(artifact)

    @app.post("/questions/{question_id}/regenerate")
    def regenerate(
        question_id: str,
        body: RegenerateBody,
        x_participant_id: Optional[str] = Header(default=None),
    ):
        if body.field_scope not in FIELD_SCOPES:
            raise ApiError(
                422,
                "validation_error",
                f"field_scope must be one of {FIELD_SCOPES}",
                field="field_scope",
            )
        if not body.user_prompt.strip():
            raise ApiError(
                422, "validation_error", "user_prompt must be non-empty", field="user_prompt"
            )
        get_artifact_or_raise(question_id)
        participant = (
            store.get_participant(x_participant_id) if x_participant_id else None
        )
        try:
            artifact, records = runtime.generator.regenerate_entity(
                question_id, body.field_scope, body.user_prompt, participant=participant
            )
        except ArtifactDeletedError as exc:
            raise ApiError(410, "gone", str(exc))
        except NotFoundError as exc:
            raise ApiError(404, "not_found", str(exc))
        except (GatewayError, ParseError, ContractViolationError) as exc:
            raise ApiError(502, "gateway_error", f"regeneration failed: {exc}")
        interaction(
            "prompt_regeneration",
            question_id,
            x_participant_id,
            {"field_scope": body.field_scope},
        )
        return {
            "question": artifact_view(artifact),
            "edit_ids": [r.id for r in records],
        }

    @app.post("/questions/{question_id}/rating")
    def rate(
        question_id: str,
        body: RatingBody,
        x_participant_id: Optional[str] = Header(default=None),
    ):
        if body.rating not in (1, 2, 3, 4, 5):
            raise ApiError(
                422, "invalid_rating", "rating must be an integer 1..5", field="rating"
            )
        artifact = get_artifact_or_raise(question_id)
        try:
            _, artifact = runtime.ledger.record_edit(
                question_id,
                EditType.RATING,
                "quality_rating",
                original_value=(
                    "" if artifact.quality_rating is None else str(artifact.quality_rating)
                ),
                new_value=str(body.rating),
            )
        except ArtifactDeletedError as exc:
            raise ApiError(410, "gone", str(exc))
        except ConflictError as exc:
            raise ApiError(409, "conflict", str(exc))
        interaction("rating", question_id, x_participant_id, {"rating": body.rating})
        return artifact_view(artifact)

    @app.delete("/questions/{question_id}")
    def soft_delete(
        question_id: str, x_participant_id: Optional[str] = Header(default=None)
    ):
        get_artifact_or_raise(question_id)
        try:
            _, artifact = runtime.ledger.record_edit(
                question_id, EditType.DELETE, "deleted", "false", "true"
            )
        except ArtifactDeletedError as exc:
            raise ApiError(410, "gone", str(exc))
        interaction("delete", question_id, x_participant_id, {})
        return artifact_view(artifact)

    @app.get("/questions/{question_id}/history")
    def history(question_id: str):
        get_artifact_or_raise(question_id)
        entries = []
        for record in store.edits_for_entity(question_id):
            item = record.to_dict()
            if record.field_name in ("question", "contribution") and (
                record.edit_type in (EditType.DIRECT_EDIT, EditType.PROMPT_REGENERATION)
            ):
                item["hunks"] = [
                    h.to_dict() for h in compute_diff(record.original_value, record.new_value)
                ]
            else:
                item["hunks"] = None
            entries.append(item)
        return {"history": entries}

    # -- tasks -----------------------------------------------------------------

    @app.post("/tasks", status_code=202)
    def post_task(body: TaskBody, x_participant_id: Optional[str] = Header(default=None)):
        try:
            task_id = create_task(runtime, body.task_type, body.input_data)
        except TaskValidationError as exc:
            raise ApiError(422, "invalid_task", str(exc), field=exc.field)
        interaction("create_task", task_id, x_participant_id, {"task_type": body.task_type})
        return {"task_id": task_id}

    @app.get("/tasks/{task_id}")
    def get_task(task_id: str):
        task = store.get_task(task_id)
        if task is None:
            raise ApiError(404, "not_found", f"task {task_id} not found")
        logs = store.task_logs(task_id)[-LOG_TAIL:]
        return {
            "task_id": task.id,
            "task_type": task.task_type.value,
            "status": task.status.value,
            "output_data": task.output_data,
            "error_message": task.error_message,
            "attempts": task.attempts,
            "logs": [l.to_dict() for l in logs],
        }

    # -- knowledge -----------------------------------------------------------

    @app.get("/projects/{project_id}/knowledge")
    def project_knowledge(project_id: str):
        entries = store.knowledge_for_project(project_id)
        return {"entries": [e.to_dict() for e in entries]}

    @app.get("/projects/{project_id}/stats")
    def project_stats(project_id: str):
        stats = runtime.assembler.knowledge_stats(project_id)
        participants = store.participants_in_project(project_id)
        questions = store.artifacts_in_project(project_id)
        return {
            "knowledge": stats,
            "participants": len(participants),
            "questions": len(questions),
        }

    return app
