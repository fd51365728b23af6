"""Replay driver: feeds a trace through the full pipeline deterministically.

Generation and extraction completions come from the trace (recorded
responses) via an ordered mock queue; ids are sequential and the clock
follows event timestamps, so a replay is a pure function of trace +
recorded responses: reports are byte-identical across runs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from ..config import Config
from ..errors import ScriptExhaustionError, TraceFormatError
from ..gateway import MockProvider
from ..models import EditType, PaperRecord, Participant, TaskStatus
from ..orchestrator import claim_next, create_task, execute_task
from ..runtime import Runtime, build_runtime, sequential_ids
from ..storage.memory import MemoryStore
from .report import MetricsReport, build_report
from .trace import TraceEvent

logger = logging.getLogger(__name__)


@dataclass
class GenerationAudit:
    """Snapshot taken right after each generation task completes."""

    session_id: str
    participant_id: str
    participant_order: int
    prompt: str
    entries_at_build: list[str]
    knowledge_count_at_build: int


@dataclass
class ReplayResult:
    store: MemoryStore
    report: MetricsReport
    audits: list[GenerationAudit]
    project_id: str


@dataclass
class _SessionInfo:
    participant_id: str
    paper_id: str
    project_id: str
    artifacts: dict[int, str] = field(default_factory=dict)  # position -> id


def format_generation_response(questions: list[dict]) -> str:
    """Render recorded question pairs in the canonical response format."""
    parts = []
    for i, item in enumerate(questions, start=1):
        parts.append(
            f"{i}. Question: {item['question']}\nContribution: {item['contribution']}\n"
        )
    return "\n".join(parts)


class ReplayRunner:
    def __init__(
        self,
        events: list[TraceEvent],
        papers_dir: str | Path | None = None,
        papers: dict[str, dict] | None = None,
        config: Config | None = None,
        header: dict | None = None,
    ) -> None:
        self.events = events
        self.papers_dir = Path(papers_dir) if papers_dir else None
        self.papers = dict(papers or {})
        self.config = config or Config()
        self.header = dict(header or {})
        self.provider = MockProvider(allow_empty=True)
        self._now = datetime.min
        self.runtime: Runtime = build_runtime(
            store=MemoryStore(),
            provider=self.provider,
            config=self.config,
            id_factory=sequential_ids("r"),
            clock=lambda: self._now,
        )
        self.sessions: dict[str, _SessionInfo] = {}
        self.pending: dict[str, list[dict]] = {}  # artifact id -> recorded entries
        self.audits: list[GenerationAudit] = []
        self.project_id: str | None = None

    # -- paper registration ---------------------------------------------------

    def _ensure_paper(self, event: TraceEvent, paper_id: str) -> None:
        store = self.runtime.store
        if store.get_paper(paper_id) is not None:
            return
        data: dict = {}
        if paper_id in self.papers:
            data = self.papers[paper_id]
        elif self.papers_dir is not None:
            json_path = self.papers_dir / f"{paper_id}.json"
            txt_path = self.papers_dir / f"{paper_id}.txt"
            if json_path.exists():
                data = json.loads(json_path.read_text(encoding="utf-8"))
            elif txt_path.exists():
                data = {"title": paper_id, "full_text": txt_path.read_text(encoding="utf-8")}
        if not data:
            data = {"title": paper_id, "full_text": f"[stub full text for {paper_id}]"}
        store.put(
            PaperRecord(
                id=paper_id,
                title=data.get("title", paper_id),
                authors=data.get("authors", ""),
                abstract=data.get("abstract", ""),
                full_text=data.get("full_text") or f"[stub full text for {paper_id}]",
                created_at=self._now,
            )
        )

    # -- event handlers ---------------------------------------------------------

    def _on_session_start(self, event: TraceEvent) -> None:
        store = self.runtime.store
        project_id = event["project_id"]
        if self.project_id is None:
            self.project_id = project_id
        elif self.project_id != project_id:
            raise TraceFormatError(event.index, "trace spans multiple projects")
        participant_id = event["participant_id"]
        if store.get_participant(participant_id) is None:
            store.put(
                Participant(
                    id=participant_id,
                    project_id=project_id,
                    order_index=event["participant_order"],
                )
            )
        self._ensure_paper(event, event["paper_id"])
        from ..models import EvaluationSession

        store.put(
            EvaluationSession(
                id=event["session_id"],
                participant_id=participant_id,
                paper_id=event["paper_id"],
                started_at=event.ts,
            )
        )
        self.sessions[event["session_id"]] = _SessionInfo(
            participant_id=participant_id,
            paper_id=event["paper_id"],
            project_id=project_id,
        )

    def _enqueue_pending_extraction_scripts(self) -> None:
        """Queue recorded extraction responses in the order the pass will call."""
        store = self.runtime.store
        seen: list[str] = []
        for record in store.query_unprocessed_edits(self.project_id):
            if record.entity_id not in seen:
                seen.append(record.entity_id)
        for artifact_id in seen:
            artifact = store.get_artifact(artifact_id)
            if artifact is None or artifact.knowledge_processed:
                continue
            if not artifact.has_changes():
                self.pending.pop(artifact_id, None)
                continue
            entries = self.pending.pop(artifact_id, [])
            self.provider.enqueue(json.dumps(entries))

    def _run_task(self, event: TraceEvent, task_type: str, input_data: dict):
        task_id = create_task(self.runtime, task_type, input_data)
        task = claim_next(self.runtime, "replay")
        final = execute_task(self.runtime, task)
        if final.status != TaskStatus.COMPLETED:
            raise ScriptExhaustionError(
                f"event {event.index}: {task_type} task failed: {final.error_message}"
            )
        return final

    def _on_generate(self, event: TraceEvent) -> None:
        info = self.sessions[event["session_id"]]
        self._enqueue_pending_extraction_scripts()
        questions = event["questions"]
        self.provider.enqueue(format_generation_response(questions))
        final = self._run_task(
            event,
            "generate_evaluation_questions",
            {
                "paper_id": info.paper_id,
                "session_id": event["session_id"],
                "participant_id": info.participant_id,
                "count": len(questions),
            },
        )
        store = self.runtime.store
        artifacts = store.artifacts_by_session(event["session_id"])
        info.artifacts = {a.position: a.id for a in artifacts}
        participant = store.get_participant(info.participant_id)
        prompt = store.get_metadata(final.output_data["question_ids"][0]).generation_prompt
        entries = sorted(
            store.list_kind("implicit_domain_knowledge"),
            key=lambda e: (e.created_at.isoformat(), e.id),
        )
        self.audits.append(
            GenerationAudit(
                session_id=event["session_id"],
                participant_id=info.participant_id,
                participant_order=participant.order_index,
                prompt=prompt,
                entries_at_build=[e.text for e in entries],
                knowledge_count_at_build=len(entries),
            )
        )

    def _artifact_for(self, event: TraceEvent) -> str:
        info = self.sessions[event["session_id"]]
        position = event["position"]
        if position not in info.artifacts:
            raise TraceFormatError(
                event.index, f"position {position} has no generated artifact"
            )
        return info.artifacts[position]

    def _on_rate(self, event: TraceEvent) -> None:
        store = self.runtime.store
        artifact_id = self._artifact_for(event)
        artifact = store.get_artifact(artifact_id)
        self.runtime.ledger.record_edit(
            artifact_id,
            EditType.RATING,
            "quality_rating",
            original_value="" if artifact.quality_rating is None else str(artifact.quality_rating),
            new_value=str(event["rating"]),
            created_at=event.ts,
        )

    def _on_direct_edit(self, event: TraceEvent) -> None:
        store = self.runtime.store
        artifact_id = self._artifact_for(event)
        artifact = store.get_artifact(artifact_id)
        original = (
            artifact.current_question
            if event["field"] == "question"
            else artifact.current_contribution
        )
        self.runtime.ledger.record_edit(
            artifact_id,
            EditType.DIRECT_EDIT,
            event["field"],
            original_value=original,
            new_value=event["new_value"],
            created_at=event.ts,
        )

    def _on_prompt_edit(self, event: TraceEvent) -> None:
        artifact_id = self._artifact_for(event)
        scope = event["field"]
        if scope == "both":
            response = (
                f"Question: {event['new_question']}\n"
                f"Contribution: {event['new_contribution']}"
            )
        else:
            response = event["new_value"]
        self.provider.enqueue(response)
        self.runtime.generator.regenerate_entity(
            artifact_id, scope, event["user_prompt"]
        )

    def _on_delete(self, event: TraceEvent) -> None:
        artifact_id = self._artifact_for(event)
        self.runtime.ledger.record_edit(
            artifact_id, EditType.DELETE, "deleted", "false", "true", created_at=event.ts
        )

    def _on_session_end(self, event: TraceEvent) -> None:
        store = self.runtime.store
        session = store.get_session(event["session_id"])
        session.ended_at = event.ts
        store.put(session)
        info = self.sessions[event["session_id"]]
        for item in event.get("knowledge") or []:
            position = item["position"]
            if position not in info.artifacts:
                raise TraceFormatError(
                    event.index, f"knowledge references ungenerated position {position}"
                )
            artifact = store.get_artifact(info.artifacts[position])
            if not artifact.has_changes():
                raise TraceFormatError(
                    event.index,
                    f"knowledge scripted for unchanged artifact at position {position}",
                )
            self.pending[artifact.id] = item["entries"]

    # -- main loop ---------------------------------------------------------------

    def run(self) -> ReplayResult:
        handlers = {
            "session_start": self._on_session_start,
            "generate": self._on_generate,
            "rate": self._on_rate,
            "direct_edit": self._on_direct_edit,
            "prompt_edit": self._on_prompt_edit,
            "delete": self._on_delete,
            "session_end": self._on_session_end,
        }
        for event in self.events:
            self._now = event.ts
            handlers[event.event](event)

        if self.project_id is None:
            # Empty trace: empty report.
            return ReplayResult(
                store=self.runtime.store,
                report=MetricsReport(header={**self.header, "events": 0}),
                audits=[],
                project_id="",
            )

        # Final extraction pass so the last sessions' knowledge lands too.
        if self.runtime.store.query_unprocessed_edits(self.project_id):
            self._enqueue_pending_extraction_scripts()
            final_event = self.events[-1]
            self._now = final_event.ts
            self._run_task(
                final_event, "extract_implicit_knowledge", {"project_id": self.project_id}
            )

        if self.provider.queue:
            raise ScriptExhaustionError(
                f"{len(self.provider.queue)} recorded responses were never consumed"
            )
        if self.pending:
            raise ScriptExhaustionError(
                f"recorded knowledge for {sorted(self.pending)} was never extracted"
            )

        report = build_report(
            self.runtime.store,
            self.project_id,
            header={**self.header, "events": len(self.events)},
        )
        return ReplayResult(
            store=self.runtime.store,
            report=report,
            audits=self.audits,
            project_id=self.project_id,
        )


def replay_trace(
    events: list[TraceEvent],
    papers_dir: str | Path | None = None,
    papers: dict[str, dict] | None = None,
    config: Config | None = None,
    header: dict | None = None,
) -> ReplayResult:
    return ReplayRunner(
        events, papers_dir=papers_dir, papers=papers, config=config, header=header
    ).run()
