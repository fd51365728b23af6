"""Question generation: prompt assembly, response parsing, artifact persistence.

Prompt builders are pure functions — no clock, randomness, or store access —
so fixed inputs always produce byte-identical prompts. Generation persists
its three artifacts, their generation metadata, and creation provenance
records in one atomic batch: a failed task leaves nothing behind.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Optional

from .config import Config
from .context import ContextAssembler, render_knowledge_block
from .errors import (
    ArtifactDeletedError,
    ContractViolationError,
    GatewayRetryableError,
    InvariantViolation,
    NotFoundError,
    ParseError,
)
from .gateway import Gateway
from .ledger import EditLedger
from .models import (
    EditRecord,
    EditType,
    EntityType,
    GenerationMetadata,
    PaperRecord,
    Participant,
    ResearchQuestionArtifact,
)
from .prompts import GENERATION_TEMPLATE, REGENERATION_TEMPLATE, fill, load_template
from .serde import new_id, utcnow
from .storage import Store

logger = logging.getLogger(__name__)

FIELD_SCOPES = ("question", "contribution", "both")

_ITEM_RE = re.compile(r"(?m)^[ \t]{0,3}(?:#{1,4}[ \t]*)?(?:\*\*)?(\d{1,2})[.)][ \t*]*")
_CONTRIBUTION_RE = re.compile(
    r"(?im)^[ \t]*(?:\*\*)?contribution(?:[ \t]+summary)?(?:\*\*)?[ \t]*[:\-][ \t]*"
)
_QUESTION_LABEL_RE = re.compile(r"(?i)^[ \t]*(?:\*\*)?question(?:\*\*)?[ \t]*[:\-][ \t]*")
_EMPHASIS_RE = re.compile(r"(\*\*|__|##+)")


@dataclass(frozen=True)
class GeneratedQuestion:
    question: str
    contribution: str


def resolve_knowledge_inclusion(
    policy: str, participant_order: int, knowledge_block: str
) -> tuple[bool, str]:
    """Decide whether the accumulated-knowledge block enters the prompt.

    Returns (include, rule_label); the label lands in generation metadata so
    every stored prompt records which rule fired.
    """
    if not knowledge_block:
        return False, "excluded"
    if participant_order > 1:
        return True, "participant_order>1"
    if policy == "any_knowledge":
        return True, "any_knowledge"
    return False, "excluded"


def build_generation_prompt(
    paper: PaperRecord,
    knowledge_block: str,
    participant_order: int,
    question_count: int = 3,
    domain: str = "Visualization Literacy",
    include_policy: str = "participant_order",
) -> str:
    """Generation prompt; pure and byte-deterministic.

    The knowledge block enters per ``resolve_knowledge_inclusion``; the
    default policy includes it only for participants beyond the first.
    """
    if not paper.full_text:
        raise InvariantViolation(["paper full_text must be non-empty before generation"])
    include, _ = resolve_knowledge_inclusion(include_policy, participant_order, knowledge_block)
    context = ""
    if include:
        context = (
            knowledge_block
            + "\n\nBased on the patterns above, generate questions that reflect these"
            " improvements and refinements.\n\n"
        )
    return fill(
        load_template(GENERATION_TEMPLATE),
        {
            "domain": domain,
            "question_count": str(question_count),
            "paper_title": paper.title,
            "paper_abstract": paper.abstract,
            "paper_full_text": paper.full_text,
            "knowledge_context": context,
        },
    )


def _strip_emphasis(text: str) -> str:
    return _EMPHASIS_RE.sub("", text)


def parse_generation_response(raw: str, expected_count: int = 3) -> list[GeneratedQuestion]:
    """Extract exactly ``expected_count`` question/contribution pairs.

    Tolerates markdown emphasis, headers, and prose before the numbered
    list. A wrong item count raises ContractViolationError; an item whose
    parts cannot be separated raises ParseError. Both are retryable.
    """
    matches = list(_ITEM_RE.finditer(raw))
    if len(matches) != expected_count:
        raise ContractViolationError(
            f"expected {expected_count} numbered questions, found {len(matches)}"
        )
    pairs: list[GeneratedQuestion] = []
    for i, match in enumerate(matches):
        start = match.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(raw)
        body = raw[start:end].strip()
        split = _CONTRIBUTION_RE.search(body)
        if split:
            question_part = body[: split.start()]
            contribution_part = body[split.end() :]
        else:
            lines = [l for l in body.splitlines() if l.strip()]
            if len(lines) < 2:
                raise ParseError(f"item {i + 1} has no contribution part")
            question_part, contribution_part = lines[0], "\n".join(lines[1:])
        question = _strip_emphasis(_QUESTION_LABEL_RE.sub("", question_part.strip())).strip()
        contribution = _strip_emphasis(contribution_part.strip()).strip()
        if not question or not contribution:
            raise ParseError(f"item {i + 1} is missing question or contribution text")
        pairs.append(GeneratedQuestion(question=question, contribution=contribution))
    return pairs


def build_regeneration_prompt(
    current_question: str,
    current_contribution: str,
    user_prompt: str,
    knowledge_block: str,
    field_scope: str = "question",
    participant_order: int = 1,
    domain: str = "Visualization Literacy",
    include_policy: str = "participant_order",
) -> str:
    """Focused regeneration prompt; pure, mirrors the generation injection."""
    if field_scope not in FIELD_SCOPES:
        raise InvariantViolation([f"field_scope {field_scope!r} outside {FIELD_SCOPES}"])
    include, _ = resolve_knowledge_inclusion(include_policy, participant_order, knowledge_block)
    context = knowledge_block + "\n\n" if include else ""
    scope_text = {
        "question": "research question",
        "contribution": "contribution summary",
        "both": "research question and contribution summary",
    }[field_scope]
    response_format = {
        "question": "Respond with the revised question text only.",
        "contribution": "Respond with the revised contribution text only.",
        "both": (
            "Respond with two labeled lines:\n"
            "Question: the revised question\n"
            "Contribution: the revised contribution"
        ),
    }[field_scope]
    return fill(
        load_template(REGENERATION_TEMPLATE),
        {
            "domain": domain,
            "current_question": current_question,
            "current_contribution": current_contribution,
            "knowledge_context": context,
            "user_prompt": user_prompt,
            "field_scope": scope_text,
            "response_format": response_format,
        },
    )


def parse_regeneration_response(raw: str, field_scope: str) -> dict[str, str]:
    """Map of field name to revised text for the requested scope."""
    text = raw.strip()
    if text.startswith("```"):
        text = text.strip("`").strip()
    if field_scope == "both":
        question_match = re.search(r"(?im)^[ \t]*question[ \t]*:[ \t]*(.+)$", text)
        contribution_match = re.search(
            r"(?im)^[ \t]*contribution[ \t]*:[ \t]*(.+(?:\n(?!question[ \t]*:).*)*)", text
        )
        if not question_match or not contribution_match:
            raise ParseError("regeneration response missing Question/Contribution labels")
        return {
            "question": question_match.group(1).strip(),
            "contribution": contribution_match.group(1).strip(),
        }
    value = _QUESTION_LABEL_RE.sub("", text) if field_scope == "question" else text
    if field_scope == "contribution":
        value = _CONTRIBUTION_RE.sub("", value)
    value = value.strip()
    if not value:
        raise ParseError("regeneration response is empty")
    return {field_scope: value}


class Generator:
    def __init__(
        self,
        store: Store,
        gateway: Gateway,
        config: Config | None = None,
        id_factory: Callable[[], str] = new_id,
        clock: Callable[[], datetime] = utcnow,
    ) -> None:
        self.store = store
        self.gateway = gateway
        self.config = config or Config()
        self.assembler = ContextAssembler(store, self.config)
        self.ledger = EditLedger(store, id_factory=id_factory, clock=clock)
        self.id_factory = id_factory
        self.clock = clock

    def _complete_with_retries(self, prompt: str, parse, task_id: str | None):
        attempts = 1 + self.config.parse_retry_limit
        last_error: Exception | None = None
        for _ in range(attempts):
            try:
                response = self.gateway.complete(self.gateway.request(prompt), task_id=task_id)
            except GatewayRetryableError as exc:
                last_error = exc
                continue
            try:
                return parse(response.text), response
            except (ParseError, ContractViolationError) as exc:
                last_error = exc
                continue
        assert last_error is not None
        raise last_error

    def generate_question_set(
        self,
        paper_id: str,
        session_id: str,
        participant: Participant,
        count: int | None = None,
        task_id: str | None = None,
    ) -> list[ResearchQuestionArtifact]:
        """Generate and persist a question set for a fetched paper.

        All-or-nothing: artifacts, metadata, and creation records land in
        one atomic batch or not at all.
        """
        artifacts, batch = self.prepare_question_set(
            paper_id, session_id, participant, count=count, task_id=task_id
        )
        self.store.put_many(batch)
        return artifacts

    def prepare_question_set(
        self,
        paper_id: str,
        session_id: str,
        participant: Participant,
        count: int | None = None,
        task_id: str | None = None,
    ) -> tuple[list[ResearchQuestionArtifact], list]:
        """Run the generation call and build the persistence batch.

        Nothing is written; the caller commits the returned batch (the
        orchestrator does so atomically with task completion).
        """
        count = count or self.config.question_count
        paper = self.store.get_paper(paper_id)
        if paper is None:
            raise NotFoundError(f"paper {paper_id} not found")
        if not paper.full_text:
            raise InvariantViolation(["paper full_text must be non-empty before generation"])
        if self.store.get_session(session_id) is None:
            raise NotFoundError(f"session {session_id} not found")

        block = render_knowledge_block(
            self.assembler.assemble_context(participant.id, participant.project_id)
        )
        _, rule = resolve_knowledge_inclusion(
            self.config.knowledge_inclusion, participant.order_index, block
        )
        prompt = build_generation_prompt(
            paper,
            block,
            participant.order_index,
            question_count=count,
            domain=self.config.domain,
            include_policy=self.config.knowledge_inclusion,
        )
        pairs, response = self._complete_with_retries(
            prompt, lambda text: parse_generation_response(text, expected_count=count), task_id
        )

        existing_positions = [
            a.position for a in self.store.artifacts_by_session(session_id)
        ]
        offset = max(existing_positions, default=0)
        now = self.clock()
        batch: list = []
        artifacts: list[ResearchQuestionArtifact] = []
        for i, pair in enumerate(pairs, start=1):
            artifact = ResearchQuestionArtifact.fresh(
                id=self.id_factory(),
                paper_id=paper_id,
                session_id=session_id,
                position=offset + i,
                question=pair.question,
                contribution=pair.contribution,
                created_at=now,
            )
            artifacts.append(artifact)
            batch.append(artifact)
            batch.append(
                GenerationMetadata(
                    entity_id=artifact.id,
                    generation_prompt=prompt,
                    model_id=self.config.model_id,
                    temperature=self.config.temperature,
                    max_tokens=self.config.max_tokens,
                    trace_id=response.trace_id,
                    created_at=now,
                    knowledge_inclusion=rule,
                )
            )
            batch.append(
                EditRecord(
                    id=self.id_factory(),
                    entity_type=EntityType.RESEARCH_QUESTION,
                    entity_id=artifact.id,
                    edit_type=EditType.CONTEXT_GENERATION,
                    field_name="question",
                    original_value="",
                    new_value=pair.question,
                    created_at=now,
                )
            )
        return artifacts, batch

    def regenerate_entity(
        self,
        artifact_id: str,
        field_scope: str,
        user_prompt: str,
        participant: Participant | None = None,
        task_id: str | None = None,
    ) -> tuple[ResearchQuestionArtifact, list[EditRecord]]:
        """Prompt-guided rewrite of one artifact's fields.

        On gateway failure the artifact is unchanged and the error
        propagates; on success each rewritten field gets one
        prompt_regeneration record (a no-op rewrite is still recorded).
        """
        artifact = self.store.get_artifact(artifact_id)
        if artifact is None:
            raise NotFoundError(f"artifact {artifact_id} not found")
        if artifact.deleted:
            raise ArtifactDeletedError(f"artifact {artifact_id} is deleted")
        if participant is None:
            session = self.store.get_session(artifact.session_id)
            participant = (
                self.store.get_participant(session.participant_id) if session else None
            )
        if participant is None:
            raise NotFoundError(f"artifact {artifact_id} has no resolvable participant")

        block = render_knowledge_block(
            self.assembler.assemble_context(participant.id, participant.project_id)
        )
        prompt = build_regeneration_prompt(
            artifact.current_question,
            artifact.current_contribution,
            user_prompt,
            block,
            field_scope=field_scope,
            participant_order=participant.order_index,
            domain=self.config.domain,
            include_policy=self.config.knowledge_inclusion,
        )
        values, _ = self._complete_with_retries(
            prompt, lambda text: parse_regeneration_response(text, field_scope), task_id
        )
        records: list[EditRecord] = []
        updated = artifact
        for field_name, new_value in values.items():
            record, updated = self.ledger.record_edit(
                artifact_id,
                EditType.PROMPT_REGENERATION,
                field_name,
                original_value=(
                    updated.current_question
                    if field_name == "question"
                    else updated.current_contribution
                ),
                new_value=new_value,
                user_prompt=user_prompt,
            )
            records.append(record)
        return updated, records
