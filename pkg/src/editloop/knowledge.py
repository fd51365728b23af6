"""Knowledge extraction: turns edit deltas into categorized, deduplicated,
provenance-linked entries.

The pass over a project visits every artifact with unprocessed edits in
creation order. Artifacts whose four distance fields are all zero are
closed out without any gateway call; the rest go through one completion
each, with candidates validated, deduplicated against same-category
entries, and persisted before the processed flags flip.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Iterable, Optional

from .config import Config
from .errors import ContractViolationError, ParseError
from .gateway import Gateway
from .models import (
    CATEGORY_VALUES,
    KnowledgeCategory,
    KnowledgeEntry,
    Participant,
    ResearchQuestionArtifact,
    Scope,
)
from .prompts import EXTRACTION_TEMPLATE, fill, load_template
from .serde import new_id, utcnow
from .storage import Store

logger = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n(.*?)```", re.DOTALL)
_WORD_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class ExtractionCandidate:
    text: str
    category: KnowledgeCategory


def build_extraction_prompt(
    initial_question: str,
    initial_contribution: str,
    final_question: str,
    final_contribution: str,
    existing_knowledge: Iterable[KnowledgeEntry] = (),
    domain: str = "Visualization Literacy",
) -> str:
    """Extraction prompt text; byte-deterministic for fixed inputs."""
    existing = list(existing_knowledge)
    section = ""
    if existing:
        lines = [f"- [{e.category.value}] {e.text}" for e in existing]
        section = "EXISTING KNOWLEDGE:\n" + "\n".join(lines) + "\n\n"
    return fill(
        load_template(EXTRACTION_TEMPLATE),
        {
            "domain": domain,
            "initial_question": initial_question,
            "initial_contribution": initial_contribution,
            "final_question": final_question,
            "final_contribution": final_contribution,
            "existing_knowledge_section": section,
        },
    )


def _strip_fences(raw: str) -> str:
    text = raw.strip()
    match = _FENCE_RE.search(text)
    if match:
        return match.group(1).strip()
    return text


def parse_extraction_response(raw: str, max_entries: int = 3) -> list[ExtractionCandidate]:
    """Parse a completion into 0..max_entries candidates.

    Malformed JSON raises ParseError (retryable by callers); more than
    ``max_entries`` objects raises ContractViolationError; candidates with
    an unknown category or missing fields are dropped with a warning.
    """
    text = _strip_fences(raw)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"extraction response is not valid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise ParseError("extraction response must be a JSON array")
    if len(payload) > max_entries:
        raise ContractViolationError(
            f"extraction returned {len(payload)} entries; contract allows at most {max_entries}"
        )
    candidates: list[ExtractionCandidate] = []
    for item in payload:
        if not isinstance(item, dict):
            logger.warning("extraction candidate is not an object; dropped: %r", item)
            continue
        text_value = item.get("text")
        category_value = item.get("category")
        if not isinstance(text_value, str) or not text_value.strip():
            logger.warning("extraction candidate missing text; dropped: %r", item)
            continue
        if category_value not in CATEGORY_VALUES:
            logger.warning(
                "extraction candidate category %r outside closed set; dropped", category_value
            )
            continue
        candidates.append(
            ExtractionCandidate(
                text=text_value.strip(), category=KnowledgeCategory(category_value)
            )
        )
    return candidates


def _token_set(text: str) -> set[str]:
    return set(_WORD_RE.findall(text.lower()))


def jaccard_similarity(a: str, b: str) -> float:
    """Word-level Jaccard over lowercased, punctuation-stripped token sets."""
    tokens_a, tokens_b = _token_set(a), _token_set(b)
    if not tokens_a and not tokens_b:
        return 1.0
    union = tokens_a | tokens_b
    if not union:
        return 0.0
    return len(tokens_a & tokens_b) / len(union)


def is_duplicate(
    candidate: ExtractionCandidate,
    existing: Iterable[KnowledgeEntry],
    threshold: float = 0.85,
) -> bool:
    """True iff a same-category entry is lexically close to the candidate."""
    for entry in existing:
        if entry.category != candidate.category:
            continue
        if jaccard_similarity(candidate.text, entry.text) >= threshold:
            return True
    return False


@dataclass
class ExtractionSummary:
    artifacts_seen: int = 0
    artifacts_called: int = 0
    entries_added: int = 0

    def merge(self, other: "ExtractionSummary") -> None:
        self.artifacts_seen += other.artifacts_seen
        self.artifacts_called += other.artifacts_called
        self.entries_added += other.entries_added


class KnowledgeEngine:
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
        self.id_factory = id_factory
        self.clock = clock

    def extract_for_question(
        self,
        artifact: ResearchQuestionArtifact,
        participant: Participant,
        scope: Scope = Scope.PROJECT,
        task_id: str | None = None,
    ) -> list[KnowledgeEntry]:
        """Run extraction for one artifact; persists survivors and flips flags.

        Precondition: the artifact has not been processed. Zero-distance
        artifacts are closed out without any gateway call. On gateway or
        parse failure the artifact is left unprocessed and the error
        propagates.
        """
        if artifact.knowledge_processed:
            raise ContractViolationError(f"artifact {artifact.id} already processed")
        pending_edit_ids = [
            e.id for e in self.store.edits_for_entity(artifact.id) if not e.processed
        ]
        if not artifact.has_changes():
            with self.store.transaction():
                if self.store.set_artifact_knowledge_processed(
                    artifact.id, expected=False, value=True
                ):
                    if pending_edit_ids:
                        self.store.mark_processed(pending_edit_ids)
            return []

        existing = self.store.knowledge_by_scope(participant.id, participant.project_id)
        prompt = build_extraction_prompt(
            artifact.initial_question,
            artifact.initial_contribution,
            artifact.current_question,
            artifact.current_contribution,
            existing_knowledge=existing,
            domain=self.config.domain,
        )
        response = self.gateway.complete(self.gateway.request(prompt), task_id=task_id)
        candidates = parse_extraction_response(
            response.text, max_entries=self.config.max_entries_per_extraction
        )

        accepted: list[KnowledgeEntry] = []
        for candidate in candidates:
            if is_duplicate(candidate, existing, self.config.duplicate_threshold):
                logger.info("dropping duplicate insight: %.60s", candidate.text)
                continue
            entry = KnowledgeEntry(
                id=self.id_factory(),
                text=candidate.text,
                category=candidate.category,
                scope=scope,
                scope_id=self._scope_id(scope, participant),
                source_question_ids=[artifact.id],
                created_by=participant.id,
                created_at=self.clock(),
            )
            accepted.append(entry)
            existing = existing + [entry]  # later candidates dedup against it
        with self.store.transaction():
            # Claim the artifact before persisting: the processed-flag CAS is
            # what makes concurrent extraction at-most-once per artifact.
            claimed = self.store.set_artifact_knowledge_processed(
                artifact.id, expected=False, value=True
            )
            if not claimed:
                logger.info("artifact %s already claimed by another extractor", artifact.id)
                return []
            if accepted:
                self.store.put_many(accepted)
            if pending_edit_ids:
                self.store.mark_processed(pending_edit_ids)
        return accepted

    def _scope_id(self, scope: Scope, participant: Participant) -> str | None:
        if scope == Scope.USER:
            return participant.id
        if scope == Scope.PROJECT:
            return participant.project_id
        return None

    def extraction_pass(
        self,
        project_id: str,
        scope: Scope = Scope.PROJECT,
        task_id: str | None = None,
        log: Callable[[str], None] | None = None,
    ) -> ExtractionSummary:
        """Process every artifact with unprocessed edits in the project."""
        summary = ExtractionSummary()
        pending = self.store.query_unprocessed_edits(project_id)
        seen: list[str] = []
        for record in pending:
            if record.entity_id not in seen:
                seen.append(record.entity_id)
        for artifact_id in seen:
            artifact = self.store.get_artifact(artifact_id)
            if artifact is None or artifact.knowledge_processed:
                continue
            session = self.store.get_session(artifact.session_id)
            participant = self.store.get_participant(session.participant_id) if session else None
            if participant is None:
                logger.warning("artifact %s has no resolvable participant; skipped", artifact_id)
                continue
            summary.artifacts_seen += 1
            called = artifact.has_changes()
            entries = self.extract_for_question(
                artifact, participant, scope=scope, task_id=task_id
            )
            summary.artifacts_called += 1 if called else 0
            summary.entries_added += len(entries)
            if log is not None:
                log(
                    f"extracted {len(entries)} entries from artifact {artifact_id}"
                    if called
                    else f"artifact {artifact_id} unchanged; no extraction call"
                )
        return summary
