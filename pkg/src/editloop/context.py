"""Context assembly: scoped knowledge ordering and prompt-block rendering.

Ordering is the precedence contract — user-scope entries first, then
project, then global, each by creation time with id tie-breaks. The
rendered block opens with the accumulated-knowledge header and groups
entry texts under the three category identifiers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .config import Config
from .models import SCOPE_RANK, KnowledgeCategory, KnowledgeEntry, Scope
from .storage import Store

logger = logging.getLogger(__name__)

KNOWLEDGE_BLOCK_HEADER = "ACCUMULATED KNOWLEDGE FROM PREVIOUS PARTICIPANTS:"

# Canonical render order for category groups.
CATEGORY_ORDER = (
    KnowledgeCategory.DOMAIN_TERMINOLOGY_EVOLUTION,
    KnowledgeCategory.METHODOLOGICAL_REFINEMENTS,
    KnowledgeCategory.CONCEPTUAL_DEPTH_CHANGES,
)


@dataclass
class AdaptiveContext:
    entries: list[KnowledgeEntry] = field(default_factory=list)
    category_counts: dict[str, int] = field(default_factory=dict)
    source_artifact_count: int = 0
    dropped: int = 0  # entries truncated away by a configured cap

    def __len__(self) -> int:
        return len(self.entries)


def _ordered(entries: list[KnowledgeEntry]) -> list[KnowledgeEntry]:
    return sorted(entries, key=lambda e: (SCOPE_RANK[e.scope], e.created_at.isoformat(), e.id))


def build_context(entries: list[KnowledgeEntry], cap: int | None = None) -> AdaptiveContext:
    ordered = _ordered(entries)
    dropped = 0
    if cap is not None and len(ordered) > cap:
        # Truncate in reverse precedence: oldest global first, then project,
        # then user, so the highest-precedence knowledge survives.
        keep = list(ordered)
        for scope in (Scope.GLOBAL, Scope.PROJECT, Scope.USER):
            while len(keep) > cap:
                victims = [e for e in keep if e.scope == scope]
                if not victims:
                    break
                oldest = min(victims, key=lambda e: (e.created_at.isoformat(), e.id))
                keep.remove(oldest)
                dropped += 1
                logger.warning(
                    "context cap %d: dropping %s-scope entry %s", cap, scope.value, oldest.id
                )
            if len(keep) <= cap:
                break
        ordered = keep
    counts = {category.value: 0 for category in KnowledgeCategory}
    sources: set[str] = set()
    for entry in ordered:
        counts[entry.category.value] += 1
        sources.update(entry.source_question_ids)
    return AdaptiveContext(
        entries=ordered,
        category_counts=counts,
        source_artifact_count=len(sources),
        dropped=dropped,
    )


def render_knowledge_block(context: AdaptiveContext) -> str:
    """Deterministic prompt block; empty context renders to the empty string."""
    if not context.entries:
        return ""
    lines = [KNOWLEDGE_BLOCK_HEADER, ""]
    for category in CATEGORY_ORDER:
        grouped = [e for e in context.entries if e.category == category]
        if not grouped:
            continue
        lines.append(f"{category.value}:")
        for entry in grouped:
            lines.append(f"- {entry.text}")
        lines.append("")
    return "\n".join(lines).rstrip("\n")


class ContextAssembler:
    def __init__(self, store: Store, config: Config | None = None) -> None:
        self.store = store
        self.config = config or Config()

    def assemble_context(self, participant_id: str, project_id: str) -> AdaptiveContext:
        entries = self.store.knowledge_by_scope(participant_id, project_id)
        return build_context(entries, cap=self.config.context_cap)

    def render_for(self, participant_id: str, project_id: str) -> str:
        return render_knowledge_block(self.assemble_context(participant_id, project_id))

    def knowledge_stats(self, project_id: str) -> dict:
        """Exact counts over the project's persisted entries."""
        entries = self.store.knowledge_for_project(project_id)
        per_category = {category.value: 0 for category in KnowledgeCategory}
        per_participant: dict[str, int] = {}
        for entry in entries:
            per_category[entry.category.value] += 1
            per_participant[entry.created_by] = per_participant.get(entry.created_by, 0) + 1
        return {
            "total": len(entries),
            "per_category": per_category,
            "per_participant": dict(sorted(per_participant.items())),
        }
