"""editloop: capture expert edits, distill domain knowledge, reuse it in
subsequent generations.

The loop: artifacts are generated with accumulated context, users modify
them (inline edits, prompt-guided rewrites, ratings, deletions), the
deltas between initial and current states are distilled into categorized
knowledge entries with provenance, and those entries enrich every later
generation prompt.
"""

from .config import Config
from .context import AdaptiveContext, ContextAssembler, render_knowledge_block
from .distances import DiffHunk, compute_diff, edit_distance
from .gateway import (
    CompletionRequest,
    CompletionResponse,
    Gateway,
    HttpChatProvider,
    MockProvider,
    TraceRecord,
    configure_mock,
)
from .generator import (
    GeneratedQuestion,
    Generator,
    build_generation_prompt,
    parse_generation_response,
)
from .knowledge import (
    ExtractionCandidate,
    KnowledgeEngine,
    build_extraction_prompt,
    is_duplicate,
    parse_extraction_response,
)
from .ledger import EditLedger, SessionMetrics
from .models import (
    AgentTask,
    EditRecord,
    EditType,
    EntityType,
    EvaluationSession,
    GenerationMetadata,
    KnowledgeCategory,
    KnowledgeEntry,
    PaperRecord,
    Participant,
    ResearchQuestionArtifact,
    Scope,
    TaskLogEntry,
    TaskStatus,
    TaskType,
    replay_state,
    validate_knowledge_entry,
)
from .runtime import Runtime, build_runtime, sequential_ids
from .storage import Store, StoreQuery
from .storage.memory import MemoryStore
from .storage.sqlite import SqliteStore

__version__ = "0.1.0"
