from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from editloop.models import (
    EvaluationSession,
    PaperRecord,
    Participant,
    ResearchQuestionArtifact,
)
from editloop.storage.memory import MemoryStore
from editloop.storage.sqlite import SqliteStore

T0 = datetime(2026, 1, 5, 9, 0, 0, tzinfo=timezone.utc)


def ts(minutes: float = 0.0) -> datetime:
    return T0 + timedelta(minutes=minutes)


@pytest.fixture(params=["memory", "sqlite"])
def store(request, tmp_path):
    if request.param == "memory":
        yield MemoryStore()
    else:
        backend = SqliteStore(tmp_path / "test.db")
        yield backend
        backend.close()


@pytest.fixture
def mem_store():
    return MemoryStore()


def seed_world(store, project_id="proj", participant_id="p1", order_index=1, with_artifacts=True):
    """Paper + participant + session + three fresh artifacts."""
    paper = PaperRecord(
        id="paper-1",
        title="Looking at Charts",
        abstract="How people read charts.",
        full_text="Full text of the chart-reading study.",
        created_at=ts(0),
    )
    participant = Participant(
        id=participant_id, project_id=project_id, order_index=order_index
    )
    session = EvaluationSession(
        id=f"{participant_id}-s1",
        participant_id=participant_id,
        paper_id=paper.id,
        started_at=ts(1),
    )
    artifacts = [
        ResearchQuestionArtifact.fresh(
            id=f"{participant_id}-q{i}",
            paper_id=paper.id,
            session_id=session.id,
            position=i,
            question=f"How does factor {i} change reading accuracy?",
            contribution=f"Would quantify the effect of factor {i}.",
            created_at=ts(2),
        )
        for i in (1, 2, 3)
    ]
    if not with_artifacts:
        artifacts = []
    store.put_many([paper, participant, session] + artifacts)
    return paper, participant, session, artifacts
