"""Document fetchers: populate paper full text before generation.

Live literature APIs are out of scope; the stub fetcher synthesizes
deterministic text and the directory fetcher reads local files. Every
fetch appends one api_logs row.
"""

from __future__ import annotations

import json
from datetime import datetime
from pathlib import Path
from typing import Callable, Protocol

from .errors import NotFoundError
from .models import ApiLogRecord, PaperRecord
from .serde import new_id, utcnow
from .storage import Store


class DocumentFetcher(Protocol):
    provider: str

    def fetch(self, paper: PaperRecord) -> str:
        ...


class StubFetcher:
    """Deterministic stand-in for a literature-retrieval API."""

    provider = "stub"

    def __init__(self, mapping: dict[str, str] | None = None) -> None:
        self.mapping = dict(mapping or {})

    def fetch(self, paper: PaperRecord) -> str:
        if paper.id in self.mapping:
            return self.mapping[paper.id]
        abstract = paper.abstract or "No abstract on record."
        return f"{paper.title}\n\n{abstract}\n\n[stub full text for {paper.id}]"


class DirectoryFetcher:
    """Reads ``<paper_id>.txt`` or ``<paper_id>.json`` from a local directory."""

    provider = "directory"

    def __init__(self, papers_dir: str | Path) -> None:
        self.papers_dir = Path(papers_dir)

    def fetch(self, paper: PaperRecord) -> str:
        txt = self.papers_dir / f"{paper.id}.txt"
        if txt.exists():
            return txt.read_text(encoding="utf-8")
        js = self.papers_dir / f"{paper.id}.json"
        if js.exists():
            data = json.loads(js.read_text(encoding="utf-8"))
            return data.get("full_text", "")
        raise NotFoundError(f"no document for paper {paper.id} in {self.papers_dir}")


def fetch_paper(
    store: Store,
    fetcher: DocumentFetcher,
    paper_id: str,
    task_id: str | None = None,
    id_factory: Callable[[], str] = new_id,
    clock: Callable[[], datetime] = utcnow,
) -> PaperRecord:
    paper = store.get_paper(paper_id)
    if paper is None:
        raise NotFoundError(f"paper {paper_id} not found")
    paper.full_text = fetcher.fetch(paper)
    if not paper.full_text:
        raise NotFoundError(f"fetcher returned empty text for paper {paper_id}")
    store.put(paper)
    store.put(
        ApiLogRecord(
            id=id_factory(),
            task_id=task_id,
            provider=fetcher.provider,
            search_terms=paper.title,
            papers_found=1,
            created_at=clock(),
        )
    )
    return paper
