"""Service wiring: one place that owns store, gateway, and pipeline objects."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Optional

from .config import Config
from .context import ContextAssembler
from .fetcher import DocumentFetcher, StubFetcher
from .gateway import Gateway, MockProvider, Provider
from .generator import Generator
from .knowledge import KnowledgeEngine
from .ledger import EditLedger
from .serde import new_id, utcnow
from .storage import Store
from .storage.memory import MemoryStore


@dataclass
class Runtime:
    store: Store
    gateway: Gateway
    config: Config
    fetcher: DocumentFetcher
    id_factory: Callable[[], str] = new_id
    clock: Callable[[], datetime] = utcnow
    ledger: EditLedger = field(init=False)
    assembler: ContextAssembler = field(init=False)
    engine: KnowledgeEngine = field(init=False)
    generator: Generator = field(init=False)

    def __post_init__(self) -> None:
        self.ledger = EditLedger(self.store, id_factory=self.id_factory, clock=self.clock)
        self.assembler = ContextAssembler(self.store, self.config)
        self.engine = KnowledgeEngine(
            self.store,
            self.gateway,
            self.config,
            id_factory=self.id_factory,
            clock=self.clock,
        )
        self.generator = Generator(
            self.store,
            self.gateway,
            self.config,
            id_factory=self.id_factory,
            clock=self.clock,
        )


def sequential_ids(prefix: str = "e") -> Callable[[], str]:
    """Deterministic id factory for replays and simulations."""
    counter = {"n": 0}

    def make() -> str:
        counter["n"] += 1
        return f"{prefix}{counter['n']:05d}"

    return make


def build_runtime(
    store: Store | None = None,
    provider: Provider | None = None,
    config: Config | None = None,
    fetcher: DocumentFetcher | None = None,
    trace_path=None,
    id_factory: Callable[[], str] = new_id,
    clock: Callable[[], datetime] = utcnow,
) -> Runtime:
    store = store if store is not None else MemoryStore()
    config = config or Config()
    provider = provider if provider is not None else MockProvider(echo=True)
    gateway = Gateway(
        provider,
        store=store,
        config=config,
        trace_path=trace_path,
        id_factory=id_factory,
        clock=clock,
    )
    return Runtime(
        store=store,
        gateway=gateway,
        config=config,
        fetcher=fetcher if fetcher is not None else StubFetcher(),
        id_factory=id_factory,
        clock=clock,
    )
