"""Runtime configuration. Every tunable the modules consume lives here."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Optional

# How the accumulated-knowledge block gets into generation prompts:
#   participant_order  — only for participants with order_index > 1
#   any_knowledge      — whenever the assembled block is non-empty
KNOWLEDGE_INCLUSION_POLICIES = ("participant_order", "any_knowledge")


@dataclass
class Config:
    model_id: str = "gemini-2.0-flash-lite"
    temperature: float = 0.7
    max_tokens: int = 2048
    gateway_timeout_s: float = 120.0
    max_inflight: int = 4
    duplicate_threshold: float = 0.85
    parse_retry_limit: int = 2  # retries beyond the first attempt
    max_attempts: int = 3
    worker_count: int = 2
    lease_timeout_s: float = 600.0
    poll_interval_s: float = 0.2
    poll_max_interval_s: float = 2.0
    knowledge_inclusion: str = "participant_order"
    context_cap: Optional[int] = None  # max entries injected; None = all
    domain: str = "Visualization Literacy"
    question_count: int = 3
    max_entries_per_extraction: int = 3

    def __post_init__(self) -> None:
        if self.knowledge_inclusion not in KNOWLEDGE_INCLUSION_POLICIES:
            raise ValueError(
                f"knowledge_inclusion must be one of {KNOWLEDGE_INCLUSION_POLICIES}"
            )

    @classmethod
    def from_env(cls, env: dict | None = None) -> "Config":
        env = os.environ if env is None else env
        kwargs = {}
        mapping: list[tuple[str, str, Callable]] = [
            ("EDITLOOP_MODEL_ID", "model_id", str),
            ("EDITLOOP_TEMPERATURE", "temperature", float),
            ("EDITLOOP_MAX_TOKENS", "max_tokens", int),
            ("EDITLOOP_GATEWAY_TIMEOUT_S", "gateway_timeout_s", float),
            ("EDITLOOP_MAX_INFLIGHT", "max_inflight", int),
            ("EDITLOOP_DUPLICATE_THRESHOLD", "duplicate_threshold", float),
            ("EDITLOOP_PARSE_RETRY_LIMIT", "parse_retry_limit", int),
            ("EDITLOOP_MAX_ATTEMPTS", "max_attempts", int),
            ("EDITLOOP_WORKER_COUNT", "worker_count", int),
            ("EDITLOOP_LEASE_TIMEOUT_S", "lease_timeout_s", float),
            ("EDITLOOP_KNOWLEDGE_INCLUSION", "knowledge_inclusion", str),
            ("EDITLOOP_CONTEXT_CAP", "context_cap", int),
            ("EDITLOOP_DOMAIN", "domain", str),
        ]
        for env_name, attr, cast in mapping:
            if env_name in env and env[env_name] != "":
                kwargs[attr] = cast(env[env_name])
        return cls(**kwargs)
