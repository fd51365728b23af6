"""Canonical serialization helpers: RFC 3339 timestamps and id generation."""

from __future__ import annotations

import uuid
from datetime import datetime, timezone


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def new_id() -> str:
    return uuid.uuid4().hex


def rfc3339(dt: datetime) -> str:
    """Render a timezone-aware datetime as an RFC 3339 string."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.isoformat()


def parse_rfc3339(value: str) -> datetime:
    # Python 3.10's fromisoformat rejects the Z suffix.
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    dt = datetime.fromisoformat(value)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt
