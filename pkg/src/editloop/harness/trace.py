"""Replay trace format: JSON-lines, one event per line.

Event types and payloads:

    session_start  participant_id, participant_order, paper_id, session_id,
                   project_id
    generate       session_id, questions: [{question, contribution}, ...]
    rate           session_id, position, rating (1..5)
    direct_edit    session_id, position, field (question|contribution),
                   new_value
    prompt_edit    session_id, position, field (question|contribution|both),
                   user_prompt, new_value (or new_question/new_contribution)
    delete         session_id, position
    session_end    session_id, knowledge: optional
                   [{position, entries: [{text, category}, ...]}, ...]

Every event carries ``ts`` (RFC 3339). ``knowledge`` on session_end holds
the recorded extraction completions for that session's artifacts; the
replay driver feeds them to the mock gateway when the extraction pass for
those artifacts runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable

from ..errors import TraceFormatError
from ..models import CATEGORY_VALUES
from ..serde import parse_rfc3339

EVENT_TYPES = (
    "session_start",
    "generate",
    "rate",
    "direct_edit",
    "prompt_edit",
    "delete",
    "session_end",
)

_REQUIRED: dict[str, tuple[str, ...]] = {
    "session_start": (
        "participant_id",
        "participant_order",
        "paper_id",
        "session_id",
        "project_id",
    ),
    "generate": ("session_id", "questions"),
    "rate": ("session_id", "position", "rating"),
    "direct_edit": ("session_id", "position", "field", "new_value"),
    "prompt_edit": ("session_id", "position", "field", "user_prompt"),
    "delete": ("session_id", "position"),
    "session_end": ("session_id",),
}


@dataclass
class TraceEvent:
    index: int
    event: str
    ts: datetime
    payload: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.payload[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.payload.get(key, default)


def _check_positions(index: int, event: str, payload: dict) -> None:
    position = payload.get("position")
    if position is not None and (not isinstance(position, int) or position < 1):
        raise TraceFormatError(index, f"{event}: position must be a positive integer")


def parse_event(index: int, data: Any) -> TraceEvent:
    if not isinstance(data, dict):
        raise TraceFormatError(index, "event must be a JSON object")
    event = data.get("event")
    if event not in EVENT_TYPES:
        raise TraceFormatError(index, f"unknown event type {event!r}")
    if "ts" not in data:
        raise TraceFormatError(index, "missing ts")
    try:
        ts = parse_rfc3339(data["ts"])
    except ValueError as exc:
        raise TraceFormatError(index, f"bad ts: {exc}")
    payload = {k: v for k, v in data.items() if k not in ("event", "ts")}
    for name in _REQUIRED[event]:
        if name not in payload:
            raise TraceFormatError(index, f"{event}: missing field {name!r}")
    _check_positions(index, event, payload)

    if event == "generate":
        questions = payload["questions"]
        if not isinstance(questions, list) or not questions:
            raise TraceFormatError(index, "generate: questions must be a non-empty list")
        for item in questions:
            if not isinstance(item, dict) or not item.get("question") or not item.get(
                "contribution"
            ):
                raise TraceFormatError(
                    index, "generate: each question needs question and contribution text"
                )
    if event == "rate" and payload["rating"] not in (1, 2, 3, 4, 5):
        raise TraceFormatError(index, "rate: rating must be in 1..5")
    if event == "direct_edit" and payload["field"] not in ("question", "contribution"):
        raise TraceFormatError(index, "direct_edit: field must be question or contribution")
    if event == "prompt_edit":
        if payload["field"] not in ("question", "contribution", "both"):
            raise TraceFormatError(
                index, "prompt_edit: field must be question, contribution, or both"
            )
        if payload["field"] == "both":
            if "new_question" not in payload or "new_contribution" not in payload:
                raise TraceFormatError(
                    index, "prompt_edit: both-scope needs new_question and new_contribution"
                )
        elif "new_value" not in payload:
            raise TraceFormatError(index, "prompt_edit: missing field 'new_value'")
    if event == "session_end":
        for item in payload.get("knowledge") or []:
            if not isinstance(item, dict) or "position" not in item or "entries" not in item:
                raise TraceFormatError(
                    index, "session_end: knowledge items need position and entries"
                )
            for entry in item["entries"]:
                if not isinstance(entry, dict) or not entry.get("text"):
                    raise TraceFormatError(index, "session_end: entry missing text")
                if entry.get("category") not in CATEGORY_VALUES:
                    raise TraceFormatError(
                        index,
                        f"session_end: category {entry.get('category')!r} outside closed set",
                    )
    return TraceEvent(index=index, event=event, ts=ts, payload=payload)


def validate_events(events: list[TraceEvent]) -> None:
    """Cross-event checks: session lifecycles and per-session time order."""
    seen_sessions: dict[str, TraceEvent] = {}
    ended: set[str] = set()
    last_ts: dict[str, datetime] = {}
    for event in events:
        if event.event == "session_start":
            session_id = event["session_id"]
            if session_id in seen_sessions:
                raise TraceFormatError(event.index, f"session {session_id} started twice")
            seen_sessions[session_id] = event
        else:
            session_id = event["session_id"]
            if session_id not in seen_sessions:
                raise TraceFormatError(
                    event.index, f"event references unknown session {session_id}"
                )
            if session_id in ended:
                raise TraceFormatError(
                    event.index, f"event after session_end for session {session_id}"
                )
            if event.event == "session_end":
                ended.add(session_id)
        previous = last_ts.get(session_id)
        if previous is not None and event.ts < previous:
            raise TraceFormatError(
                event.index, f"session {session_id} events not time-ordered"
            )
        last_ts[session_id] = event.ts


def load_trace(path: str | Path) -> list[TraceEvent]:
    events: list[TraceEvent] = []
    with open(path, encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(index, f"invalid JSON: {exc}")
            events.append(parse_event(index, data))
    validate_events(events)
    return events


def parse_trace_lines(lines: Iterable[dict]) -> list[TraceEvent]:
    events = [parse_event(index, data) for index, data in enumerate(lines)]
    validate_events(events)
    return events


def dump_trace(events: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
