"""Sequential-participant simulation driven by a declarative script.

The script names papers, participants (in order), their recorded
generations, edits, ratings, and recorded extraction outputs. Expansion
produces a replay trace with synthetic timestamps; the run then checks the
accumulation contract: every generation prompt for a participant beyond
the first contains the text of every entry accumulated when the prompt was
built, and the first participant's prompts carry no accumulated-knowledge
header.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from ..config import Config
from ..context import KNOWLEDGE_BLOCK_HEADER
from ..errors import ContainmentViolation, ScriptExhaustionError, TraceFormatError
from ..serde import rfc3339
from .replay import ReplayResult, ReplayRunner
from .report import ols_slope
from .trace import TraceEvent, parse_trace_lines

BASE_TS = datetime(2026, 1, 5, 9, 0, 0, tzinfo=timezone.utc)


@dataclass
class SimulationResult:
    replay: ReplayResult
    containment_checked: int  # prompts checked against accumulated entries

    @property
    def report(self):
        return self.replay.report


def load_script(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def expand_script(script: dict) -> tuple[list[dict], dict[str, dict]]:
    """Turn a simulation script into trace event dicts plus paper bodies."""
    project_id = script.get("project_id", "sim")
    papers = {p["id"]: p for p in script.get("papers", [])}
    cursor = BASE_TS
    events: list[dict] = []

    def emit(event: str, **payload) -> None:
        nonlocal cursor
        events.append({"event": event, "ts": rfc3339(cursor), **payload})
        cursor += timedelta(seconds=1)

    participants = sorted(script["participants"], key=lambda p: p["order"])
    for participant in participants:
        for session_index, session in enumerate(participant["sessions"], start=1):
            session_id = session.get(
                "session_id", f"{participant['id']}-s{session_index}"
            )
            start = cursor
            emit(
                "session_start",
                participant_id=participant["id"],
                participant_order=participant["order"],
                paper_id=session["paper_id"],
                session_id=session_id,
                project_id=project_id,
            )
            generation = session["generation"]
            emit("generate", session_id=session_id, questions=generation)
            # Track field state so edits can use append/set shorthand.
            state: dict[tuple[int, str], str] = {}
            for position, pair in enumerate(generation, start=1):
                state[(position, "question")] = pair["question"]
                state[(position, "contribution")] = pair["contribution"]
            for position, rating in enumerate(session.get("ratings", []), start=1):
                emit("rate", session_id=session_id, position=position, rating=rating)
            for edit in session.get("edits", []):
                position = edit["position"]
                if edit["type"] == "delete":
                    emit("delete", session_id=session_id, position=position)
                    continue
                field = edit["field"]
                if field == "both":
                    if edit["type"] != "prompt":
                        raise ScriptExhaustionError("both-field edits must be prompt edits")
                    new_q = state[(position, "question")] + edit.get("append_question", "")
                    new_c = state[(position, "contribution")] + edit.get(
                        "append_contribution", ""
                    )
                    state[(position, "question")] = new_q
                    state[(position, "contribution")] = new_c
                    emit(
                        "prompt_edit",
                        session_id=session_id,
                        position=position,
                        field="both",
                        user_prompt=edit.get("user_prompt", "refine both"),
                        new_question=new_q,
                        new_contribution=new_c,
                    )
                    continue
                if "set" in edit:
                    new_value = edit["set"]
                elif "append" in edit:
                    new_value = state[(position, field)] + edit["append"]
                else:
                    raise ScriptExhaustionError(
                        f"edit on {session_id} position {position} needs set or append"
                    )
                state[(position, field)] = new_value
                if edit["type"] == "direct":
                    emit(
                        "direct_edit",
                        session_id=session_id,
                        position=position,
                        field=field,
                        new_value=new_value,
                    )
                elif edit["type"] == "prompt":
                    emit(
                        "prompt_edit",
                        session_id=session_id,
                        position=position,
                        field=field,
                        user_prompt=edit.get("user_prompt", "refine this"),
                        new_value=new_value,
                    )
                else:
                    raise ScriptExhaustionError(f"unknown edit type {edit['type']!r}")
            end_payload: dict = {"session_id": session_id}
            if session.get("knowledge"):
                end_payload["knowledge"] = session["knowledge"]
            duration = session.get("duration_minutes")
            if duration is not None:
                cursor = start + timedelta(minutes=duration)
            emit("session_end", **end_payload)
    return events, papers


def check_containment(result: ReplayResult) -> int:
    """Enforce the accumulation contract over all generation prompts."""
    checked = 0
    for audit in result.audits:
        if audit.participant_order <= 1:
            if KNOWLEDGE_BLOCK_HEADER in audit.prompt:
                raise ContainmentViolation(
                    f"first participant prompt for {audit.session_id} carries the"
                    " accumulated-knowledge header"
                )
            continue
        missing = [
            text for text in audit.entries_at_build if text not in audit.prompt
        ]
        if missing:
            raise ContainmentViolation(
                f"prompt for {audit.session_id} is missing {len(missing)} accumulated"
                f" entries (first: {missing[0]!r})"
            )
        checked += 1
    return checked


def _trend(points: list[tuple[int, float]]) -> dict:
    values = [v for _, v in points]
    if len(points) < 2 or all(x == points[0][0] for x, _ in points):
        return {"slope": None, "direction": "undefined", "values": values}
    slope = ols_slope([(float(x), float(y)) for x, y in points])
    if abs(slope) < 1e-9:
        direction = "flat"
    else:
        direction = "decreasing" if slope < 0 else "increasing"
    return {"slope": round(slope, 4), "direction": direction, "values": values}


def accumulation_indicators(result: ReplayResult) -> dict:
    """Trend columns for the four study expectations (distance, duration,
    rating, novel-entry rate) across participant order."""
    summaries = sorted(result.report.participants, key=lambda p: p.participant_order)
    distance = [
        (p.participant_order, p.dist_q_chars_total + p.dist_c_chars_total)
        for p in summaries
    ]
    duration = [
        (p.participant_order, p.duration_minutes)
        for p in summaries
        if p.duration_minutes is not None
    ]
    rating = [
        (p.participant_order, p.mean_rating) for p in summaries if p.mean_rating is not None
    ]
    novel = [(p.participant_order, p.knowledge_total) for p in summaries]
    counts = [audit.knowledge_count_at_build for audit in result.audits]
    return {
        "distance_trend": _trend(distance),
        "duration_trend": _trend(duration),
        "rating_trend": _trend(rating),
        "novel_entry_trend": _trend(novel),
        "knowledge_monotone_at_generations": counts == sorted(counts),
    }


def simulate_sequential(
    script: dict,
    expected_participants: int | None = None,
    config: Config | None = None,
) -> SimulationResult:
    """Run the scripted sequential study and enforce the accumulation contract."""
    if expected_participants is not None and expected_participants != len(
        script["participants"]
    ):
        raise ScriptExhaustionError(
            f"script defines {len(script['participants'])} participants,"
            f" expected {expected_participants}"
        )
    event_dicts, papers = expand_script(script)
    events = parse_trace_lines(event_dicts)
    runner = ReplayRunner(
        events, papers=papers, config=config, header={"source": "simulate"}
    )
    result = runner.run()
    checked = check_containment(result)
    result.report.indicators = accumulation_indicators(result)
    return SimulationResult(replay=result, containment_checked=checked)
