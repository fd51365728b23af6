"""Metrics report: per-session rows, per-participant aggregates, knowledge
distribution, and the activity-vs-extraction slope."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

from ..errors import SlopeUndefinedError
from ..models import EditType, KnowledgeCategory
from ..storage import Store

EDITED_FIELDS_DEFINITION = (
    "edited_fields counts distinct (artifact, field) pairs touched by"
    " direct_edit or prompt_regeneration records (question/contribution only)"
)
SLOPE_DEFINITION = (
    "slope is ordinary least squares over per-participant points"
    " (x = edited_fields_total, y = knowledge_total)"
)
DISTANCE_NOTE = "distance sums exclude soft-deleted artifacts"


@dataclass
class ReportRow:
    participant_id: str
    participant_order: int
    paper_id: str
    session_id: str
    duration_minutes: Optional[float]
    mean_rating: Optional[float]
    direct_edits: int
    prompt_edits: int
    ratings: int
    deletes: int
    edited_fields: int
    dist_q_chars: int
    dist_c_chars: int
    knowledge_entries: int


@dataclass
class ParticipantSummary:
    participant_id: str
    participant_order: int
    sessions: int
    duration_minutes: Optional[float]
    mean_rating: Optional[float]
    direct_edits: int
    prompt_edits: int
    edited_fields_total: int
    dist_q_chars_total: int
    dist_c_chars_total: int
    knowledge_total: int


@dataclass
class MetricsReport:
    header: dict
    rows: list[ReportRow] = field(default_factory=list)
    participants: list[ParticipantSummary] = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    indicators: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "header": self.header,
            "rows": [asdict(r) for r in self.rows],
            "participants": [asdict(p) for p in self.participants],
            "totals": self.totals,
            "indicators": self.indicators,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        for key in sorted(self.header):
            buffer.write(f"# {key}: {self.header[key]}\n")
        columns = [f.name for f in ReportRow.__dataclass_fields__.values()]
        writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(asdict(row))
        return buffer.getvalue()


def fit_activity_slope(report: MetricsReport) -> float:
    """Least-squares slope of knowledge_total against edited_fields_total."""
    pairs = [
        (p.edited_fields_total, p.knowledge_total) for p in report.participants
    ]
    return ols_slope(pairs)


def ols_slope(pairs: list[tuple[float, float]]) -> float:
    if len(pairs) < 2:
        raise SlopeUndefinedError("need at least two points")
    xs = [float(x) for x, _ in pairs]
    ys = [float(y) for _, y in pairs]
    mean_x = sum(xs) / len(xs)
    mean_y = sum(ys) / len(ys)
    sxx = sum((x - mean_x) ** 2 for x in xs)
    if sxx == 0:
        raise SlopeUndefinedError("slope undefined: all x values are equal")
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    return sxy / sxx


def _round(value: Optional[float], digits: int) -> Optional[float]:
    return None if value is None else round(value, digits)


def _session_row(store: Store, session, participant) -> ReportRow:
    artifacts = store.artifacts_by_session(session.id)
    artifact_ids = {a.id for a in artifacts}
    counts = {t: 0 for t in EditType}
    edited_fields: set[tuple[str, str]] = set()
    last_rating: dict[str, int] = {}
    for artifact in artifacts:
        for record in store.edits_for_entity(artifact.id):
            counts[record.edit_type] += 1
            if record.edit_type in (EditType.DIRECT_EDIT, EditType.PROMPT_REGENERATION):
                if record.field_name in ("question", "contribution"):
                    edited_fields.add((artifact.id, record.field_name))
            if record.edit_type == EditType.RATING:
                last_rating[artifact.id] = int(record.new_value)
    live = [a for a in artifacts if not a.deleted]
    knowledge = [
        e
        for e in store.list_kind("implicit_domain_knowledge")
        if artifact_ids & set(e.source_question_ids)
    ]
    mean_rating = (
        sum(last_rating.values()) / len(last_rating) if last_rating else None
    )
    duration = session.duration_seconds
    return ReportRow(
        participant_id=participant.id,
        participant_order=participant.order_index,
        paper_id=session.paper_id,
        session_id=session.id,
        duration_minutes=_round(duration / 60 if duration is not None else None, 2),
        mean_rating=_round(mean_rating, 2),
        direct_edits=counts[EditType.DIRECT_EDIT],
        prompt_edits=counts[EditType.PROMPT_REGENERATION],
        ratings=counts[EditType.RATING],
        deletes=counts[EditType.DELETE],
        edited_fields=len(edited_fields),
        dist_q_chars=sum(a.dist_q_chars for a in live),
        dist_c_chars=sum(a.dist_c_chars for a in live),
        knowledge_entries=len(knowledge),
    )


def build_report(store: Store, project_id: str, header: dict | None = None) -> MetricsReport:
    """Compute the full report from the store (the ground truth)."""
    base_header = {
        "project_id": project_id,
        "edited_fields_definition": EDITED_FIELDS_DEFINITION,
        "slope_definition": SLOPE_DEFINITION,
        "distance_note": DISTANCE_NOTE,
    }
    base_header.update(header or {})
    report = MetricsReport(header=base_header)

    participants = store.participants_in_project(project_id)
    entries_by_participant: dict[str, int] = {}
    per_category = {c.value: 0 for c in KnowledgeCategory}
    for entry in store.knowledge_for_project(project_id):
        entries_by_participant[entry.created_by] = (
            entries_by_participant.get(entry.created_by, 0) + 1
        )
        per_category[entry.category.value] += 1

    for participant in participants:
        rows = []
        for session in store.sessions_for_participant(participant.id):
            row = _session_row(store, session, participant)
            rows.append(row)
            report.rows.append(row)
        session_means = [r.mean_rating for r in rows if r.mean_rating is not None]
        durations = [r.duration_minutes for r in rows if r.duration_minutes is not None]
        report.participants.append(
            ParticipantSummary(
                participant_id=participant.id,
                participant_order=participant.order_index,
                sessions=len(rows),
                duration_minutes=_round(sum(durations), 2) if durations else None,
                mean_rating=_round(sum(session_means) / len(session_means), 2)
                if session_means
                else None,
                direct_edits=sum(r.direct_edits for r in rows),
                prompt_edits=sum(r.prompt_edits for r in rows),
                edited_fields_total=sum(r.edited_fields for r in rows),
                dist_q_chars_total=sum(r.dist_q_chars for r in rows),
                dist_c_chars_total=sum(r.dist_c_chars for r in rows),
                knowledge_total=entries_by_participant.get(participant.id, 0),
            )
        )

    report.totals = {
        "knowledge_total": sum(per_category.values()),
        "per_category": per_category,
        "per_participant": dict(sorted(entries_by_participant.items())),
    }
    try:
        slope = fit_activity_slope(report)
        report.totals["activity_extraction_slope"] = round(slope, 4)
    except SlopeUndefinedError as exc:
        report.totals["activity_extraction_slope"] = None
        report.totals["slope_note"] = str(exc)
    return report
