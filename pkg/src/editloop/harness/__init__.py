"""Evaluation harness: trace replay, scripted simulation, metrics reports."""

from .replay import GenerationAudit, ReplayResult, ReplayRunner, replay_trace
from .report import (
    MetricsReport,
    ParticipantSummary,
    ReportRow,
    build_report,
    fit_activity_slope,
    ols_slope,
)
from .simulate import (
    SimulationResult,
    accumulation_indicators,
    check_containment,
    expand_script,
    simulate_sequential,
)
from .trace import TraceEvent, dump_trace, load_trace, parse_trace_lines
