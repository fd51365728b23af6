"""Command-line entry point.

Subcommands:
    replay    replay a JSONL trace into a metrics report
    simulate  run a scripted sequential study against the mock gateway
    stats     print knowledge stats for a project from a SQLite store
    serve     run the HTTP API with a worker pool

Exit codes: 0 on success, 2 on validation errors (bad trace, bad script,
missing files, containment violations).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..config import Config
from ..errors import (
    ContainmentViolation,
    EditLoopError,
    ScriptExhaustionError,
    TraceFormatError,
)


def _write_report(report, out: str | None, fmt: str) -> None:
    rendered = report.to_csv() if fmt == "csv" else report.to_json()
    if out:
        Path(out).write_text(rendered, encoding="utf-8")
    else:
        sys.stdout.write(rendered)


def cmd_replay(args: argparse.Namespace) -> int:
    from .replay import replay_trace
    from .trace import load_trace

    events = load_trace(args.trace)
    result = replay_trace(
        events,
        papers_dir=args.papers,
        header={"trace": str(args.trace)},
    )
    _write_report(result.report, args.out, args.format)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    from .simulate import load_script, simulate_sequential

    script = load_script(args.script)
    result = simulate_sequential(script, expected_participants=args.participants)
    _write_report(result.report, args.out, args.format)
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    from ..context import ContextAssembler
    from ..storage.sqlite import SqliteStore

    if not Path(args.db).exists():
        raise EditLoopError(f"store {args.db} does not exist")
    store = SqliteStore(args.db)
    try:
        stats = ContextAssembler(store).knowledge_stats(args.project)
        sys.stdout.write(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    finally:
        store.close()
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from ..api import create_app
    from ..runtime import build_runtime
    from ..storage.sqlite import SqliteStore

    config = Config.from_env()
    store = SqliteStore(args.db)
    provider = None
    if args.mock:
        from ..gateway import MockProvider

        provider = MockProvider(echo=True)
    else:
        import os

        from ..gateway import HttpChatProvider

        base_url = os.environ.get("EDITLOOP_LLM_BASE_URL", "")
        if not base_url:
            raise EditLoopError(
                "EDITLOOP_LLM_BASE_URL is not set; pass --mock for the echo provider"
            )
        provider = HttpChatProvider(
            base_url,
            api_key=os.environ.get("EDITLOOP_LLM_API_KEY", ""),
            timeout_s=config.gateway_timeout_s,
        )
    runtime = build_runtime(store=store, provider=provider, config=config)
    app = create_app(runtime, start_workers=True, worker_count=args.workers)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="editloop", description="edit-driven knowledge accumulation toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    replay = sub.add_parser("replay", help="replay a JSONL interaction trace")
    replay.add_argument("--trace", required=True, help="trace file (JSON lines)")
    replay.add_argument("--papers", default=None, help="directory of paper bodies")
    replay.add_argument("--out", default=None, help="report output file (default stdout)")
    replay.add_argument("--format", choices=("csv", "json"), default="json")
    replay.set_defaults(fn=cmd_replay)

    simulate = sub.add_parser("simulate", help="run a scripted sequential study")
    simulate.add_argument("--participants", type=int, required=True)
    simulate.add_argument("--script", required=True, help="simulation script (JSON)")
    simulate.add_argument("--out", default=None)
    simulate.add_argument("--format", choices=("csv", "json"), default="json")
    simulate.set_defaults(fn=cmd_simulate)

    stats = sub.add_parser("stats", help="knowledge stats for a project")
    stats.add_argument("--project", required=True)
    stats.add_argument("--db", default="editloop.db")
    stats.set_defaults(fn=cmd_stats)

    serve = sub.add_parser("serve", help="run the HTTP API")
    serve.add_argument("--db", default="editloop.db")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--workers", type=int, default=None)
    serve.add_argument("--mock", action="store_true", help="use the echo mock provider")
    serve.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (
        TraceFormatError,
        ScriptExhaustionError,
        ContainmentViolation,
        EditLoopError,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
