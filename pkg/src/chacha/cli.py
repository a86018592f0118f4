"""Command-line entrypoints: the chat server and the stats tool."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import ChaChaError
from .stats import FORMATS, RULES, compute_stats, emit_report


def server_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="chacha-server",
        description="Run the dialogue chat service.",
    )
    parser.add_argument("--config", required=True, help="TOML or JSON config file")
    parser.add_argument(
        "--data-dir", default=None, help="session log directory (overrides config)"
    )
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument(
        "--max-session-minutes",
        type=float,
        default=None,
        help="end sessions older than this; off unless given",
    )
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(name)s %(levelname)s %(message)s")

    from .config import build_engine, load_config
    from .logstore import SessionLogStore
    from .service import create_app

    try:
        config = load_config(args.config)
        if args.data_dir is not None:
            config.data_dir = Path(args.data_dir)
        if args.max_session_minutes is not None:
            config.max_session_minutes = args.max_session_minutes
        engine = build_engine(config)
        store = SessionLogStore(config.data_dir)
    except ChaChaError as exc:
        print(f"chacha-server: {exc}", file=sys.stderr)
        return 2

    app = create_app(
        engine,
        store,
        default_locale=config.locale,
        max_session_minutes=config.max_session_minutes,
    )

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def stats_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="chacha-stats",
        description="Compute dialogue statistics from exported JSONL logs.",
    )
    parser.add_argument(
        "--input",
        required=True,
        nargs="+",
        help="JSONL files or directories containing them",
    )
    parser.add_argument("--rule", default="korean_letters_only", choices=RULES)
    parser.add_argument("--format", default="table", choices=FORMATS)
    parser.add_argument("--out", default=None, help="write the report here, not stdout")
    args = parser.parse_args(argv)

    try:
        report = compute_stats(args.input, rule=args.rule)
        document = emit_report(report, format=args.format)
    except ChaChaError as exc:
        print(f"chacha-stats: {exc}", file=sys.stderr)
        return 2

    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
    else:
        sys.stdout.write(document)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(server_main())
