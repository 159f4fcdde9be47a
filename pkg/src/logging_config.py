"""Structured JSON logging for bop-forge."""

import json
import logging
import os
import sys
from datetime import datetime, timezone
from typing import IO, Any

from opentelemetry import trace


class JsonFormatter(logging.Formatter):
    """One JSON object per log record."""

    def format(self, record: logging.LogRecord) -> str:
        """Format log record as JSON.

        Args:
            record: The log record to format

        Returns:
            JSON-formatted string
        """
        log_entry: dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }

        span = trace.get_current_span()
        if span and span.is_recording():
            ctx = span.get_span_context()
            log_entry["trace_id"] = format(ctx.trace_id, "032x")
            log_entry["span_id"] = format(ctx.span_id, "016x")

        # extra={"context": {...}}
        context = getattr(record, "context", None)
        if context:
            log_entry["context"] = context

        if record.exc_info:
            log_entry["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_entry, default=str)


def resolve_level(name: str | None) -> int:
    """Map a level name to its logging constant, defaulting to INFO."""
    return getattr(logging, (name or "INFO").upper(), logging.INFO)


def setup_logging(level: str | None = None, stream: IO[str] | None = None) -> None:
    """Configure logging for the application.

    Reads LOG_LEVEL from the environment (default: INFO) unless ``level`` is
    given. Output goes to stderr; stdout stays reserved for artifacts such as
    write-sets and reports.

    Args:
        level: Explicit level name overriding LOG_LEVEL
        stream: Destination stream (stderr by default)
    """
    log_level = resolve_level(level or os.getenv("LOG_LEVEL"))

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Remove any existing handlers to avoid duplicates
    root_logger.handlers.clear()

    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setLevel(log_level)
    handler.setFormatter(JsonFormatter())

    root_logger.addHandler(handler)
