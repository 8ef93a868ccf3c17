"""
Structured logging configuration using structlog.

Records go to stderr so stdout stays free for command output (run
directory, tables). While a command runs, every record carries the
command name through structlog's context variables.
"""

import logging
import sys
from contextlib import contextmanager

import structlog

from .config import get_settings


def _renderer(environment: str):
    if environment == "production":
        return structlog.processors.JSONRenderer()
    return structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())


def setup_logging(level: str | None = None):
    """Configure structlog and the stdlib root logger; ``level`` overrides LOG_LEVEL."""
    settings = get_settings()
    level = (level or settings.log_level).upper()
    if not isinstance(getattr(logging, level, None), int):
        level = "INFO"

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            _renderer(settings.environment),
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )

    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=getattr(logging, level), force=True)


@contextmanager
def command_context(command: str, **values):
    """Bind ``command`` (and any extra values) to every record logged inside the block."""
    tokens = structlog.contextvars.bind_contextvars(command=command, **values)
    try:
        yield
    finally:
        structlog.contextvars.reset_contextvars(**tokens)


def get_logger(name: str = __name__):
    """Get a structured logger."""
    return structlog.get_logger(name)
