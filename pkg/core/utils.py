"""
Utility functions for the commuter traffic simulation.
Provides helpers for logging, output files and URL handling.
"""

import logging
import os
import re
import sys
from typing import Any, Optional, Tuple
from urllib.parse import urlsplit

import structlog

from core.config import config

_logging_configured = False

# Client libraries that log one line per request at INFO
QUIET_LOGGERS = ("httpx", "httpcore")


def setup_logging(name: str = "traffic_sim", log_level: Optional[str] = None) -> Any:
    """Set up logging configuration and return a structured logger."""
    global _logging_configured
    if not _logging_configured:
        level = getattr(logging, (log_level or config.log_level).upper(), logging.INFO)
        handlers = [logging.StreamHandler(sys.stderr)]
        if config.log_file:
            handlers.append(logging.FileHandler(config.log_file))
        logging.basicConfig(level=level, format="%(message)s", handlers=handlers)
        for quiet in QUIET_LOGGERS:
            logging.getLogger(quiet).setLevel(max(level, logging.WARNING))
        structlog.configure(
            processors=[
                structlog.stdlib.filter_by_level,
                structlog.stdlib.add_logger_name,
                structlog.stdlib.add_log_level,
                structlog.processors.TimeStamper(fmt="iso"),
                structlog.processors.format_exc_info,
                structlog.processors.KeyValueRenderer(
                    key_order=["timestamp", "level", "logger", "event"]
                ),
            ],
            logger_factory=structlog.stdlib.LoggerFactory(),
            wrapper_class=structlog.stdlib.BoundLogger,
            cache_logger_on_first_use=True,
        )
        _logging_configured = True
    return structlog.get_logger(name)


def ensure_directory_exists(directory: str) -> str:
    """
    Ensure a directory exists.

    Args:
        directory: Directory path

    Returns:
        Normalized directory path
    """
    directory = os.path.normpath(directory)
    os.makedirs(directory, exist_ok=True)
    return directory


def save_to_file(content: str, filename: str, output_dir: str = "./output") -> str:
    """Save content to a file in the output directory."""
    output_dir = ensure_directory_exists(output_dir)
    filepath = os.path.join(output_dir, filename)
    with open(filepath, "w", encoding="utf-8", newline="") as f:
        f.write(content)
    return filepath


def load_from_file(filepath: str) -> str:
    """Load content from a file."""
    with open(filepath, "r", encoding="utf-8") as f:
        return f.read()


def sanitize_filename(filename: str) -> str:
    """Sanitize filename for safe file system operations."""
    sanitized = re.sub(r'[<>:"/\\|?*]', "_", filename)
    sanitized = re.sub(r"\s+", "_", sanitized)
    return sanitized.strip("._") or "run"


def split_url(url: str) -> Tuple[str, str]:
    """Split an absolute URL into (scheme://host[:port], path)."""
    parts = urlsplit(url)
    if not parts.scheme or not parts.netloc:
        raise ValueError(f"Not an absolute URL: {url}")
    return f"{parts.scheme}://{parts.netloc}", parts.path or "/"


def last_segment(url: str) -> str:
    """Return the last path segment of a URL or path."""
    return urlsplit(url).path.rstrip("/").rsplit("/", 1)[-1]
