"""Utility functions for hbfopt."""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Optional

_UNSAFE = re.compile(r"[^A-Za-z0-9._-]+")


def setup_logging(debug: bool = False, log_file: Optional[Path] = None) -> None:
    """Configure the root logger; lines carry the thread name."""
    level = logging.DEBUG if debug else logging.WARNING
    formatter = logging.Formatter("%(asctime)s [%(threadName)s] %(name)s %(levelname)s: %(message)s")

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)

    handlers: list[logging.Handler] = [console_handler]
    if log_file:
        ensure_directory(Path(log_file).parent)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        handlers.append(file_handler)

    logging.basicConfig(level=logging.DEBUG if log_file else level, handlers=handlers, force=True)


def sanitize_filename(name: str) -> str:
    """Collapse anything outside ``[A-Za-z0-9._-]`` to one underscore; never empty."""
    cleaned = _UNSAFE.sub("_", name).strip("_.")
    return cleaned or "unnamed"


def format_duration(seconds: float) -> str:
    if seconds < 1:
        return f"{seconds * 1000:.0f}ms"
    if seconds < 60:
        return f"{seconds:.1f}s"
    if seconds < 3600:
        return f"{seconds / 60:.1f}m"
    return f"{seconds / 3600:.1f}h"


def ensure_directory(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path
