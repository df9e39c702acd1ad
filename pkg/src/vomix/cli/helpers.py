"""CLI helper functions for logging setup, error handling and JSON output."""

import logging
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from vomix.core.exceptions import (
    ConfigLoadError,
    ConfigurationError,
    ImageFormatError,
    InvariantViolationError,
    NumericalError,
    ScheduleError,
    WeightFormatError,
)

err_console = Console(stderr=True)

EXIT_FAILURE = 1
EXIT_CONFIG = 2


def configure_logging(level: str, verbose: bool = False) -> None:
    """Send log records to stderr through Rich. ``verbose`` forces DEBUG."""
    logging.basicConfig(
        level="DEBUG" if verbose else level,
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_path=False, rich_tracebacks=False)],
        force=True,
    )


def handle_error(error: Exception) -> int:
    """Handle an exception and print appropriate error message.

    Args:
        error: The exception to handle.

    Returns:
        Exit code (2 for configuration and input errors, 1 otherwise).
    """
    if isinstance(error, ScheduleError):
        err_console.print(f"[red]Schedule error:[/red] {error.message}")
        err_console.print(
            "[dim]Expected const:<a>:<b>, decr:<a>:<b>, trunc:<a> or list:<r0>,<r1>,...[/dim]"
        )
        return EXIT_CONFIG

    elif isinstance(error, ConfigLoadError):
        err_console.print(f"[red]Configuration error:[/red] {error.message}")
        return EXIT_CONFIG

    elif isinstance(error, ConfigurationError):
        err_console.print(f"[red]Error:[/red] {error.message}")
        return EXIT_CONFIG

    elif isinstance(error, WeightFormatError):
        where = f" ({error.path})" if error.path else ""
        err_console.print(f"[red]Weight file error \\[{error.code}]:[/red] {error.message}{where}")
        return EXIT_CONFIG

    elif isinstance(error, ImageFormatError):
        err_console.print(f"[red]Image error:[/red] {error.message}")
        return EXIT_CONFIG

    elif isinstance(error, FileNotFoundError):
        err_console.print(f"[red]Error:[/red] File not found: {error.filename}")
        return EXIT_CONFIG

    elif isinstance(error, InvariantViolationError):
        err_console.print(f"[red]Invariant violated:[/red] {error.message}")
        return EXIT_FAILURE

    elif isinstance(error, NumericalError):
        err_console.print(f"[red]Numerical error:[/red] {error.message}")
        return EXIT_FAILURE

    else:
        err_console.print(f"[red]Unexpected error:[/red] {error}")
        err_console.print("[dim]This may be a bug. Please report it.[/dim]")
        return EXIT_FAILURE


def serialize_for_json(obj: Any) -> Any:
    """Serialize an object to JSON-compatible format.

    Handles pydantic models, numpy scalars and arrays, enums and paths.
    """
    if hasattr(obj, "model_dump"):
        return obj.model_dump(mode="json")
    elif isinstance(obj, np.ndarray):
        return obj.tolist()
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    elif isinstance(obj, np.bool_):
        return bool(obj)
    elif isinstance(obj, Enum):
        return obj.value
    elif isinstance(obj, Path):
        return str(obj)
    elif isinstance(obj, dict):
        return {k: serialize_for_json(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [serialize_for_json(item) for item in obj]
    else:
        return obj
