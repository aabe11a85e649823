"""Logging setup for the command line."""

import logging

from rich.console import Console
from rich.logging import RichHandler


def configure_logging(verbose: bool = False, console: Console | None = None) -> None:
    """Route library logs through a RichHandler; DEBUG when ``verbose``."""
    level = logging.DEBUG if verbose else logging.INFO
    handler = RichHandler(console=console or Console(stderr=True), show_path=verbose, rich_tracebacks=True)
    logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]", handlers=[handler], force=True)
    logging.getLogger("esrcontrol").setLevel(level)
