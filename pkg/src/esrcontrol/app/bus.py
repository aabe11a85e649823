"""
Run Event Bus

Publishes optimization progress (one event per iteration record, plus run
start/finish events) to in-process subscribers such as the progress logger.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, List

logger = logging.getLogger(__name__)

Event = Dict[str, Any]
Handler = Callable[[Event], None]


class EventBus(ABC):
    """Abstract base class for event buses."""

    @abstractmethod
    def publish(self, event: Event) -> None:
        """Publish an event to all subscribers."""

    @abstractmethod
    def subscribe(self, handler: Handler) -> None:
        """Subscribe a handler to receive events."""


class InProcessBus(EventBus):
    """
    Synchronous in-process bus.

    Handlers run in subscription order; a handler that raises is logged and
    the remaining handlers still receive the event.
    """

    def __init__(self):
        self._subscribers: List[Handler] = []

    def subscribe(self, handler: Handler) -> None:
        self._subscribers.append(handler)

    def publish(self, event: Event) -> None:
        for i, handler in enumerate(self._subscribers):
            try:
                handler(event)
            except Exception:
                logger.exception("Event handler %d failed on %s event", i, event.get("event"))


def log_progress(event: Event) -> None:
    """Log iteration records and run summaries."""
    kind = event.get("event")
    run = event.get("run", "run")
    if kind == "iteration":
        rec = event["record"]
        logger.info(
            "%s q=%d F=%.4f |g|=%.3g c=%.3g experiments=%d%s",
            run, rec.index, rec.fidelity, rec.gradient_norm, rec.learning_rate, rec.experiments,
            f" [{rec.status}: {rec.message}]" if rec.message else "",
        )
    elif kind == "finished":
        logger.info("%s finished after %d iterations: %s", run, event["iterations"], event.get("reason", ""))
    elif kind == "trial":
        logger.info("%s trial %d final F=%.4f", run, event["trial"], event["final_quality"])
