"""
Event system for tracking training progress, checkpoints and sweeps
"""
from enum import Enum
from dataclasses import dataclass, field
from typing import Any, Optional, Dict, Callable, List
from datetime import datetime
import logging

logger = logging.getLogger(__name__)


class EventType(Enum):
    """Types of events in a training run or sweep"""
    # Run lifecycle
    RUN_START = "run_start"
    RUN_COMPLETE = "run_complete"
    RUN_ERROR = "run_error"

    # Phases of the search
    PHASE_START = "phase_start"
    PHASE_END = "phase_end"
    EPOCH_END = "epoch_end"
    GAMMA_UPDATE = "gamma_update"

    # Persistence
    CHECKPOINT_SAVED = "checkpoint_saved"
    CHECKPOINT_LOADED = "checkpoint_loaded"

    # Sweeps
    SWEEP_START = "sweep_start"
    SWEEP_POINT = "sweep_point"
    SWEEP_COMPLETE = "sweep_complete"

    # System Events
    WARNING = "warning"
    INFO = "info"


@dataclass
class Event:
    """An event in a training run"""
    type: EventType
    content: Any = None
    timestamp: datetime = field(default_factory=datetime.now)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        """Convert event to dictionary"""
        return {
            "type": self.type.value,
            "content": self.content,
            "timestamp": self.timestamp.isoformat(),
            "metadata": self.metadata
        }


class TrainingCallback:
    """
    Callback handler for training events
    Supports both single and multiple handlers per event type
    """

    def __init__(self, allow_multiple_handlers: bool = True):
        self.allow_multiple_handlers = allow_multiple_handlers
        self.handlers: Dict[EventType, List[Callable]] = {}
        self._default_handler: Optional[Callable] = None

    def on(self, event_type: EventType, handler: Callable):
        """Register a handler for an event type"""
        if self.allow_multiple_handlers:
            self.handlers.setdefault(event_type, []).append(handler)
        else:
            self.handlers[event_type] = [handler]
        return self

    def on_any(self, handler: Callable):
        """Register a handler for all events"""
        self._default_handler = handler
        return self

    def off(self, event_type: EventType, handler: Callable = None):
        """Unregister a handler"""
        if event_type in self.handlers:
            if handler and self.allow_multiple_handlers:
                if handler in self.handlers[event_type]:
                    self.handlers[event_type].remove(handler)
                    if not self.handlers[event_type]:
                        del self.handlers[event_type]
            else:
                del self.handlers[event_type]

    def emit(self, event: Event):
        """Emit an event to registered handlers; handler failures never stop training"""
        for handler in self.handlers.get(event.type, []):
            try:
                handler(event)
            except Exception as e:
                logger.error(f"Error in event handler for {event.type}: {e}")

        if self._default_handler:
            try:
                self._default_handler(event)
            except Exception as e:
                logger.error(f"Error in default event handler: {e}")

    # Convenience methods for common events
    def on_epoch(self, handler: Callable):
        """Shortcut for end-of-epoch events"""
        return self.on(EventType.EPOCH_END, handler)

    def on_phase(self, handler: Callable):
        """Register handler for phase start and end"""
        self.on(EventType.PHASE_START, handler)
        self.on(EventType.PHASE_END, handler)
        return self

    def on_checkpoint(self, handler: Callable):
        """Shortcut for checkpoint events"""
        return self.on(EventType.CHECKPOINT_SAVED, handler)

    def on_error(self, handler: Callable):
        """Shortcut for error events"""
        return self.on(EventType.RUN_ERROR, handler)

    def clear(self):
        """Clear all handlers"""
        self.handlers.clear()
        self._default_handler = None
