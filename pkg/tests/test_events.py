"""
Tests for the training event callbacks
"""
from pit_framework.core.events import Event, EventType, TrainingCallback


def test_handlers_run_in_registration_order():
    seen = []
    callbacks = TrainingCallback()
    callbacks.on(EventType.EPOCH_END, lambda e: seen.append(("a", e.content)))
    callbacks.on(EventType.EPOCH_END, lambda e: seen.append(("b", e.content)))
    callbacks.emit(Event(EventType.EPOCH_END, 0.5))
    assert seen == [("a", 0.5), ("b", 0.5)]


def test_single_handler_mode_replaces():
    seen = []
    callbacks = TrainingCallback(allow_multiple_handlers=False)
    callbacks.on(EventType.RUN_START, lambda e: seen.append("first"))
    callbacks.on(EventType.RUN_START, lambda e: seen.append("second"))
    callbacks.emit(Event(EventType.RUN_START))
    assert seen == ["second"]


def test_off_and_clear():
    seen = []
    handler = seen.append
    callbacks = TrainingCallback().on(EventType.PHASE_START, handler).on_any(handler)
    callbacks.off(EventType.PHASE_START, handler)
    callbacks.emit(Event(EventType.PHASE_START, "warmup"))
    assert len(seen) == 1
    callbacks.clear()
    callbacks.emit(Event(EventType.PHASE_START, "pruning"))
    assert len(seen) == 1


def test_failing_handler_does_not_stop_others():
    seen = []

    def broken(event):
        raise RuntimeError("boom")

    callbacks = TrainingCallback().on(EventType.RUN_ERROR, broken).on_error(seen.append)
    callbacks.emit(Event(EventType.RUN_ERROR, "diverged"))
    assert [e.content for e in seen] == ["diverged"]


def test_event_to_dict():
    data = Event(EventType.CHECKPOINT_SAVED, "ckpt/latest", metadata={"epoch": 3}).to_dict()
    assert data["type"] == "checkpoint_saved"
    assert data["metadata"] == {"epoch": 3}
