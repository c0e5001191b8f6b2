"""Temporal intention decoding: a fixed-capacity ring buffer of per-frame
class labels with a winner-take-all vote, and the wink-confirmation state
machine that turns a sustained interactive vote into a navigation goal.

The buffer is object-specific; looking at a different object (or at nothing)
resets it, since frames classified against different objects must not mix.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .gaze import TaskClass

DEFAULT_CAPACITY = 40
DEFAULT_WINK_WINDOW = 2.0

VOTE_COLORS = {TaskClass.NON_INTERACTIVE: "green",
               TaskClass.INTERACTIVE: "purple"}


def vote_color(v: TaskClass) -> str:
    return VOTE_COLORS[v]


@dataclass
class IntentBuffer:
    capacity: int = DEFAULT_CAPACITY
    entries: deque = field(default_factory=deque)
    current_object: Optional[str] = None

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.entries = deque(self.entries, maxlen=self.capacity)

    @property
    def fill(self) -> int:
        return len(self.entries)

    @property
    def full(self) -> bool:
        return len(self.entries) == self.capacity


def push_frame(buf: IntentBuffer, obj: Optional[str],
               cls: Optional[TaskClass]) -> IntentBuffer:
    """Feed one frame's classification into the buffer (in place).

    Same object: append (oldest entry evicted when full); a class of None
    (gaze on the object but outside its averaged box) leaves the buffer
    untouched.  A different object or no object resets the buffer.
    """
    if obj != buf.current_object:
        buf.entries.clear()
        buf.current_object = obj
    if obj is not None and cls is not None:
        buf.entries.append(TaskClass(cls))
    return buf


def vote(buf: IntentBuffer) -> TaskClass:
    """Winner-take-all: interactive only on a full buffer with a strict
    interactive majority; everything else is non-interactive."""
    if not buf.full:
        return TaskClass.NON_INTERACTIVE
    n_int = sum(1 for e in buf.entries if e == TaskClass.INTERACTIVE)
    if n_int > buf.capacity - n_int:
        return TaskClass.INTERACTIVE
    return TaskClass.NON_INTERACTIVE


class Phase(Enum):
    IDLE = "idle"
    OBSERVING = "observing"
    INTENT_DETECTED = "intent_detected"
    GOAL_DISPATCHED = "goal_dispatched"


@dataclass(frozen=True)
class DecoderState:
    phase: Phase = Phase.IDLE
    object: Optional[str] = None
    since: Optional[float] = None
    # Set after an unconfirmed detection expires; the vote must drop back to
    # non-interactive before a new detection can fire, so a stale window is
    # never silently re-opened under a continuously high vote.
    needs_rearm: bool = False

    @classmethod
    def idle(cls) -> "DecoderState":
        return cls()


@dataclass(frozen=True)
class GoalDispatch:
    object: str
    goal_point: tuple[float, float]
    t: float

    def to_dict(self) -> dict:
        return {"object": self.object, "goal_point": list(self.goal_point),
                "t": self.t}


def decoder_step(state: DecoderState, buf_vote: TaskClass, obj: Optional[str],
                 wink: bool, t: float,
                 wink_window: float = DEFAULT_WINK_WINDOW) -> tuple[DecoderState, Optional[str]]:
    """Advance the decoder one tick; returns (state, object-to-dispatch).

    A goal is emitted only from INTENT_DETECTED, on a wink arriving within
    ``wink_window`` of the detection, while the vote is still interactive on
    the same object.  Winks in any other situation are ignored.
    """
    if state.phase == Phase.GOAL_DISPATCHED:
        return state, None

    if state.phase == Phase.INTENT_DETECTED:
        if obj != state.object or buf_vote != TaskClass.INTERACTIVE:
            return DecoderState(Phase.OBSERVING, obj, needs_rearm=False), None
        if t - state.since > wink_window:
            return DecoderState(Phase.OBSERVING, obj, needs_rearm=True), None
        if wink:
            return DecoderState(Phase.GOAL_DISPATCHED, state.object, since=t), state.object
        return state, None

    # IDLE / OBSERVING
    if obj is None:
        return DecoderState(Phase.IDLE), None
    rearm = state.needs_rearm and obj == state.object
    if buf_vote == TaskClass.INTERACTIVE and not rearm:
        return DecoderState(Phase.INTENT_DETECTED, obj, since=t), None
    if buf_vote == TaskClass.NON_INTERACTIVE:
        rearm = False
    return DecoderState(Phase.OBSERVING, obj, needs_rearm=rearm), None


def reset_after_arrival(state: DecoderState) -> DecoderState:
    """Back to idle once the navigation goal has been reached (or abandoned)."""
    return DecoderState.idle()
