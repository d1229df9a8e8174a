"""Periodic sampling, sliding windows and majority-vote aggregation.

Every period-th frame is processed; each sampled frame yields one label
per action (positive / negative / absent). A per-(stream, action) ring
buffer of the last `window` labels votes by frequency, and transitions
of that global label emit edge-triggered events: `raised` when it turns
positive, `cleared` when it stops being positive.

Ties break toward the non-alarm side (negative, then absent, then
positive) to keep false alarms down. `absent` stays a first-class label
so an empty scene cannot clear a standing alarm by itself.

Counter actions (on-duty) aggregate the person count instead: the modal
count over the window is checked against the compliance range, and
non-compliance plays the role of the positive label.
"""

from __future__ import annotations

import enum
from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .classification import DetectionVerdict
from .errors import OutOfOrderFrameError
from .onduty import ComplianceRange, CountVerdict, check_compliance

RAISED = "raised"
CLEARED = "cleared"


class FrameLabel(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    ABSENT = "absent"


# Tie priority for the window vote, non-alarm first.
TIE_ORDER = (FrameLabel.NEGATIVE, FrameLabel.ABSENT, FrameLabel.POSITIVE)


@dataclass(frozen=True)
class SamplerConfig:
    period: int = 5
    window: int = 5

    def __post_init__(self):
        if self.period < 1:
            raise ValueError(f"period must be >= 1, got {self.period}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")


def should_sample(frame_index: int, config: SamplerConfig) -> bool:
    if frame_index < 0:
        raise ValueError(f"frame index must be >= 0, got {frame_index}")
    return frame_index % config.period == 0


def frame_label(verdicts: Sequence[DetectionVerdict]) -> FrameLabel:
    """Any positive detection makes the frame positive; detections that
    all voted negative make it negative; no detections means absent."""
    if not verdicts:
        return FrameLabel.ABSENT
    if any(v.positive for v in verdicts):
        return FrameLabel.POSITIVE
    return FrameLabel.NEGATIVE


def aggregate(window: Iterable[FrameLabel]) -> FrameLabel:
    """Most frequent label in the window; ties break non-alarm first."""
    counts = Counter(window)
    if not counts:
        raise ValueError("window must be nonempty")
    best = max(counts.values())
    for label in TIE_ORDER:
        if counts.get(label, 0) == best:
            return label
    raise AssertionError("unreachable")


def aggregate_counts(window: Iterable[int]) -> int:
    """Modal person count over the window; ties go to the smaller count."""
    counts = Counter(window)
    if not counts:
        raise ValueError("window must be nonempty")
    best = max(counts.values())
    return min(value for value, n in counts.items() if n == best)


@dataclass(frozen=True)
class ActionFrameResult:
    """One action's outcome on one sampled frame."""

    label: FrameLabel
    verdicts: tuple[DetectionVerdict, ...] = ()
    count: int | None = None  # set for counter actions only
    compliance: CountVerdict | None = None


@dataclass(frozen=True)
class FrameVerdict:
    stream_id: str
    frame_index: int
    timestamp_ms: float
    actions: Mapping[str, ActionFrameResult]


@dataclass(frozen=True)
class ActionEvent:
    stream_id: str
    action: str
    state: str  # "raised" | "cleared"
    window_start: int
    window_end: int
    vote_count: int
    window_size: int
    count: int | None = None  # aggregated count, counter actions only
    verdicts: tuple[DetectionVerdict, ...] = ()

    def __post_init__(self):
        if self.state not in (RAISED, CLEARED):
            raise ValueError(f"unknown event state {self.state!r}")
        if self.window_start > self.window_end:
            raise ValueError("window_start must be <= window_end")
        if not 0 <= self.vote_count <= self.window_size:
            raise ValueError("vote_count must lie in [0, window_size]")


@dataclass
class _ActionState:
    samples: deque  # of (frame_index, FrameLabel, count | None)
    last_positive: bool | None = None  # None until the window first fills


class Aggregator:
    """Sliding-window vote state for every (stream, action) pair.

    Single-writer: exactly one stream context may call step() for a
    given stream. compliance maps counter actions to their allowed
    person-count range.
    """

    def __init__(self, window: int, compliance: Mapping[str, ComplianceRange] | None = None):
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        self.window = window
        self.compliance = dict(compliance or {})
        self._states: dict[tuple[str, str], _ActionState] = {}
        self._last_index: dict[str, int] = {}

    def step(self, verdict: FrameVerdict) -> list[ActionEvent]:
        """Push one sampled frame and return any label transitions."""
        last = self._last_index.get(verdict.stream_id)
        if last is not None and verdict.frame_index <= last:
            raise OutOfOrderFrameError(
                f"stream {verdict.stream_id}: frame {verdict.frame_index} "
                f"arrived after frame {last}"
            )
        self._last_index[verdict.stream_id] = verdict.frame_index

        events: list[ActionEvent] = []
        for action, result in verdict.actions.items():
            key = (verdict.stream_id, action)
            state = self._states.get(key)
            if state is None:
                state = self._states[key] = _ActionState(samples=deque(maxlen=self.window))
            state.samples.append((verdict.frame_index, result.label, result.count))
            if len(state.samples) < self.window:
                continue

            if result.count is not None:
                modal = aggregate_counts(c for _, _, c in state.samples)
                limits = self.compliance.get(action, ComplianceRange())
                positive = not check_compliance(modal, limits).compliant
                votes = sum(1 for _, _, c in state.samples if c == modal)
                agg_count: int | None = modal
            else:
                global_label = aggregate(lbl for _, lbl, _ in state.samples)
                positive = global_label is FrameLabel.POSITIVE
                votes = sum(1 for _, lbl, _ in state.samples if lbl is global_label)
                agg_count = None

            transition = None
            if positive and state.last_positive is not True:
                transition = RAISED
            elif not positive and state.last_positive is True:
                transition = CLEARED
            state.last_positive = positive
            if transition is not None:
                events.append(
                    ActionEvent(
                        stream_id=verdict.stream_id,
                        action=action,
                        state=transition,
                        window_start=state.samples[0][0],
                        window_end=state.samples[-1][0],
                        vote_count=votes,
                        window_size=self.window,
                        count=agg_count,
                        verdicts=result.verdicts,
                    )
                )
        return events
