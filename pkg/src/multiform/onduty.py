"""Person counting and compliance checks for on-duty monitoring.

A single person can surface under more than one body form (a whole-body
box plus the nested upper-body box), so counting starts with a
cross-form dedup: when boxes of different forms nest past a containment
threshold, only the most complete form survives. Same-form pairs are
left alone; NMS already handled those. Containment (intersection over
the smaller area) is the right overlap measure here because an upper
body sits inside its whole body rather than resembling it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .detection import Detection
from .geometry import containment

DEFAULT_CONTAINMENT_THRESHOLD = 0.7

UNDER = "under"
OVER = "over"
OK = "ok"


@dataclass(frozen=True)
class ComplianceRange:
    """Allowed person count: min_count..max_count, max None = unbounded."""

    min_count: int = 1
    max_count: int | None = None

    def __post_init__(self):
        if self.min_count < 0:
            raise ValueError(f"min_count must be >= 0, got {self.min_count}")
        if self.max_count is not None and self.max_count < self.min_count:
            raise ValueError(
                f"max_count {self.max_count} must be >= min_count {self.min_count}"
            )


@dataclass(frozen=True)
class CountVerdict:
    count: int
    compliant: bool
    direction: str  # "under" | "over" | "ok"

    def __post_init__(self):
        if self.direction not in (UNDER, OVER, OK):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.compliant != (self.direction == OK):
            raise ValueError("compliant must hold exactly when direction is 'ok'")


def dedup_cross_form(
    detections: Sequence[Detection],
    containment_threshold: float = DEFAULT_CONTAINMENT_THRESHOLD,
) -> list[Detection]:
    """Drop detections nested inside a more complete form of (likely)
    the same person. Order-independent: survival is a predicate on the
    original set."""

    def dominated(det: Detection) -> bool:
        return any(
            other.form.completeness > det.form.completeness
            and containment(det.box, other.box) > containment_threshold
            for other in detections
        )

    return [d for d in detections if not dominated(d)]


def count_persons(deduped: Sequence[Detection]) -> int:
    return len(deduped)


def check_compliance(count: int, limits: ComplianceRange) -> CountVerdict:
    if count < limits.min_count:
        return CountVerdict(count, False, UNDER)
    if limits.max_count is not None and count > limits.max_count:
        return CountVerdict(count, False, OVER)
    return CountVerdict(count, True, OK)
