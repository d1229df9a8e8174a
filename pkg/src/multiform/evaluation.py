"""Metrics and scoring against ground truth.

Sensitivity = tp/(tp+fn), specificity = tn/(tn+fp), precision =
tp/(tp+fp), recall = tp/(tp+fn); a zero denominator makes the metric
absent rather than zero. Detection matching is greedy in descending
confidence at a configurable IoU threshold, optionally requiring equal
body forms. Frame scoring reduces three-way labels to the binary
confusion table by counting `absent` as negative; the raw labels are
preserved in JSON reports for audit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .annotation import AnnotationRecord
from .detection import Detection
from .geometry import iou
from .temporal import FrameLabel

DEFAULT_MATCH_IOU = 0.5

# Column order follows the shipped application table.
TABLE_ORDER = ("fall", "sleep", "jump", "on_duty")

ABSENT_CELL = "—"  # em dash


@dataclass(frozen=True)
class ConfusionCounts:
    """tp/fp/tn/fn tallies. tn is None where true negatives are
    undefined (detection matching has no negative proposals)."""

    tp: int = 0
    fp: int = 0
    tn: int | None = 0
    fn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.tn is not None and self.tn < 0:
            raise ValueError("tn must be >= 0 or None")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        tn = None if self.tn is None or other.tn is None else self.tn + other.tn
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, tn, self.fn + other.fn)


@dataclass(frozen=True)
class ActionMetrics:
    counts: ConfusionCounts
    sensitivity: float | None
    specificity: float | None
    precision: float | None
    recall: float | None


@dataclass
class MetricReport:
    entries: dict[str, ActionMetrics]
    notes: dict[str, str]


def metrics(c: ConfusionCounts) -> ActionMetrics:
    def ratio(num: int, den: int) -> float | None:
        return num / den if den else None

    return ActionMetrics(
        counts=c,
        sensitivity=ratio(c.tp, c.tp + c.fn),
        specificity=None if c.tn is None else ratio(c.tn, c.tn + c.fp),
        precision=ratio(c.tp, c.tp + c.fp),
        recall=ratio(c.tp, c.tp + c.fn),
    )


def match_detections(
    pred: Sequence[Detection],
    gt: Sequence[AnnotationRecord],
    iou_threshold: float = DEFAULT_MATCH_IOU,
    form_aware: bool = True,
) -> ConfusionCounts:
    """Greedy one-to-one matching of predictions to ground truth.

    Predictions are consumed in descending confidence; each may claim
    the unmatched ground truth with the highest IoU above the threshold
    (and the same form, when form_aware). tn is undefined here.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    order = sorted(
        range(len(pred)),
        key=lambda i: (
            -pred[i].confidence,
            -pred[i].box.area,
            pred[i].box.x,
            pred[i].box.y,
            pred[i].box.w,
            pred[i].box.h,
        ),
    )
    matched_gt: set[int] = set()
    tp = 0
    for i in order:
        p = pred[i]
        best_j = -1
        best_iou = iou_threshold
        for j, g in enumerate(gt):
            if j in matched_gt:
                continue
            if form_aware and g.form is not p.form:
                continue
            overlap = iou(p.box, g.bbox)
            if overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j >= 0:
            matched_gt.add(best_j)
            tp += 1
    return ConfusionCounts(tp=tp, fp=len(pred) - tp, tn=None, fn=len(gt) - tp)


def score_frames(
    pred: Sequence[FrameLabel], gt: Sequence[bool]
) -> ConfusionCounts:
    """Cellwise confusion over aligned frame sequences.

    gt holds booleans (True = the action is happening); `absent`
    predictions count as negative.
    """
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gt)} truths")
    tp = fp = tn = fn = 0
    for p, truth in zip(pred, gt):
        predicted_positive = p is FrameLabel.POSITIVE
        if predicted_positive and truth:
            tp += 1
        elif predicted_positive and not truth:
            fp += 1
        elif not predicted_positive and truth:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def intervals_from_labels(
    frames: Sequence[int], positive: Sequence[bool]
) -> list[tuple[int, int]]:
    """Runs of consecutive positive entries, as inclusive
    (first_frame, last_frame) intervals. frames must be sorted."""
    if len(frames) != len(positive):
        raise ValueError("frames and labels must align")
    intervals: list[tuple[int, int]] = []
    start: int | None = None
    last: int | None = None
    for f, p in zip(frames, positive):
        if p:
            if start is None:
                start = f
            last = f
        elif start is not None:
            intervals.append((start, last))
            start = None
    if start is not None:
        intervals.append((start, last))
    return intervals


def score_events(
    pred_intervals: Sequence[tuple[int, int]],
    truth_intervals: Sequence[tuple[int, int]],
) -> ConfusionCounts:
    """Interval-level scoring: a truth interval is hit when any
    predicted interval overlaps it; predictions hitting no truth are
    false positives. tn is undefined."""

    def overlaps(a, b):
        return a[0] <= b[1] and b[0] <= a[1]

    tp = sum(1 for t in truth_intervals if any(overlaps(p, t) for p in pred_intervals))
    fp = sum(1 for p in pred_intervals if not any(overlaps(p, t) for t in truth_intervals))
    return ConfusionCounts(tp=tp, fp=fp, tn=None, fn=len(truth_intervals) - tp)


def _fmt(value: float | None) -> str:
    return ABSENT_CELL if value is None else f"{value * 100:.1f}"


def _action_order(actions) -> list[str]:
    head = [a for a in TABLE_ORDER if a in actions]
    tail = sorted(a for a in actions if a not in TABLE_ORDER)
    return head + tail


def render_report(report: MetricReport) -> str:
    """Fixed-layout text table; percentages to one decimal, absent
    metrics as a dash. Stable across runs for golden-file tests."""
    header = f"{'action':<12}  {'sensitivity / specificity':<27}  {'precision / recall':<21}"
    lines = [header, "-" * len(header)]
    for action in _action_order(report.entries):
        m = report.entries[action]
        sens_spec = f"{_fmt(m.sensitivity)} / {_fmt(m.specificity)}"
        prec_rec = f"{_fmt(m.precision)} / {_fmt(m.recall)}"
        lines.append(f"{action:<12}  {sens_spec:<27}  {prec_rec:<21}")
    for key in sorted(report.notes):
        lines.append(f"note: {key}: {report.notes[key]}")
    return "\n".join(lines) + "\n"


def report_to_json(report: MetricReport) -> dict:
    """JSON-serializable form of a report (schema in the README)."""
    out: dict = {"actions": {}, "notes": dict(report.notes)}
    for action in _action_order(report.entries):
        m = report.entries[action]
        c = m.counts
        out["actions"][action] = {
            "counts": {"tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn},
            "sensitivity": m.sensitivity,
            "specificity": m.specificity,
            "precision": m.precision,
            "recall": m.recall,
        }
    return out
