"""Per-detection action classification.

Each routed body crop is classified over an expanded label set and the
distribution is collapsed to the action's binary verdict. Label sets
carry confusion classes on purpose: sleep ships as sleep/sit/nosleep
because an upright sitter looks like someone slumped over a table, and
fall carries sit_on_furniture so people sitting on beds or sofas do not
trip the alarm. The verdict is argmax-then-map: positive iff the top
class belongs to the action's positive set.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .detection import Detection
from .errors import BackendError, FixtureError, ShapeMismatchError
from .geometry import CROP_HEIGHT, CROP_WIDTH, DEFAULT_PAD_FILL, Box, classifier_crop_geometry

PROB_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class LabelSet:
    """Ordered class names plus the subset mapped to a positive verdict."""

    names: tuple[str, ...]
    positive: frozenset[str]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"label names must be unique, got {self.names}")
        if not self.positive:
            raise ValueError("positive label set must be nonempty")
        unknown = self.positive - set(self.names)
        if unknown:
            raise ValueError(f"positive labels not in label set: {sorted(unknown)}")


DEFAULT_LABEL_SETS: dict[str, LabelSet] = {
    "fall": LabelSet(("fall", "sit_on_furniture", "other"), frozenset({"fall"})),
    "sleep": LabelSet(("sleep", "sit", "nosleep"), frozenset({"sleep"})),
    "jump": LabelSet(("jump", "other"), frozenset({"jump"})),
    "stand": LabelSet(("stand", "other"), frozenset({"stand"})),
    "sit": LabelSet(("sit", "other"), frozenset({"sit"})),
}


@dataclass(frozen=True)
class ClassDistribution:
    """Probabilities aligned to an ordered tuple of label names."""

    labels: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.probs):
            raise ValueError(
                f"{len(self.probs)} probabilities for {len(self.labels)} labels"
            )
        if any(p < 0.0 or p > 1.0 for p in self.probs):
            raise ValueError(f"probabilities must lie in [0, 1], got {self.probs}")
        if abs(sum(self.probs) - 1.0) > PROB_SUM_TOLERANCE:
            raise ValueError(f"probabilities must sum to 1, got {sum(self.probs)}")


@dataclass(frozen=True)
class DetectionVerdict:
    detection: Detection
    action: str
    positive: bool
    score: float
    top_label: str


def uniform_distribution(labels: Sequence[str]) -> ClassDistribution:
    n = len(labels)
    return ClassDistribution(tuple(labels), tuple([1.0 / n] * n))


def collapse(
    dist: ClassDistribution,
    labels: LabelSet,
    positive_mass_threshold: float | None = None,
) -> tuple[bool, float, str]:
    """Reduce a distribution to (positive, score, top_label).

    top_label is the argmax (exact ties go to the earliest label in
    declaration order); score is the total mass on positive labels. The
    verdict follows the argmax unless positive_mass_threshold is set, in
    which case positive means score >= threshold.
    """
    if dist.labels != labels.names:
        raise ValueError(
            f"distribution labels {dist.labels} do not match label set {labels.names}"
        )
    top_index = max(range(len(dist.probs)), key=lambda i: (dist.probs[i], -i))
    top_label = dist.labels[top_index]
    score = sum(p for name, p in zip(dist.labels, dist.probs) if name in labels.positive)
    if positive_mass_threshold is None:
        positive = top_label in labels.positive
    else:
        positive = score >= positive_mass_threshold
    return positive, score, top_label


class Classifier(Protocol):
    labels: tuple[str, ...]
    input_size: tuple[int, int]  # (w, h) of the expected crop canvas

    def predict(
        self, canvas: np.ndarray, frame_index: int, detection_index: int
    ) -> ClassDistribution: ...


def classify(
    canvas: np.ndarray,
    classifier: Classifier,
    frame_index: int = -1,
    detection_index: int = -1,
) -> ClassDistribution:
    """Validate the crop canvas and run the classifier on it."""
    w, h = classifier.input_size
    shape = np.shape(canvas)
    if shape != (h, w, 3):
        raise ValueError(f"crop canvas must be {h}x{w}x3 RGB, got shape {shape}")
    return classifier.predict(canvas, frame_index, detection_index)


def parse_classifier_fixture(path: str | Path):
    """Parse a scripted-classifier fixture.

    Header `labels: a,b,c` declares label order; an optional
    `default: uniform` or `default: p1 .. pk` line sets the distribution
    for keys missing from the fixture (uniform when omitted). Records
    are `<frame_index> <detection_index> <p1> .. <pk>` lines.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise FixtureError(f"cannot read classifier fixture {path}: {e}") from e
    labels: tuple[str, ...] | None = None
    default: ClassDistribution | None = None
    table: dict[tuple[int, int], ClassDistribution] = {}

    def parse_probs(tokens, lineno) -> ClassDistribution:
        try:
            probs = tuple(float(t) for t in tokens)
        except ValueError as e:
            raise FixtureError(f"{path}:{lineno}: {e}") from e
        try:
            return ClassDistribution(labels, probs)
        except ValueError as e:
            raise FixtureError(f"{path}:{lineno}: {e}") from e

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("labels:"):
            if labels is not None:
                raise FixtureError(f"{path}:{lineno}: duplicate labels header")
            labels = tuple(t.strip() for t in line[len("labels:") :].split(",") if t.strip())
            if not labels:
                raise FixtureError(f"{path}:{lineno}: labels header names no labels")
            continue
        if labels is None:
            raise FixtureError(f"{path}:{lineno}: records before the 'labels:' header")
        if line.startswith("default:"):
            spec = line[len("default:") :].strip()
            if spec == "uniform":
                default = uniform_distribution(labels)
            else:
                default = parse_probs(spec.split(), lineno)
            continue
        parts = line.split()
        if len(parts) != 2 + len(labels):
            raise FixtureError(
                f"{path}:{lineno}: expected frame, detection and "
                f"{len(labels)} probabilities, got {len(parts)} fields"
            )
        try:
            frame_index, det_index = int(parts[0]), int(parts[1])
        except ValueError as e:
            raise FixtureError(f"{path}:{lineno}: {e}") from e
        table[(frame_index, det_index)] = parse_probs(parts[2:], lineno)

    if labels is None:
        raise FixtureError(f"{path}: missing 'labels:' header")
    if default is None:
        default = uniform_distribution(labels)
    return labels, default, table


class ScriptedClassifier:
    """Replays fixture distributions keyed by (frame, detection) index."""

    def __init__(
        self,
        fixture: str | Path,
        input_size: tuple[int, int] = (CROP_WIDTH, CROP_HEIGHT),
    ):
        self.labels, self._default, self._table = parse_classifier_fixture(fixture)
        self.input_size = input_size

    def predict(self, canvas, frame_index: int, detection_index: int) -> ClassDistribution:
        return self._table.get((frame_index, detection_index), self._default)


class OnnxClassifier:
    """ONNX inference classifier over the fixed-size crop canvas.

    The model must emit one row of len(labels) values (probabilities or
    logits; logits are softmaxed). `session` may be injected for tests.
    """

    def __init__(
        self,
        model_path: str | Path,
        labels: Sequence[str],
        input_size: tuple[int, int] = (CROP_WIDTH, CROP_HEIGHT),
        session=None,
    ):
        from .detection import load_onnx_session

        self.labels = tuple(labels)
        self.input_size = input_size
        self._session = session if session is not None else load_onnx_session(model_path)
        self._input_name = self._session.get_inputs()[0].name

    def predict(self, canvas, frame_index: int, detection_index: int) -> ClassDistribution:
        feed = canvas.astype(np.float32).transpose(2, 0, 1)[np.newaxis] / 255.0
        try:
            outputs = self._session.run(None, {self._input_name: feed})
        except Exception as e:
            raise BackendError(f"classifier inference failed: {e}") from e
        vector = np.asarray(outputs[0], dtype=np.float64).reshape(-1)
        if vector.shape[0] != len(self.labels):
            raise ShapeMismatchError(
                f"classifier head emits {vector.shape[0]} classes but the label "
                f"set declares {len(self.labels)}"
            )
        return ClassDistribution(self.labels, _as_probabilities(vector))


def _as_probabilities(vector: np.ndarray) -> tuple[float, ...]:
    # Heads that already emit a softmax pass through; anything else
    # (logits) gets softmaxed.
    if np.all(vector >= 0.0) and np.all(vector <= 1.0) and abs(vector.sum() - 1.0) <= 1e-3:
        total = vector.sum()
        return tuple(float(v / total) for v in vector)
    shifted = np.exp(vector - vector.max())
    return tuple(float(v) for v in shifted / shifted.sum())


def build_crop(
    pixels: np.ndarray,
    box: Box,
    target: tuple[int, int] = (CROP_WIDTH, CROP_HEIGHT),
    fill: int = DEFAULT_PAD_FILL,
) -> np.ndarray:
    """Cut the box region out of a frame and letterbox it onto the
    classifier canvas. Returns an HxWx3 uint8 array."""
    from PIL import Image

    h, w = pixels.shape[:2]
    x1 = max(0, int(box.x))
    y1 = max(0, int(box.y))
    x2 = min(w, max(x1 + 1, int(round(box.x2))))
    y2 = min(h, max(y1 + 1, int(round(box.y2))))
    region = pixels[y1:y2, x1:x2]
    t = classifier_crop_geometry(Box(0, 0, x2 - x1, y2 - y1), target)
    scaled_w = max(1, round((x2 - x1) * t.scale))
    scaled_h = max(1, round((y2 - y1) * t.scale))
    img = Image.fromarray(region).resize((scaled_w, scaled_h), Image.BILINEAR)
    canvas = np.full((target[1], target[0], 3), fill, dtype=np.uint8)
    px, py = int(t.pad_x), int(t.pad_y)
    canvas[py : py + scaled_h, px : px + scaled_w] = np.asarray(img)
    return canvas
