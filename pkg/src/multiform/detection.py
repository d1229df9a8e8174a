"""Multi-form human detection.

A detector emits scored boxes labeled with one of three body forms
(whole body, upper body, part of body). Two backends share the same
postprocessing: a scripted backend that replays a fixture file for
deterministic tests, and an ONNX backend for real inference.

NMS runs independently per form: whole and upper boxes of one person
overlap heavily by construction, and cross-form suppression would
starve the downstream action routing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import BackendError, FixtureError, InvalidDetectionError, ShapeMismatchError
from .geometry import (
    Box,
    clip_box,
    iou,
    letterbox_fit,
    map_box_to_source,
    DEFAULT_PAD_FILL,
)


class BodyForm(enum.Enum):
    """Detection label; ordered by completeness (whole > upper > part)."""

    WHOLE = "whole"
    UPPER = "upper"
    PART = "part"

    @property
    def completeness(self) -> int:
        return {"whole": 2, "upper": 1, "part": 0}[self.value]

    @classmethod
    def from_name(cls, name: str) -> "BodyForm":
        try:
            return cls(name.lower())
        except ValueError:
            valid = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown body form {name!r} (expected one of: {valid})") from None


ALL_FORMS = frozenset(BodyForm)


@dataclass(frozen=True)
class Detection:
    """A scored, form-labeled box in source-frame pixel coordinates."""

    box: Box
    form: BodyForm
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class DetectorConfig:
    input_size: int = 640
    score_threshold: float = 0.25
    nms_iou_threshold: float = 0.45
    letterbox_fill: int = DEFAULT_PAD_FILL

    def __post_init__(self):
        if self.input_size <= 0:
            raise ValueError(f"input_size must be positive, got {self.input_size}")
        for name in ("score_threshold", "nms_iou_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")


@dataclass(frozen=True)
class Frame:
    """One video frame. pixels is HxWx3 uint8 RGB, or None for scripted
    runs that never touch image data."""

    stream_id: str
    index: int
    width: int
    height: int
    timestamp_ms: float
    pixels: np.ndarray | None = field(default=None, compare=False, repr=False)


class Detector(Protocol):
    def detect(self, frame: Frame) -> list[Detection]: ...


Candidate = tuple[Box, BodyForm, float]


def _rank_key(box: Box, score: float):
    # Score ties broken by larger area, then lexicographic coordinates,
    # so suppression order (and output order) is deterministic.
    return (-score, -box.area, box.x, box.y, box.w, box.h)


def postprocess(candidates: Sequence[Candidate], config: DetectorConfig) -> list[Detection]:
    """Score-filter then greedy per-form NMS; sorted by descending confidence."""
    alive = sorted(
        (c for c in candidates if c[2] >= config.score_threshold),
        key=lambda c: _rank_key(c[0], c[2]),
    )
    kept: list[Candidate] = []
    for box, form, score in alive:
        if any(
            kform is form and iou(kbox, box) > config.nms_iou_threshold
            for kbox, kform, _ in kept
        ):
            continue
        kept.append((box, form, score))
    return [Detection(box=b, form=f, confidence=s) for b, f, s in kept]


def parse_detection_fixture(path: str | Path) -> dict[int, list[Candidate]]:
    """Parse a scripted-detector fixture.

    One record per line: `<frame_index> <form> <x> <y> <w> <h> <score>`,
    whitespace-separated, `#` starts a comment.
    """
    path = Path(path)
    frames: dict[int, list[Candidate]] = {}
    try:
        text = path.read_text()
    except OSError as e:
        raise FixtureError(f"cannot read detection fixture {path}: {e}") from e
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 7:
            raise FixtureError(
                f"{path}:{lineno}: expected 7 fields "
                f"(frame form x y w h score), got {len(parts)}"
            )
        try:
            index = int(parts[0])
            form = BodyForm.from_name(parts[1])
            x, y, w, h, score = (float(v) for v in parts[2:])
        except ValueError as e:
            raise FixtureError(f"{path}:{lineno}: {e}") from e
        if index < 0:
            raise FixtureError(f"{path}:{lineno}: frame index must be >= 0, got {index}")
        if not 0.0 <= score <= 1.0:
            raise FixtureError(f"{path}:{lineno}: score must be in [0, 1], got {score}")
        try:
            box = Box(x, y, w, h)
        except ValueError as e:
            raise FixtureError(f"{path}:{lineno}: {e}") from e
        frames.setdefault(index, []).append((box, form, score))
    return frames


class ScriptedDetector:
    """Replays fixture detections per frame index. Frames absent from
    the fixture yield no detections."""

    def __init__(self, fixture: str | Path, config: DetectorConfig | None = None):
        self.config = config or DetectorConfig()
        self._frames = parse_detection_fixture(fixture)

    def detect(self, frame: Frame) -> list[Detection]:
        candidates = []
        for box, form, score in self._frames.get(frame.index, []):
            clipped = clip_box(box, frame.width, frame.height)
            if clipped is None:
                continue
            candidates.append((clipped, form, score))
        return postprocess(candidates, self.config)


# --- ONNX backend ---------------------------------------------------------
#
# Expected model contract (see docs/model_contract.md):
#   input : float32 [1, 3, S, S], RGB scaled to [0, 1]
#   output: float32 [N, 8] or [1, N, 8] rows of
#           (cx, cy, w, h, objectness, p_whole, p_upper, p_part)
#           with box coordinates in model-input pixels.

DETECTOR_OUTPUT_WIDTH = 8
_FORM_COLUMNS = (BodyForm.WHOLE, BodyForm.UPPER, BodyForm.PART)


def decode_detector_output(raw: np.ndarray) -> list[tuple[Box, BodyForm, float]]:
    """Turn a raw detection-head tensor into candidate triples.

    Candidate score is objectness times the best form probability; the
    form is the argmax of the three form columns. Rows with degenerate
    extents are dropped.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2 or arr.shape[1] != DETECTOR_OUTPUT_WIDTH:
        raise ShapeMismatchError(
            f"detection head must emit (N, {DETECTOR_OUTPUT_WIDTH}) rows of "
            f"(cx, cy, w, h, obj, whole, upper, part); got shape {tuple(np.shape(raw))}"
        )
    candidates = []
    for row in arr:
        cx, cy, w, h, obj = row[:5]
        if w <= 0 or h <= 0:
            continue
        form_scores = row[5:8]
        form = _FORM_COLUMNS[int(np.argmax(form_scores))]
        score = float(obj) * float(np.max(form_scores))
        score = min(max(score, 0.0), 1.0)
        candidates.append((Box(cx - w / 2, cy - h / 2, w, h), form, score))
    return candidates


def letterbox_image(pixels: np.ndarray, size: int, fill: int) -> tuple[np.ndarray, "object"]:
    """Resample an HxWx3 uint8 frame onto a size x size letterbox canvas.

    Returns (canvas, transform). Uses PIL bilinear resampling; the
    transform maps source coordinates to canvas coordinates.
    """
    from PIL import Image

    h, w = pixels.shape[:2]
    t = letterbox_fit((w, h), (size, size))
    scaled_w = max(1, round(w * t.scale))
    scaled_h = max(1, round(h * t.scale))
    img = Image.fromarray(pixels).resize((scaled_w, scaled_h), Image.BILINEAR)
    canvas = np.full((size, size, 3), fill, dtype=np.uint8)
    px, py = int(t.pad_x), int(t.pad_y)
    canvas[py : py + scaled_h, px : px + scaled_w] = np.asarray(img)
    return canvas, t


def _to_model_input(canvas: np.ndarray) -> np.ndarray:
    chw = canvas.astype(np.float32).transpose(2, 0, 1) / 255.0
    return chw[np.newaxis]


def load_onnx_session(model_path: str | Path):
    try:
        import onnxruntime
    except ImportError as e:
        raise BackendError(
            "onnxruntime is required for ONNX backends; install the 'onnx' extra"
        ) from e
    path = Path(model_path)
    if not path.is_file():
        raise BackendError(f"model file not found: {path}")
    try:
        return onnxruntime.InferenceSession(str(path), providers=["CPUExecutionProvider"])
    except Exception as e:
        raise BackendError(f"failed to load ONNX model {path}: {e}") from e


class OnnxDetector:
    """ONNX inference detector.

    `session` may be injected for tests; anything with onnxruntime's
    `run(output_names, feed) -> [array]` and `get_inputs()` shape works.
    """

    def __init__(self, model_path: str | Path, config: DetectorConfig | None = None, session=None):
        self.config = config or DetectorConfig()
        self._session = session if session is not None else load_onnx_session(model_path)
        self._input_name = self._session.get_inputs()[0].name

    def detect(self, frame: Frame) -> list[Detection]:
        if frame.pixels is None:
            raise BackendError(
                f"frame {frame.stream_id}/{frame.index} carries no pixel data; "
                "the ONNX detector needs image frames"
            )
        canvas, t = letterbox_image(
            frame.pixels, self.config.input_size, self.config.letterbox_fill
        )
        try:
            outputs = self._session.run(None, {self._input_name: _to_model_input(canvas)})
        except Exception as e:
            raise BackendError(
                f"detector inference failed on frame {frame.stream_id}/{frame.index}: {e}"
            ) from e
        candidates = []
        for box, form, score in decode_detector_output(outputs[0]):
            try:
                mapped = map_box_to_source(box, t)
            except InvalidDetectionError:
                continue  # box entirely in the padding: model artifact, drop it
            candidates.append((mapped, form, score))
        return postprocess(candidates, self.config)
