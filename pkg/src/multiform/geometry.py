"""Axis-aligned box arithmetic and letterbox transforms.

Boxes are half-open real rectangles (x, y, w, h) in pixels; IoU and
containment use area arithmetic, not pixel counting. A LetterboxTransform
describes the aspect-preserving fit of a source rectangle into a fixed
destination canvas: scale by a single factor, then pad. Odd padding
remainders go to the right/bottom edge so transforms are deterministic.

Only coordinates live here; actual pixel resampling is done by the
backend adapters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidDetectionError

# Default gray fill for letterbox padding, following the common
# single-stage detector convention. Overridable via config.
DEFAULT_PAD_FILL = 114

# Classifier crop canvas: portrait 128 wide x 384 tall, sized for
# standing humans.
CROP_WIDTH = 128
CROP_HEIGHT = 384


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle: top-left corner plus positive extent."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"box {name} must be finite, got {v!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extent must be positive, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        # Same edge arithmetic as intersection_area, so iou(a, a) is
        # exactly 1.0 in floats.
        return (self.x2 - self.x) * (self.y2 - self.y)


def intersection_area(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: Box, b: Box) -> float:
    """Intersection over union in [0, 1]; 0 when disjoint."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def containment(a: Box, b: Box) -> float:
    """Intersection area over the smaller box's area.

    1.0 when either box is nested in the other; 0 when disjoint.
    """
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / min(a.area, b.area)


def clip_box(box: Box, bounds_w: float, bounds_h: float) -> Box | None:
    """Clamp a box to [0, bounds_w] x [0, bounds_h].

    Returns None when nothing remains inside the bounds.
    """
    x1 = min(max(box.x, 0.0), bounds_w)
    y1 = min(max(box.y, 0.0), bounds_h)
    x2 = min(max(box.x2, 0.0), bounds_w)
    y2 = min(max(box.y2, 0.0), bounds_h)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    return Box(x1, y1, x2 - x1, y2 - y1)


@dataclass(frozen=True)
class LetterboxTransform:
    """Source rectangle -> padded destination canvas mapping.

    Forward mapping of a point: (x * scale + pad_x, y * scale + pad_y).
    pad_x/pad_y are the left/top pads; any odd remainder sits on the
    right/bottom. src_size and dst_size are (w, h) pairs.
    """

    scale: float
    pad_x: float
    pad_y: float
    src_size: tuple[float, float]
    dst_size: tuple[float, float]

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.pad_x < 0 or self.pad_y < 0:
            raise ValueError(f"pads must be non-negative, got ({self.pad_x}, {self.pad_y})")

    def to_dst(self, x: float, y: float) -> tuple[float, float]:
        return x * self.scale + self.pad_x, y * self.scale + self.pad_y

    def to_src(self, x: float, y: float) -> tuple[float, float]:
        return (x - self.pad_x) / self.scale, (y - self.pad_y) / self.scale


def letterbox_fit(src: tuple[float, float], dst: tuple[float, float]) -> LetterboxTransform:
    """Fit src (w, h) into dst (w, h) preserving aspect ratio, centered."""
    src_w, src_h = src
    dst_w, dst_h = dst
    if src_w <= 0 or src_h <= 0 or dst_w <= 0 or dst_h <= 0:
        raise ValueError(f"dimensions must be positive, got src={src}, dst={dst}")
    scale = min(dst_w / src_w, dst_h / src_h)
    pad_x = math.floor((dst_w - src_w * scale) / 2)
    pad_y = math.floor((dst_h - src_h * scale) / 2)
    return LetterboxTransform(
        scale=scale,
        pad_x=float(max(pad_x, 0)),
        pad_y=float(max(pad_y, 0)),
        src_size=(float(src_w), float(src_h)),
        dst_size=(float(dst_w), float(dst_h)),
    )


def map_box_to_input(box: Box, t: LetterboxTransform) -> Box:
    """Forward-map a source-frame box into model-input coordinates."""
    x1, y1 = t.to_dst(box.x, box.y)
    x2, y2 = t.to_dst(box.x2, box.y2)
    return Box(x1, y1, x2 - x1, y2 - y1)


def map_box_to_source(box: Box, t: LetterboxTransform) -> Box:
    """Invert the letterbox mapping, clamping to the source frame.

    Raises InvalidDetectionError when the box lies entirely in the
    padding (nothing remains after clamping).
    """
    x1, y1 = t.to_src(box.x, box.y)
    x2, y2 = t.to_src(box.x2, box.y2)
    src_w, src_h = t.src_size
    clipped = clip_box(Box(x1, y1, x2 - x1, y2 - y1), src_w, src_h)
    if clipped is None:
        raise InvalidDetectionError(
            f"box ({box.x}, {box.y}, {box.w}, {box.h}) maps outside the "
            f"{src_w:g}x{src_h:g} source frame"
        )
    return clipped


def classifier_crop_geometry(
    box: Box, target: tuple[int, int] = (CROP_WIDTH, CROP_HEIGHT)
) -> LetterboxTransform:
    """Aspect-preserving fit of a body crop into the classifier canvas.

    Coordinates are local to the box (its top-left is the origin), so
    src_size is the box extent and dst_size the canvas (w, h).
    """
    return letterbox_fit((box.w, box.h), (float(target[0]), float(target[1])))
