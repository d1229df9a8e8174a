"""Streaming human action recognition.

Two-stage pipeline: a multi-form person detector labels every box as a
whole body, upper body or part of body; detections route to per-action
classifiers (or a person counter) according to the forms each action
needs; periodic per-frame verdicts aggregate by majority vote into
raised/cleared events.
"""

from .classification import ClassDistribution, DetectionVerdict, LabelSet, collapse
from .config import ValidatedConfig, load_config, print_effective, validate
from .detection import BodyForm, Detection, DetectorConfig, Frame, postprocess
from .engine import Engine, bench, evaluate
from .evaluation import ConfusionCounts, MetricReport, match_detections, metrics, score_frames
from .geometry import Box, LetterboxTransform, classifier_crop_geometry, iou, letterbox_fit
from .routing import Registry, RoutingRule, default_registry, route
from .temporal import ActionEvent, Aggregator, FrameLabel, FrameVerdict, SamplerConfig, aggregate

__version__ = "0.1.0"

__all__ = [
    "ActionEvent",
    "Aggregator",
    "BodyForm",
    "Box",
    "ClassDistribution",
    "ConfusionCounts",
    "Detection",
    "DetectionVerdict",
    "DetectorConfig",
    "Engine",
    "Frame",
    "FrameLabel",
    "FrameVerdict",
    "LabelSet",
    "LetterboxTransform",
    "MetricReport",
    "Registry",
    "RoutingRule",
    "SamplerConfig",
    "ValidatedConfig",
    "aggregate",
    "bench",
    "classifier_crop_geometry",
    "collapse",
    "default_registry",
    "evaluate",
    "iou",
    "letterbox_fit",
    "load_config",
    "match_detections",
    "metrics",
    "postprocess",
    "print_effective",
    "route",
    "score_frames",
    "validate",
]
