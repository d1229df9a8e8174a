"""Configuration schema, validation and canonical serialization.

The config dialect is YAML. validate() returns a fully defaulted
ValidatedConfig or raises ConfigError carrying one message per
offending path; print_effective() emits a canonical sorted-key dump
such that validate(print_effective(cfg)) == cfg.

Every numeric default is recorded in DEFAULT_PROVENANCE with a note on
where it comes from, so the schema documentation cannot silently drift
from the shipped values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .classification import DEFAULT_LABEL_SETS
from .detection import BodyForm
from .errors import ConfigError
from .geometry import CROP_HEIGHT, CROP_WIDTH, DEFAULT_PAD_FILL
from .onduty import DEFAULT_CONTAINMENT_THRESHOLD

FORM_NAMES = tuple(f.value for f in BodyForm)
_FORM_CANONICAL_ORDER = {"whole": 0, "upper": 1, "part": 2}

SOURCE_KINDS = ("synthetic", "directory", "pipe")
BACKEND_KINDS = ("scripted", "onnx")

# Provenance notes for every numeric default: which values are fixed
# conventions of the model geometry and which are tuning knobs.
DEFAULT_PROVENANCE = {
    "detector.input_size": "square detector input, deployment convention for the m-size one-stage model",
    "detector.score_threshold": "de-facto one-stage detector decoding default; tune per deployment",
    "detector.nms_iou_threshold": "de-facto greedy-NMS default; tune per deployment",
    "detector.letterbox_fill": "gray 114 letterbox fill, common one-stage detector convention",
    "crop.width": "classifier crop canvas width; portrait geometry suits standing humans",
    "crop.height": "classifier crop canvas height; portrait geometry suits standing humans",
    "crop.fill": "mid-gray crop padding preserves posture cues better than stretching",
    "sampler.period": "deployment knob: process every Nth frame (about 5 samples/s at 25 fps)",
    "sampler.window": "deployment knob: sampled frames per majority-vote decision",
    "on_duty.min": "default staffing floor: at least one person on duty",
    "on_duty.containment_threshold": "nesting ratio above which two body forms collapse to one person",
}


@dataclass(frozen=True)
class SourceConfig:
    kind: str
    path: str | None = None
    manifest: str | None = None
    frames: int | None = None
    width: int | None = None
    height: int | None = None
    fps: float = 25.0


@dataclass(frozen=True)
class StreamConfig:
    id: str
    source: SourceConfig


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # "scripted" | "onnx"
    path: str


@dataclass(frozen=True)
class DetectorSettings:
    backend: BackendConfig | None = None
    input_size: int = 640
    score_threshold: float = 0.25
    nms_iou_threshold: float = 0.45
    letterbox_fill: int = DEFAULT_PAD_FILL


@dataclass(frozen=True)
class RegistryEntry:
    action: str
    forms: tuple[str, ...]
    handler: str  # "counter" or "classifier <name>"

    @property
    def is_counter(self) -> bool:
        return self.handler == "counter"

    @property
    def classifier_name(self) -> str | None:
        if self.handler.startswith("classifier "):
            return self.handler.split(None, 1)[1]
        return None


@dataclass(frozen=True)
class ClassifierSettings:
    labels: tuple[str, ...]
    positive: tuple[str, ...]
    backend: BackendConfig | None = None
    positive_mass_threshold: float | None = None


@dataclass(frozen=True)
class CropConfig:
    width: int = CROP_WIDTH
    height: int = CROP_HEIGHT
    fill: int = DEFAULT_PAD_FILL


@dataclass(frozen=True)
class SamplerSettings:
    period: int = 5
    window: int = 5


@dataclass(frozen=True)
class OnDutyConfig:
    min: int = 1
    max: int | None = None
    containment_threshold: float = DEFAULT_CONTAINMENT_THRESHOLD


@dataclass(frozen=True)
class WebhookConfig:
    url: str
    timeout_s: float = 2.0
    retries: int = 3
    queue_size: int = 256
    actions: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SinkConfig:
    event_log: str | None = None
    webhooks: tuple[WebhookConfig, ...] = ()


def default_registry_entries() -> tuple[RegistryEntry, ...]:
    return (
        RegistryEntry("fall", ("whole",), "classifier fall"),
        RegistryEntry("sleep", ("whole", "upper"), "classifier sleep"),
        RegistryEntry("on_duty", ("whole", "upper", "part"), "counter"),
        RegistryEntry("jump", ("whole",), "classifier jump"),
        RegistryEntry("stand", ("whole",), "classifier stand"),
        RegistryEntry("sit", ("upper",), "classifier sit"),
    )


def default_classifier_settings() -> dict[str, ClassifierSettings]:
    out = {}
    for name, label_set in DEFAULT_LABEL_SETS.items():
        out[name] = ClassifierSettings(
            labels=label_set.names,
            positive=tuple(n for n in label_set.names if n in label_set.positive),
        )
    return out


@dataclass(frozen=True)
class ValidatedConfig:
    streams: tuple[StreamConfig, ...] = ()
    detector: DetectorSettings = DetectorSettings()
    registry: tuple[RegistryEntry, ...] = field(default_factory=default_registry_entries)
    classifiers: dict[str, ClassifierSettings] = field(default_factory=default_classifier_settings)
    crop: CropConfig = CropConfig()
    sampler: SamplerSettings = SamplerSettings()
    on_duty: OnDutyConfig = OnDutyConfig()
    sinks: SinkConfig = SinkConfig()
    # Directory that relative fixture/model/log paths resolve against.
    # Runtime context, not config content: excluded from equality.
    base_dir: Path = field(default_factory=Path.cwd, compare=False)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


class _Errors:
    def __init__(self):
        self.messages: list[str] = []

    def add(self, path: str, message: str):
        self.messages.append(f"{path}: {message}")

    def raise_if_any(self):
        if self.messages:
            raise ConfigError(self.messages)


def _expect_mapping(value, path, errors) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        errors.add(path, f"expected a mapping, got {type(value).__name__}")
        return {}
    return dict(value)


def _take(raw: dict, key, default=None):
    return raw.pop(key, default)


def _reject_unknown(raw: dict, path, errors):
    for key in raw:
        errors.add(f"{path}.{key}" if path else str(key), "unknown key")


def _int_in(value, path, errors, low=None, high=None, default=0, allow_none=False):
    if value is None:
        if allow_none:
            return None
        value = default
    if isinstance(value, bool) or not isinstance(value, int):
        errors.add(path, f"expected an integer, got {value!r}")
        return default
    if low is not None and value < low:
        errors.add(path, f"must be >= {low}, got {value}")
        return default
    if high is not None and value > high:
        errors.add(path, f"must be <= {high}, got {value}")
        return default
    return value


def _float_in(value, path, errors, low, high, default, open_interval=True, allow_none=False):
    if value is None:
        if allow_none:
            return None
        value = default
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.add(path, f"expected a number, got {value!r}")
        return default
    value = float(value)
    ok = low < value < high if open_interval else low <= value <= high
    if not ok:
        bounds = f"({low}, {high})" if open_interval else f"[{low}, {high}]"
        errors.add(path, f"must lie in {bounds}, got {value}")
        return default
    return value


def _parse_backend(value, path, errors) -> BackendConfig | None:
    if value is None:
        return None
    raw = _expect_mapping(value, path, errors)
    if not raw:
        return None
    kind = _take(raw, "kind")
    if kind not in BACKEND_KINDS:
        errors.add(f"{path}.kind", f"expected one of {BACKEND_KINDS}, got {kind!r}")
        return None
    path_key = "fixture" if kind == "scripted" else "model"
    file_path = _take(raw, path_key)
    _reject_unknown(raw, path, errors)
    if not isinstance(file_path, str) or not file_path:
        errors.add(f"{path}.{path_key}", f"expected a file path, got {file_path!r}")
        return None
    return BackendConfig(kind=kind, path=file_path)


def _parse_source(value, path, errors) -> SourceConfig:
    raw = _expect_mapping(value, path, errors)
    kind = _take(raw, "kind")
    if kind not in SOURCE_KINDS:
        errors.add(f"{path}.kind", f"expected one of {SOURCE_KINDS}, got {kind!r}")
        kind = "synthetic"
    src_path = _take(raw, "path")
    manifest = _take(raw, "manifest")
    frames = _int_in(_take(raw, "frames"), f"{path}.frames", errors, low=0, allow_none=True)
    width = _int_in(_take(raw, "width"), f"{path}.width", errors, low=1, allow_none=True)
    height = _int_in(_take(raw, "height"), f"{path}.height", errors, low=1, allow_none=True)
    fps = _float_in(_take(raw, "fps"), f"{path}.fps", errors, 0.0, 1e6, 25.0)
    _reject_unknown(raw, path, errors)
    if kind == "synthetic":
        if frames is None:
            errors.add(f"{path}.frames", "synthetic sources need a frame count")
            frames = 0
        width = width or 1280
        height = height or 720
    elif kind == "directory":
        if not src_path:
            errors.add(f"{path}.path", "directory sources need a path")
    elif kind == "pipe":
        if not src_path:
            errors.add(f"{path}.path", "pipe sources need a path ('-' for stdin)")
    return SourceConfig(
        kind=kind, path=src_path, manifest=manifest,
        frames=frames, width=width, height=height, fps=fps,
    )


def _parse_streams(value, errors) -> tuple[StreamConfig, ...]:
    if value is None:
        return ()
    if not isinstance(value, list):
        errors.add("streams", f"expected a list, got {type(value).__name__}")
        return ()
    streams = []
    seen_ids = set()
    for i, item in enumerate(value):
        path = f"streams[{i}]"
        raw = _expect_mapping(item, path, errors)
        stream_id = _take(raw, "id")
        if not isinstance(stream_id, str) or not stream_id:
            errors.add(f"{path}.id", f"expected a nonempty string, got {stream_id!r}")
            stream_id = f"stream{i}"
        if stream_id in seen_ids:
            errors.add(f"{path}.id", f"duplicate stream id {stream_id!r}")
        seen_ids.add(stream_id)
        source = _parse_source(_take(raw, "source"), f"{path}.source", errors)
        _reject_unknown(raw, path, errors)
        streams.append(StreamConfig(id=stream_id, source=source))
    return tuple(streams)


def _parse_detector(value, errors) -> DetectorSettings:
    raw = _expect_mapping(value, "detector", errors)
    backend = _parse_backend(_take(raw, "backend"), "detector.backend", errors)
    input_size = _int_in(_take(raw, "input_size"), "detector.input_size", errors, low=1, default=640)
    score = _float_in(_take(raw, "score_threshold"), "detector.score_threshold", errors, 0.0, 1.0, 0.25)
    nms = _float_in(_take(raw, "nms_iou_threshold"), "detector.nms_iou_threshold", errors, 0.0, 1.0, 0.45)
    fill = _int_in(_take(raw, "letterbox_fill"), "detector.letterbox_fill", errors,
                   low=0, high=255, default=DEFAULT_PAD_FILL)
    _reject_unknown(raw, "detector", errors)
    return DetectorSettings(backend, input_size, score, nms, fill)


def _parse_registry(value, errors) -> tuple[RegistryEntry, ...]:
    if value is None:
        return default_registry_entries()
    if not isinstance(value, list):
        errors.add("registry", f"expected a list, got {type(value).__name__}")
        return default_registry_entries()
    entries = []
    seen = set()
    for i, item in enumerate(value):
        path = f"registry[{i}]"
        raw = _expect_mapping(item, path, errors)
        action = _take(raw, "action")
        if not isinstance(action, str) or not action or action != action.lower():
            errors.add(f"{path}.action", f"expected a lowercase action name, got {action!r}")
            action = f"action{i}"
        if action in seen:
            errors.add(f"{path}.action", f"duplicate action {action!r}")
        seen.add(action)
        forms_raw = _take(raw, "forms")
        forms: list[str] = []
        if not isinstance(forms_raw, list) or not forms_raw:
            errors.add(f"{path}.forms", "expected a nonempty list of body forms")
        else:
            for form in forms_raw:
                if form not in FORM_NAMES:
                    errors.add(f"{path}.forms", f"unknown form {form!r} (expected {FORM_NAMES})")
                elif form not in forms:
                    forms.append(form)
        forms.sort(key=_FORM_CANONICAL_ORDER.__getitem__)
        handler = _take(raw, "handler")
        if not isinstance(handler, str) or not (
            handler == "counter" or handler.startswith("classifier ")
        ):
            errors.add(
                f"{path}.handler",
                f"expected 'counter' or 'classifier <name>', got {handler!r}",
            )
            handler = "counter"
        _reject_unknown(raw, path, errors)
        entries.append(RegistryEntry(action=action, forms=tuple(forms), handler=handler))
    return tuple(entries)


def _parse_classifiers(value, errors) -> dict[str, ClassifierSettings]:
    if value is None:
        return default_classifier_settings()
    raw_map = _expect_mapping(value, "classifiers", errors)
    out = {}
    for name, item in raw_map.items():
        path = f"classifiers.{name}"
        raw = _expect_mapping(item, path, errors)
        labels_raw = _take(raw, "labels")
        labels: tuple[str, ...] = ()
        if not isinstance(labels_raw, list) or not labels_raw:
            errors.add(f"{path}.labels", "expected a nonempty list of class names")
        elif len(set(labels_raw)) != len(labels_raw):
            errors.add(f"{path}.labels", "class names must be unique")
        else:
            labels = tuple(str(l) for l in labels_raw)
        positive_raw = _take(raw, "positive")
        positive: tuple[str, ...] = ()
        if not isinstance(positive_raw, list) or not positive_raw:
            errors.add(f"{path}.positive", "expected a nonempty list of positive class names")
        else:
            bad = [p for p in positive_raw if p not in labels]
            if bad and labels:
                errors.add(f"{path}.positive", f"not in labels: {bad}")
            positive = tuple(l for l in labels if l in set(positive_raw))
        backend = _parse_backend(_take(raw, "backend"), f"{path}.backend", errors)
        pmt = _float_in(
            _take(raw, "positive_mass_threshold"), f"{path}.positive_mass_threshold",
            errors, 0.0, 1.0, None, allow_none=True,
        )
        _reject_unknown(raw, path, errors)
        out[name] = ClassifierSettings(labels, positive, backend, pmt)
    return out


def _parse_crop(value, errors) -> CropConfig:
    raw = _expect_mapping(value, "crop", errors)
    width = _int_in(_take(raw, "width"), "crop.width", errors, low=1, default=CROP_WIDTH)
    height = _int_in(_take(raw, "height"), "crop.height", errors, low=1, default=CROP_HEIGHT)
    fill = _int_in(_take(raw, "fill"), "crop.fill", errors, low=0, high=255,
                   default=DEFAULT_PAD_FILL)
    _reject_unknown(raw, "crop", errors)
    return CropConfig(width, height, fill)


def _parse_sampler(value, errors) -> SamplerSettings:
    raw = _expect_mapping(value, "sampler", errors)
    period = _int_in(_take(raw, "period"), "sampler.period", errors, low=1, default=5)
    window = _int_in(_take(raw, "window"), "sampler.window", errors, low=1, default=5)
    _reject_unknown(raw, "sampler", errors)
    return SamplerSettings(period, window)


def _parse_on_duty(value, errors) -> OnDutyConfig:
    raw = _expect_mapping(value, "on_duty", errors)
    minimum = _int_in(_take(raw, "min"), "on_duty.min", errors, low=0, default=1)
    maximum = _int_in(_take(raw, "max"), "on_duty.max", errors, low=0, allow_none=True)
    if maximum is not None and maximum < minimum:
        errors.add("on_duty.max", f"must be >= min ({minimum}), got {maximum}")
        maximum = None
    threshold = _float_in(
        _take(raw, "containment_threshold"), "on_duty.containment_threshold",
        errors, 0.0, 1.0, DEFAULT_CONTAINMENT_THRESHOLD,
    )
    _reject_unknown(raw, "on_duty", errors)
    return OnDutyConfig(minimum, maximum, threshold)


def _parse_sinks(value, errors) -> SinkConfig:
    raw = _expect_mapping(value, "sinks", errors)
    event_log = _take(raw, "event_log")
    if event_log is not None and (not isinstance(event_log, str) or not event_log):
        errors.add("sinks.event_log", f"expected a file path, got {event_log!r}")
        event_log = None
    webhooks_raw = _take(raw, "webhooks") or []
    _reject_unknown(raw, "sinks", errors)
    if not isinstance(webhooks_raw, list):
        errors.add("sinks.webhooks", "expected a list")
        webhooks_raw = []
    webhooks = []
    for i, item in enumerate(webhooks_raw):
        path = f"sinks.webhooks[{i}]"
        w = _expect_mapping(item, path, errors)
        url = _take(w, "url")
        if not isinstance(url, str) or not url:
            errors.add(f"{path}.url", f"expected a URL, got {url!r}")
            url = ""
        timeout = _float_in(_take(w, "timeout_s"), f"{path}.timeout_s", errors, 0.0, 3600.0, 2.0)
        retries = _int_in(_take(w, "retries"), f"{path}.retries", errors, low=0, default=3)
        queue_size = _int_in(_take(w, "queue_size"), f"{path}.queue_size", errors, low=1, default=256)
        actions_raw = _take(w, "actions")
        actions = None
        if actions_raw is not None:
            if not isinstance(actions_raw, list) or not actions_raw:
                errors.add(f"{path}.actions", "expected a nonempty list of action names")
            else:
                actions = tuple(sorted(str(a) for a in actions_raw))
        _reject_unknown(w, path, errors)
        webhooks.append(WebhookConfig(url, timeout, retries, queue_size, actions))
    return SinkConfig(event_log=event_log, webhooks=tuple(webhooks))


def _cross_check(cfg: ValidatedConfig, errors: _Errors):
    for i, entry in enumerate(cfg.registry):
        name = entry.classifier_name
        if name is not None and name not in cfg.classifiers:
            errors.add(
                f"registry[{i}].handler",
                f"action {entry.action!r} binds classifier {name!r} "
                "but no such classifier block exists",
            )
    actions = {e.action for e in cfg.registry}
    for i, hook in enumerate(cfg.sinks.webhooks):
        for action in hook.actions or ():
            if action not in actions:
                errors.add(
                    f"sinks.webhooks[{i}].actions",
                    f"unknown action {action!r} (registry has: {sorted(actions)})",
                )


def validate(text: str, base_dir: str | Path | None = None) -> ValidatedConfig:
    """Parse and validate config text, filling defaults.

    Raises ConfigError listing every problem found, each prefixed with
    the dotted path of the offending key.
    """
    errors = _Errors()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError([f"config is not valid YAML: {e}"]) from e
    raw = _expect_mapping(data, "", errors)

    cfg = ValidatedConfig(
        streams=_parse_streams(_take(raw, "streams"), errors),
        detector=_parse_detector(_take(raw, "detector"), errors),
        registry=_parse_registry(_take(raw, "registry"), errors),
        classifiers=_parse_classifiers(_take(raw, "classifiers"), errors),
        crop=_parse_crop(_take(raw, "crop"), errors),
        sampler=_parse_sampler(_take(raw, "sampler"), errors),
        on_duty=_parse_on_duty(_take(raw, "on_duty"), errors),
        sinks=_parse_sinks(_take(raw, "sinks"), errors),
        base_dir=Path(base_dir) if base_dir is not None else Path.cwd(),
    )
    _reject_unknown(raw, "", errors)
    _cross_check(cfg, errors)
    errors.raise_if_any()
    return cfg


def load_config(path: str | Path) -> ValidatedConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError([f"cannot read config {path}: {e}"]) from e
    return validate(text, base_dir=path.parent)


def _backend_dict(b: BackendConfig | None):
    if b is None:
        return None
    key = "fixture" if b.kind == "scripted" else "model"
    return {"kind": b.kind, key: b.path}


def config_to_dict(cfg: ValidatedConfig) -> dict:
    streams = []
    for s in cfg.streams:
        src = {"kind": s.source.kind, "fps": s.source.fps}
        for key in ("path", "manifest", "frames", "width", "height"):
            value = getattr(s.source, key)
            if value is not None:
                src[key] = value
        streams.append({"id": s.id, "source": src})
    return {
        "streams": streams,
        "detector": {
            "backend": _backend_dict(cfg.detector.backend),
            "input_size": cfg.detector.input_size,
            "score_threshold": cfg.detector.score_threshold,
            "nms_iou_threshold": cfg.detector.nms_iou_threshold,
            "letterbox_fill": cfg.detector.letterbox_fill,
        },
        "registry": [
            {"action": e.action, "forms": list(e.forms), "handler": e.handler}
            for e in cfg.registry
        ],
        "classifiers": {
            name: {
                "labels": list(c.labels),
                "positive": list(c.positive),
                "backend": _backend_dict(c.backend),
                "positive_mass_threshold": c.positive_mass_threshold,
            }
            for name, c in sorted(cfg.classifiers.items())
        },
        "crop": {"width": cfg.crop.width, "height": cfg.crop.height, "fill": cfg.crop.fill},
        "sampler": {"period": cfg.sampler.period, "window": cfg.sampler.window},
        "on_duty": {
            "min": cfg.on_duty.min,
            "max": cfg.on_duty.max,
            "containment_threshold": cfg.on_duty.containment_threshold,
        },
        "sinks": {
            "event_log": cfg.sinks.event_log,
            "webhooks": [
                {
                    "url": w.url,
                    "timeout_s": w.timeout_s,
                    "retries": w.retries,
                    "queue_size": w.queue_size,
                    "actions": list(w.actions) if w.actions is not None else None,
                }
                for w in cfg.sinks.webhooks
            ],
        },
    }


def print_effective(cfg: ValidatedConfig) -> str:
    """Canonical serialization: sorted keys, defaults made explicit."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True, default_flow_style=False)
