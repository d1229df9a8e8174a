"""The end-to-end engine: detect -> route -> classify -> aggregate -> emit.

One worker per stream pulls frames from its source, samples them
periodically, and pushes every sampled frame through the two-stage
recognizer. Raised/cleared events append synchronously to the event log
(the source of truth) and fan out to webhook sinks through bounded
queues. Offline evaluation and benchmarking reuse this exact path with
a synchronous scheduler.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .classification import (
    ClassDistribution,
    DetectionVerdict,
    LabelSet,
    OnnxClassifier,
    ScriptedClassifier,
    build_crop,
    classify,
    collapse,
)
from .config import ValidatedConfig
from .detection import (
    Detection,
    DetectorConfig,
    Frame,
    OnnxDetector,
    ScriptedDetector,
)
from .errors import (
    BackendError,
    ConfigError,
    FixtureError,
    OutOfOrderFrameError,
    ProtocolError,
)
from .evaluation import (
    MetricReport,
    intervals_from_labels,
    metrics,
    score_events,
    score_frames,
)
from .onduty import ComplianceRange, check_compliance, count_persons, dedup_cross_form
from .routing import Registry, RoutingRule, route
from .sinks import EventLogWriter, WebhookSink
from .sources import open_source
from .temporal import (
    ActionEvent,
    ActionFrameResult,
    Aggregator,
    FrameLabel,
    FrameVerdict,
    SamplerConfig,
    frame_label,
    should_sample,
)

log = logging.getLogger("multiform.engine")

STAGES = ("detect", "route", "classify", "aggregate", "emit")


class WallClock:
    def now_ms(self) -> float:
        return time.time() * 1000.0


class FixedClock:
    """Constant clock for byte-identical event logs in tests."""

    def __init__(self, value_ms: float = 0.0):
        self.value_ms = value_ms

    def now_ms(self) -> float:
        return self.value_ms


@dataclass
class StreamStats:
    frames: int = 0
    sampled: int = 0
    events: int = 0
    errors: int = 0
    seconds: float = 0.0
    stage_ms: dict[str, list[float]] = field(default_factory=dict)


@dataclass
class RunReport:
    streams: dict[str, StreamStats]
    events: list[ActionEvent]
    verdicts: list[FrameVerdict]
    log_entries: int
    sink_delivered: int
    sink_dropped: int

    @property
    def total_frames(self) -> int:
        return sum(s.frames for s in self.streams.values())

    @property
    def total_events(self) -> int:
        return sum(s.events for s in self.streams.values())


def build_registry(cfg: ValidatedConfig) -> Registry:
    from .detection import BodyForm

    rules = []
    for entry in cfg.registry:
        forms = frozenset(BodyForm(f) for f in entry.forms)
        if entry.is_counter:
            rules.append(RoutingRule(entry.action, forms, "counter"))
        else:
            rules.append(
                RoutingRule(entry.action, forms, "classifier", entry.classifier_name)
            )
    return Registry(rules)


def build_detector(cfg: ValidatedConfig):
    backend = cfg.detector.backend
    if backend is None:
        return None
    det_cfg = DetectorConfig(
        input_size=cfg.detector.input_size,
        score_threshold=cfg.detector.score_threshold,
        nms_iou_threshold=cfg.detector.nms_iou_threshold,
        letterbox_fill=cfg.detector.letterbox_fill,
    )
    path = cfg.resolve(backend.path)
    if backend.kind == "scripted":
        return ScriptedDetector(path, det_cfg)
    return OnnxDetector(path, det_cfg)


@dataclass
class ClassifierBinding:
    classifier: object
    label_set: LabelSet
    positive_mass_threshold: float | None


def build_classifiers(cfg: ValidatedConfig, registry: Registry) -> dict[str, ClassifierBinding]:
    """Instantiate every classifier a registry rule binds to."""
    needed = {
        rule.classifier_name for rule in registry if rule.classifier_name is not None
    }
    bindings: dict[str, ClassifierBinding] = {}
    crop_size = (cfg.crop.width, cfg.crop.height)
    for name in sorted(needed):
        settings = cfg.classifiers[name]
        label_set = LabelSet(settings.labels, frozenset(settings.positive))
        backend = settings.backend
        if backend is None:
            raise ConfigError(
                [f"classifiers.{name}.backend: required to run (scripted or onnx)"]
            )
        path = cfg.resolve(backend.path)
        if backend.kind == "scripted":
            clf = ScriptedClassifier(path, input_size=crop_size)
            if clf.labels != settings.labels:
                raise ConfigError(
                    [
                        f"classifiers.{name}: fixture {path} declares labels "
                        f"{clf.labels} but the config declares {settings.labels}"
                    ]
                )
        else:
            clf = OnnxClassifier(path, settings.labels, input_size=crop_size)
        bindings[name] = ClassifierBinding(clf, label_set, settings.positive_mass_threshold)
    return bindings


class Engine:
    """Owns the configured pipeline and drives its streams."""

    def __init__(
        self,
        cfg: ValidatedConfig,
        fixed_clock: bool = False,
        collect_events: bool = False,
        collect_verdicts: bool = False,
        track_stages: bool = False,
    ):
        self.cfg = cfg
        self.clock = FixedClock() if fixed_clock else WallClock()
        self.collect_events = collect_events
        self.collect_verdicts = collect_verdicts
        self.track_stages = track_stages

        self.registry = build_registry(cfg)
        self.detector = build_detector(cfg)
        if cfg.streams and self.detector is None:
            raise ConfigError(["detector.backend: required to process streams"])
        self.classifiers = build_classifiers(cfg, self.registry) if cfg.streams else {}

        compliance = {
            rule.action: ComplianceRange(cfg.on_duty.min, cfg.on_duty.max)
            for rule in self.registry
            if rule.handler == "counter"
        }
        self.sampler = SamplerConfig(cfg.sampler.period, cfg.sampler.window)
        self.aggregator = Aggregator(cfg.sampler.window, compliance)
        self._agg_lock = threading.Lock()

        self.event_log = (
            EventLogWriter(cfg.resolve(cfg.sinks.event_log))
            if cfg.sinks.event_log
            else None
        )
        self.webhooks = [
            WebhookSink(w.url, w.timeout_s, w.retries, w.queue_size, w.actions)
            for w in cfg.sinks.webhooks
        ]

        # Scripted streams carry no pixels; classifiers still see a
        # canvas, so one shared fill-colored canvas stands in.
        self._blank_canvas = np.full(
            (cfg.crop.height, cfg.crop.width, 3), cfg.crop.fill, dtype=np.uint8
        )
        self._events: list[ActionEvent] = []
        self._verdicts: list[FrameVerdict] = []
        self._collect_lock = threading.Lock()

    # --- per-frame pipeline ------------------------------------------------

    def _crop_canvas(self, frame: Frame, det: Detection) -> np.ndarray:
        if frame.pixels is None:
            return self._blank_canvas
        return build_crop(
            frame.pixels, det.box, (self.cfg.crop.width, self.cfg.crop.height),
            self.cfg.crop.fill,
        )

    def _classify_routed(
        self, frame: Frame, rule: RoutingRule, routed: list[Detection],
        det_index: dict[int, int],
    ) -> ActionFrameResult:
        binding = self.classifiers[rule.classifier_name]
        verdicts = []
        for det in routed:
            canvas = self._crop_canvas(frame, det)
            dist: ClassDistribution = classify(
                canvas, binding.classifier, frame.index, det_index[id(det)]
            )
            positive, score, top = collapse(
                dist, binding.label_set, binding.positive_mass_threshold
            )
            verdicts.append(DetectionVerdict(det, rule.action, positive, score, top))
        return ActionFrameResult(label=frame_label(verdicts), verdicts=tuple(verdicts))

    def _count_routed(self, rule: RoutingRule, routed: list[Detection]) -> ActionFrameResult:
        deduped = dedup_cross_form(routed, self.cfg.on_duty.containment_threshold)
        count = count_persons(deduped)
        verdict = check_compliance(
            count, ComplianceRange(self.cfg.on_duty.min, self.cfg.on_duty.max)
        )
        label = FrameLabel.NEGATIVE if verdict.compliant else FrameLabel.POSITIVE
        return ActionFrameResult(label=label, count=count, compliance=verdict)

    def _process_frame(self, frame: Frame, stats: StreamStats):
        timer = _StageTimer(stats, self.track_stages)

        with timer.stage("detect"):
            detections = self.detector.detect(frame)
        with timer.stage("route"):
            routed = route(detections, self.registry)
            det_index = {id(d): i for i, d in enumerate(detections)}
        with timer.stage("classify"):
            results = {}
            for rule in self.registry:
                if rule.handler == "counter":
                    results[rule.action] = self._count_routed(rule, routed[rule.action])
                else:
                    results[rule.action] = self._classify_routed(
                        frame, rule, routed[rule.action], det_index
                    )
        verdict = FrameVerdict(
            stream_id=frame.stream_id,
            frame_index=frame.index,
            timestamp_ms=frame.timestamp_ms,
            actions=results,
        )
        with timer.stage("aggregate"):
            with self._agg_lock:
                events = self.aggregator.step(verdict)
        with timer.stage("emit"):
            for event in events:
                self._emit(event)
        stats.events += len(events)

        if self.collect_verdicts or self.collect_events:
            with self._collect_lock:
                if self.collect_verdicts:
                    self._verdicts.append(verdict)
                if self.collect_events:
                    self._events.extend(events)

    def _emit(self, event: ActionEvent):
        entry = event_entry(event, self.clock.now_ms())
        if self.event_log is not None:
            self.event_log.write(entry)
        for sink in self.webhooks:
            sink.offer(entry)

    # --- stream workers ----------------------------------------------------

    def _run_stream(self, stream_cfg, stats: StreamStats):
        start = time.perf_counter()
        try:
            for frame in open_source(stream_cfg, self.cfg.base_dir):
                stats.frames += 1
                if not should_sample(frame.index, self.sampler):
                    continue
                stats.sampled += 1
                try:
                    self._process_frame(frame, stats)
                except (BackendError, OutOfOrderFrameError) as e:
                    stats.errors += 1
                    log.warning("stream %s frame %d: %s", stream_cfg.id, frame.index, e)
        except (ProtocolError, FixtureError) as e:
            stats.errors += 1
            log.error("stream %s stopped: %s", stream_cfg.id, e)
        finally:
            stats.seconds = time.perf_counter() - start

    def run(self, parallel: bool = True) -> RunReport:
        """Process every configured stream to exhaustion and flush sinks."""
        stats = {s.id: StreamStats() for s in self.cfg.streams}
        workers = []
        try:
            if parallel and len(self.cfg.streams) > 1:
                for stream_cfg in self.cfg.streams:
                    t = threading.Thread(
                        target=self._run_stream, args=(stream_cfg, stats[stream_cfg.id])
                    )
                    t.start()
                    workers.append(t)
                for t in workers:
                    t.join()
            else:
                for stream_cfg in self.cfg.streams:
                    self._run_stream(stream_cfg, stats[stream_cfg.id])
        finally:
            for sink in self.webhooks:
                sink.close()
            if self.event_log is not None:
                self.event_log.close()
        return RunReport(
            streams=stats,
            events=list(self._events),
            verdicts=list(self._verdicts),
            log_entries=self.event_log.written if self.event_log else 0,
            sink_delivered=sum(s.delivered for s in self.webhooks),
            sink_dropped=sum(s.dropped for s in self.webhooks),
        )


class _StageTimer:
    def __init__(self, stats: StreamStats, enabled: bool):
        self.stats = stats
        self.enabled = enabled

    def stage(self, name: str):
        return _StageSpan(self.stats, name) if self.enabled else _NULL_SPAN


class _StageSpan:
    def __init__(self, stats: StreamStats, name: str):
        self.stats = stats
        self.name = name

    def __enter__(self):
        self.start = time.perf_counter()

    def __exit__(self, *exc):
        elapsed_ms = (time.perf_counter() - self.start) * 1000.0
        self.stats.stage_ms.setdefault(self.name, []).append(elapsed_ms)
        return False


class _NullSpan:
    def __enter__(self):
        return None

    def __exit__(self, *exc):
        return False


_NULL_SPAN = _NullSpan()


def event_entry(event: ActionEvent, ts_ms: float) -> dict:
    """Serialize an event for the log and the webhook payload."""
    entry = {
        "ts_ms": ts_ms,
        "stream": event.stream_id,
        "action": event.action,
        "state": event.state,
        "window_start": event.window_start,
        "window_end": event.window_end,
        "votes": event.vote_count,
        "window_size": event.window_size,
        "dedup_key": f"{event.stream_id}:{event.action}:{event.window_end}",
        "detections": [
            {
                "box": [v.detection.box.x, v.detection.box.y,
                        v.detection.box.w, v.detection.box.h],
                "form": v.detection.form.value,
                "confidence": v.detection.confidence,
                "positive": v.positive,
                "score": v.score,
                "top_label": v.top_label,
            }
            for v in event.verdicts
        ],
    }
    if event.count is not None:
        entry["count"] = event.count
    return entry


# --- offline evaluation ----------------------------------------------------


def parse_truth(path: str | Path) -> dict[str, dict[int, bool]]:
    """Parse `<frame_index> <action> <p|n>` ground-truth lines."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise FixtureError(f"cannot read ground truth {path}: {e}") from e
    truth: dict[str, dict[int, bool]] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FixtureError(f"{path}:{lineno}: expected '<frame_index> <action> <p|n>'")
        try:
            frame = int(parts[0])
        except ValueError as e:
            raise FixtureError(f"{path}:{lineno}: {e}") from e
        action = parts[1]
        if parts[2] not in ("p", "n"):
            raise FixtureError(f"{path}:{lineno}: label must be 'p' or 'n', got {parts[2]!r}")
        truth.setdefault(action, {})[frame] = parts[2] == "p"
    return truth


def evaluate(
    cfg: ValidatedConfig, truth_path: str | Path, mode: str = "frame"
) -> tuple[MetricReport, RunReport]:
    """Run the pipeline offline and score it against ground truth.

    Frame mode compares the per-frame action labels at every ground
    truth frame index (frames the sampler skipped score as absent,
    which counts as negative). Event mode compares positive intervals.
    """
    if mode not in ("frame", "event"):
        raise ValueError(f"mode must be 'frame' or 'event', got {mode!r}")
    if len(cfg.streams) != 1:
        raise ConfigError(["streams: evaluate needs exactly one configured stream"])
    truth = parse_truth(truth_path)

    engine = Engine(cfg, collect_events=True, collect_verdicts=True)
    run_report = engine.run(parallel=False)

    predicted: dict[str, dict[int, FrameLabel]] = {}
    for fv in run_report.verdicts:
        for action, result in fv.actions.items():
            predicted.setdefault(action, {})[fv.frame_index] = result.label

    entries = {}
    notes = {"scoring": mode}
    registry_actions = {rule.action for rule in engine.registry}
    skipped = []
    for action in sorted(truth):
        if action not in registry_actions:
            skipped.append(action)
            continue
        frames = sorted(truth[action])
        gt = [truth[action][f] for f in frames]
        labels = predicted.get(action, {})
        if mode == "frame":
            pred = [labels.get(f, FrameLabel.ABSENT) for f in frames]
            counts = score_frames(pred, gt)
        else:
            truth_intervals = intervals_from_labels(frames, gt)
            pred_intervals = _event_intervals(run_report.events, action, frames)
            counts = score_events(pred_intervals, truth_intervals)
        entries[action] = metrics(counts)
    if skipped:
        notes["skipped_actions"] = ", ".join(skipped)
        log.warning("ground truth names unconfigured actions: %s", ", ".join(skipped))
    return MetricReport(entries=entries, notes=notes), run_report


def _event_intervals(events, action: str, truth_frames) -> list[tuple[int, int]]:
    """Positive intervals implied by raised/cleared event pairs."""
    intervals = []
    start: int | None = None
    for event in events:
        if event.action != action:
            continue
        if event.state == "raised" and start is None:
            start = event.window_end
        elif event.state == "cleared" and start is not None:
            intervals.append((start, event.window_end))
            start = None
    if start is not None:
        end = max(truth_frames) if len(truth_frames) else start
        intervals.append((start, max(start, end)))
    return intervals


# --- benchmarking ----------------------------------------------------------


@dataclass
class BenchRow:
    name: str
    frames: int
    sampled: int
    seconds: float
    fps: float
    stages: dict[str, dict[str, float]]  # stage -> {mean, p50, p90, p99}


def bench(cfg: ValidatedConfig, frames: int | None = None) -> list[BenchRow]:
    """Throughput and per-stage latency with the configured backends.

    Never asserts hardware-dependent numbers; it only reports them.
    """
    if frames is not None:
        # The frame-count override applies to synthetic sources only;
        # file- and pipe-backed streams keep their natural length.
        streams = tuple(
            replace(s, source=replace(s.source, frames=frames))
            if s.source.kind == "synthetic"
            else s
            for s in cfg.streams
        )
        cfg = replace(cfg, streams=streams, base_dir=cfg.base_dir)

    engine = Engine(cfg, track_stages=True)
    report = engine.run(parallel=False)

    rows = []
    merged: dict[str, list[float]] = {}
    total_frames = total_sampled = 0
    total_seconds = 0.0
    for stream_id, stats in report.streams.items():
        rows.append(_bench_row(stream_id, stats.frames, stats.sampled,
                               stats.seconds, stats.stage_ms))
        for stage, values in stats.stage_ms.items():
            merged.setdefault(stage, []).extend(values)
        total_frames += stats.frames
        total_sampled += stats.sampled
        total_seconds += stats.seconds
    if len(rows) != 1:
        rows.append(_bench_row("all", total_frames, total_sampled, total_seconds, merged))
    return rows


def _bench_row(name, frames, sampled, seconds, stage_ms) -> BenchRow:
    fps = frames / seconds if seconds > 0 and frames else 0.0
    stages = {}
    for stage in STAGES:
        values = stage_ms.get(stage)
        if not values:
            continue
        arr = np.asarray(values)
        stages[stage] = {
            "mean": float(arr.mean()),
            "p50": float(np.percentile(arr, 50)),
            "p90": float(np.percentile(arr, 90)),
            "p99": float(np.percentile(arr, 99)),
        }
    return BenchRow(name, frames, sampled, seconds, fps, stages)


def render_bench(rows: list[BenchRow]) -> str:
    lines = []
    for row in rows:
        lines.append(
            f"stream {row.name}: {row.frames} frames ({row.sampled} sampled) "
            f"in {row.seconds:.3f}s = {row.fps:.1f} fps"
        )
        for stage, s in row.stages.items():
            lines.append(
                f"  {stage:<10} mean {s['mean']:.3f} ms  "
                f"p50 {s['p50']:.3f}  p90 {s['p90']:.3f}  p99 {s['p99']:.3f}"
            )
    if not rows:
        lines.append("no streams configured")
    return "\n".join(lines) + "\n"
