"""Body-form labels derived from COCO-style keypoint annotations.

The three-form taxonomy is defined over keypoint visibility flags
(0 unlabeled, 1 labeled but occluded, 2 visible):

  whole  - torso and legs clearly present: at least one visible hip,
           knee, ankle and shoulder. The head and hands are irrelevant;
           a person with an occluded face still reads as a whole body.
  upper  - head and shoulders present: some visible head keypoint
           (nose, eye or ear) plus both shoulders visible.
  part   - everything else; the residual category.

"Torso and legs mostly unoccluded" and "head and shoulders seen" are
judgment calls in the original labeling guides; the visibility
predicates above are this module's concrete, checkable interpretation,
and every group-cardinality threshold can be overridden via FormRules.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .detection import BodyForm
from .errors import FixtureError
from .geometry import Box

KEYPOINT_NAMES = (
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)
_INDEX = {name: i for i, name in enumerate(KEYPOINT_NAMES)}

HEAD = ("nose", "left_eye", "right_eye", "left_ear", "right_ear")
SHOULDERS = ("left_shoulder", "right_shoulder")
HIPS = ("left_hip", "right_hip")
KNEES = ("left_knee", "right_knee")
ANKLES = ("left_ankle", "right_ankle")

VISIBLE = 2

# Actions whose classifier crops come from whole bodies vs upper bodies.
WHOLE_BODY_ACTIONS = frozenset({"stand", "jump", "fall"})
UPPER_BODY_ACTIONS = frozenset({"sleep", "sit"})


@dataclass(frozen=True)
class KeypointPerson:
    """One person annotation: 17 (x, y, v) keypoints plus its box."""

    keypoints: tuple[tuple[float, float, int], ...]
    bbox: Box
    image_id: int
    annotation_id: int

    def __post_init__(self):
        if len(self.keypoints) != len(KEYPOINT_NAMES):
            raise ValueError(f"expected {len(KEYPOINT_NAMES)} keypoints, got {len(self.keypoints)}")
        for x, y, v in self.keypoints:
            if v not in (0, 1, 2):
                raise ValueError(f"keypoint visibility must be 0, 1 or 2, got {v}")

    def visible_count(self, names: Iterable[str]) -> int:
        return sum(1 for n in names if self.keypoints[_INDEX[n]][2] == VISIBLE)


@dataclass(frozen=True)
class FormRules:
    """Minimum visible keypoints per group for each form rule."""

    whole_shoulders: int = 1
    whole_hips: int = 1
    whole_knees: int = 1
    whole_ankles: int = 1
    upper_head: int = 1
    upper_shoulders: int = 2


DEFAULT_RULES = FormRules()


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: int
    bbox: Box
    form: BodyForm
    source_annotation_id: int


def derive_form(person: KeypointPerson, rules: FormRules = DEFAULT_RULES) -> BodyForm:
    """Assign exactly one body form to a person. Total and deterministic."""
    if (
        person.visible_count(HIPS) >= rules.whole_hips
        and person.visible_count(KNEES) >= rules.whole_knees
        and person.visible_count(ANKLES) >= rules.whole_ankles
        and person.visible_count(SHOULDERS) >= rules.whole_shoulders
    ):
        return BodyForm.WHOLE
    if (
        person.visible_count(HEAD) >= rules.upper_head
        and person.visible_count(SHOULDERS) >= rules.upper_shoulders
    ):
        return BodyForm.UPPER
    return BodyForm.PART


@dataclass
class StatsReport:
    whole: int = 0
    upper: int = 0
    part: int = 0
    warnings: int = 0

    def add(self, form: BodyForm):
        if form is BodyForm.WHOLE:
            self.whole += 1
        elif form is BodyForm.UPPER:
            self.upper += 1
        else:
            self.part += 1

    def merge(self, other: "StatsReport") -> "StatsReport":
        return StatsReport(
            self.whole + other.whole,
            self.upper + other.upper,
            self.part + other.part,
            self.warnings + other.warnings,
        )

    @property
    def total(self) -> int:
        return self.whole + self.upper + self.part

    def as_dict(self) -> dict:
        return {
            "whole": self.whole,
            "upper": self.upper,
            "part": self.part,
            "warnings": self.warnings,
        }


def person_from_coco(entry: Mapping) -> KeypointPerson | None:
    """Build a KeypointPerson from one COCO annotation dict.

    Returns None when the annotation carries no usable keypoints (the
    caller labels those Part with a warning).
    """
    bbox = entry.get("bbox")
    if not bbox or len(bbox) != 4:
        raise FixtureError(f"annotation {entry.get('id')}: missing or malformed bbox")
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise FixtureError(f"annotation {entry.get('id')}: bbox extent must be positive")
    flat = entry.get("keypoints")
    if not flat:
        return None
    if len(flat) != 3 * len(KEYPOINT_NAMES):
        raise FixtureError(
            f"annotation {entry.get('id')}: expected {3 * len(KEYPOINT_NAMES)} "
            f"keypoint values, got {len(flat)}"
        )
    kps = tuple(
        (float(flat[i]), float(flat[i + 1]), int(flat[i + 2]))
        for i in range(0, len(flat), 3)
    )
    if all(v == 0 for _, _, v in kps):
        return None
    return KeypointPerson(
        keypoints=kps,
        bbox=Box(x, y, w, h),
        image_id=int(entry.get("image_id", -1)),
        annotation_id=int(entry.get("id", -1)),
    )


def convert_dataset(
    coco_path: str | Path, rules: FormRules = DEFAULT_RULES
) -> tuple[list[AnnotationRecord], StatsReport]:
    """Derive a multi-form record for every person annotation.

    Annotations without labeled keypoints fall into Part and bump the
    warnings tally; whole + upper + part always equals the number of
    annotations processed.
    """
    coco_path = Path(coco_path)
    try:
        data = json.loads(coco_path.read_text())
    except OSError as e:
        raise FixtureError(f"cannot read {coco_path}: {e}") from e
    except json.JSONDecodeError as e:
        raise FixtureError(f"{coco_path}: not valid JSON: {e}") from e
    annotations = data.get("annotations")
    if annotations is None or not isinstance(annotations, list):
        raise FixtureError(f"{coco_path}: missing 'annotations' array")

    records: list[AnnotationRecord] = []
    stats = StatsReport()
    for entry in annotations:
        person = person_from_coco(entry)
        if person is None:
            # Residual category: crowd boxes and keypoint-free persons.
            x, y, w, h = (float(v) for v in entry["bbox"])
            records.append(
                AnnotationRecord(
                    image_id=int(entry.get("image_id", -1)),
                    bbox=Box(x, y, w, h),
                    form=BodyForm.PART,
                    source_annotation_id=int(entry.get("id", -1)),
                )
            )
            stats.add(BodyForm.PART)
            stats.warnings += 1
            continue
        form = derive_form(person, rules)
        records.append(
            AnnotationRecord(
                image_id=person.image_id,
                bbox=person.bbox,
                form=form,
                source_annotation_id=person.annotation_id,
            )
        )
        stats.add(form)
    return records, stats


def format_record(r: AnnotationRecord) -> str:
    b = r.bbox
    return f"{r.image_id} {r.form.value} {b.x:g} {b.y:g} {b.w:g} {b.h:g} {r.source_annotation_id}"


def write_label_file(records: Sequence[AnnotationRecord], path: str | Path):
    Path(path).write_text("".join(format_record(r) + "\n" for r in records))


def parse_action_sidecar(path: str | Path) -> dict[int, str]:
    """Parse `<annotation_id> <action>` lines mapping persons to action
    classes. Unknown action names are rejected."""
    path = Path(path)
    known = WHOLE_BODY_ACTIONS | UPPER_BODY_ACTIONS
    mapping: dict[int, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FixtureError(f"{path}:{lineno}: expected '<annotation_id> <action>'")
        try:
            ann_id = int(parts[0])
        except ValueError as e:
            raise FixtureError(f"{path}:{lineno}: {e}") from e
        action = parts[1]
        if action not in known:
            raise FixtureError(
                f"{path}:{lineno}: unknown action {action!r} "
                f"(expected one of: {', '.join(sorted(known))})"
            )
        mapping[ann_id] = action
    return mapping


def emit_action_subsets(
    records: Sequence[AnnotationRecord], sidecar: Mapping[int, str]
) -> tuple[dict[str, list[AnnotationRecord]], list[tuple[int, str, BodyForm | None]]]:
    """Group records into per-action crop manifests.

    Whole-body actions accept only whole records and upper-body actions
    only upper records; everything else is reported as a mismatch and
    excluded.
    """
    manifests: dict[str, list[AnnotationRecord]] = {}
    mismatches: list[tuple[int, str, BodyForm | None]] = []
    by_id = {r.source_annotation_id: r for r in records}
    for ann_id, action in sidecar.items():
        record = by_id.get(ann_id)
        if record is None:
            mismatches.append((ann_id, action, None))
            continue
        wanted = BodyForm.WHOLE if action in WHOLE_BODY_ACTIONS else BodyForm.UPPER
        if record.form is not wanted:
            mismatches.append((ann_id, action, record.form))
            continue
        manifests.setdefault(action, []).append(record)
    for action in manifests:
        manifests[action].sort(key=lambda r: r.source_annotation_id)
    return manifests, mismatches
