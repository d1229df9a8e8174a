import random

import numpy as np
import pytest

from multiform.detection import (
    BodyForm,
    Detection,
    DetectorConfig,
    Frame,
    OnnxDetector,
    ScriptedDetector,
    decode_detector_output,
    parse_detection_fixture,
    postprocess,
)
from multiform.errors import BackendError, FixtureError, ShapeMismatchError
from multiform.geometry import Box, iou

from .oracles import greedy_nms_oracle

CFG = DetectorConfig()


def make_frame(index=0, width=1280, height=720, pixels=None):
    return Frame(
        stream_id="s0",
        index=index,
        width=width,
        height=height,
        timestamp_ms=float(index) * 40.0,
        pixels=pixels,
    )


def random_candidates(rng, n):
    out = []
    for _ in range(n):
        x = rng.uniform(0, 600)
        y = rng.uniform(0, 600)
        w = rng.uniform(1, 200)
        h = rng.uniform(1, 200)
        form = rng.choice(list(BodyForm))
        score = rng.random()
        out.append((Box(x, y, w, h), form, score))
    return out


def as_set(detections):
    return {(d.box, d.form, d.confidence) for d in detections}


class TestBodyForm:
    def test_completeness_order(self):
        assert BodyForm.WHOLE.completeness > BodyForm.UPPER.completeness
        assert BodyForm.UPPER.completeness > BodyForm.PART.completeness

    def test_from_name(self):
        assert BodyForm.from_name("Whole") is BodyForm.WHOLE
        with pytest.raises(ValueError):
            BodyForm.from_name("torso")


class TestDetection:
    def test_confidence_bounds(self):
        with pytest.raises(ValueError):
            Detection(Box(0, 0, 1, 1), BodyForm.WHOLE, 1.5)


class TestDetectorConfig:
    def test_threshold_range(self):
        with pytest.raises(ValueError):
            DetectorConfig(score_threshold=0.0)
        with pytest.raises(ValueError):
            DetectorConfig(nms_iou_threshold=1.0)
        with pytest.raises(ValueError):
            DetectorConfig(input_size=0)


class TestPostprocess:
    def test_empty(self):
        assert postprocess([], CFG) == []

    def test_cross_form_never_suppresses(self):
        a = (Box(0, 0, 100, 200), BodyForm.WHOLE, 0.9)
        b = (Box(0, 0, 100, 190), BodyForm.UPPER, 0.8)
        assert iou(a[0], b[0]) > 0.9
        assert len(postprocess([a, b], CFG)) == 2

    def test_same_form_suppression(self):
        a = Box(0, 0, 100, 100)
        b = Box(0, 10, 100, 100)  # IoU 9/11 with a
        kept = postprocess([(a, BodyForm.WHOLE, 0.9), (b, BodyForm.WHOLE, 0.7)], CFG)
        assert [d.box for d in kept] == [a]

    def test_chained_overlap_keeps_first_and_third(self):
        # A-B and B-C overlap past the threshold, A-C does not: greedy
        # keeps A, suppresses B, then keeps C.
        a = Box(0, 0, 10, 10)
        b = Box(0, 5, 10, 10)  # IoU(a, b) = 1/3
        c = Box(0, 10, 10, 10)  # IoU(b, c) = 1/3, IoU(a, c) = 0
        cfg = DetectorConfig(nms_iou_threshold=0.3)
        kept = postprocess(
            [(a, BodyForm.WHOLE, 0.9), (b, BodyForm.WHOLE, 0.8), (c, BodyForm.WHOLE, 0.7)],
            cfg,
        )
        assert [d.box for d in kept] == [a, c]

    def test_score_filter(self):
        low = (Box(0, 0, 10, 10), BodyForm.PART, 0.1)
        assert postprocess([low], CFG) == []

    def test_matches_bruteforce_oracle(self):
        rng = random.Random(40911)
        for _ in range(100):
            cands = random_candidates(rng, rng.randint(0, 50))
            got = as_set(postprocess(cands, CFG))
            want = {
                (b, f, s)
                for b, f, s in greedy_nms_oracle(
                    cands, CFG.score_threshold, CFG.nms_iou_threshold, iou
                )
            }
            assert got == want

    def test_survivor_invariants(self):
        rng = random.Random(6021)
        for _ in range(50):
            kept = postprocess(random_candidates(rng, 40), CFG)
            for d in kept:
                assert d.confidence >= CFG.score_threshold
            for i, a in enumerate(kept):
                for b in kept[i + 1 :]:
                    if a.form is b.form:
                        assert iou(a.box, b.box) <= CFG.nms_iou_threshold
            confs = [d.confidence for d in kept]
            assert confs == sorted(confs, reverse=True)

    def test_idempotent(self):
        rng = random.Random(77)
        for _ in range(50):
            once = postprocess(random_candidates(rng, 30), CFG)
            twice = postprocess([(d.box, d.form, d.confidence) for d in once], CFG)
            assert once == twice

    def test_cross_form_independence(self):
        rng = random.Random(90210)
        for _ in range(50):
            cands = random_candidates(rng, 30)
            full = postprocess(cands, CFG)
            for removed in BodyForm:
                reduced = postprocess([c for c in cands if c[1] is not removed], CFG)
                assert [d for d in full if d.form is not removed] == reduced


class TestScriptedDetector:
    def test_passthrough(self, tmp_path):
        fixture = tmp_path / "det.txt"
        fixture.write_text("# comment\n0 whole 100 100 80 200 0.9\n")
        det = ScriptedDetector(fixture)
        got = det.detect(make_frame(0))
        assert got == [Detection(Box(100, 100, 80, 200), BodyForm.WHOLE, 0.9)]

    def test_missing_frame_is_empty(self, tmp_path):
        fixture = tmp_path / "det.txt"
        fixture.write_text("0 whole 100 100 80 200 0.9\n")
        assert ScriptedDetector(fixture).detect(make_frame(7)) == []

    def test_empty_fixture(self, tmp_path):
        fixture = tmp_path / "det.txt"
        fixture.write_text("")
        assert ScriptedDetector(fixture).detect(make_frame(0)) == []

    def test_nms_applied(self, tmp_path):
        fixture = tmp_path / "det.txt"
        fixture.write_text(
            "0 whole 0 0 100 100 0.9\n"
            "0 whole 0 10 100 100 0.7\n"  # IoU 9/11 > 0.45 with the first
        )
        got = ScriptedDetector(fixture).detect(make_frame(0))
        assert len(got) == 1
        assert got[0].confidence == 0.9

    def test_score_out_of_range_is_parse_error(self, tmp_path):
        fixture = tmp_path / "det.txt"
        fixture.write_text("0 whole 0 0 10 10 1.5\n")
        with pytest.raises(FixtureError, match="det.txt:1"):
            ScriptedDetector(fixture)

    def test_bad_form_reports_line(self, tmp_path):
        fixture = tmp_path / "det.txt"
        fixture.write_text("0 whole 0 0 10 10 0.5\n1 torso 0 0 10 10 0.5\n")
        with pytest.raises(FixtureError, match="det.txt:2"):
            parse_detection_fixture(fixture)

    def test_wrong_field_count(self, tmp_path):
        fixture = tmp_path / "det.txt"
        fixture.write_text("0 whole 0 0 10\n")
        with pytest.raises(FixtureError, match="expected 7 fields"):
            parse_detection_fixture(fixture)

    def test_clamps_to_frame(self, tmp_path):
        fixture = tmp_path / "det.txt"
        fixture.write_text("0 part 1200 600 200 200 0.9\n")
        got = ScriptedDetector(fixture).detect(make_frame(0, width=1280, height=720))
        assert got[0].box == Box(1200, 600, 80, 120)


class TestDecodeDetectorOutput:
    def test_decodes_rows(self):
        raw = np.array([[320.0, 320.0, 100.0, 200.0, 0.9, 0.8, 0.1, 0.1]])
        [(box, form, score)] = decode_detector_output(raw)
        assert box == Box(270, 220, 100, 200)
        assert form is BodyForm.WHOLE
        assert score == pytest.approx(0.9 * 0.8)

    def test_accepts_batch_dim(self):
        raw = np.zeros((1, 3, 8))
        raw[0, :, 2:4] = 10.0
        assert len(decode_detector_output(raw)) == 3

    def test_wrong_width_is_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError, match=r"\(N, 8\)"):
            decode_detector_output(np.zeros((5, 85)))  # an 80-class head

    def test_degenerate_rows_dropped(self):
        raw = np.array([[10.0, 10.0, 0.0, 5.0, 0.9, 1.0, 0.0, 0.0]])
        assert decode_detector_output(raw) == []


class FakeSession:
    """Stands in for an onnxruntime InferenceSession."""

    def __init__(self, output):
        self._output = output
        self.feeds = []

    def get_inputs(self):
        class _In:
            name = "images"

        return [_In()]

    def run(self, names, feed):
        self.feeds.append(feed)
        return [self._output]


class TestOnnxDetector:
    def test_decodes_and_maps_to_source(self):
        # One whole-body row centered on the canvas; frame is 1280x720 so
        # the letterbox is scale 0.5 with pad_y 140.
        raw = np.array([[320.0, 320.0, 100.0, 200.0, 1.0, 1.0, 0.0, 0.0]])
        det = OnnxDetector("unused.onnx", session=FakeSession(raw))
        pixels = np.zeros((720, 1280, 3), dtype=np.uint8)
        [d] = det.detect(make_frame(0, pixels=pixels))
        assert d.form is BodyForm.WHOLE
        assert d.box.x == pytest.approx((320 - 50) / 0.5)
        assert d.box.y == pytest.approx((320 - 100 - 140) / 0.5)
        assert d.box.w == pytest.approx(200)
        assert d.box.h == pytest.approx(400)

    def test_padding_only_boxes_dropped(self):
        # Box fully inside the top padding band (y < 140).
        raw = np.array([[320.0, 50.0, 100.0, 80.0, 1.0, 1.0, 0.0, 0.0]])
        det = OnnxDetector("unused.onnx", session=FakeSession(raw))
        pixels = np.zeros((720, 1280, 3), dtype=np.uint8)
        assert det.detect(make_frame(0, pixels=pixels)) == []

    def test_shape_mismatch_surfaces(self):
        det = OnnxDetector("unused.onnx", session=FakeSession(np.zeros((5, 85))))
        pixels = np.zeros((720, 1280, 3), dtype=np.uint8)
        with pytest.raises(ShapeMismatchError):
            det.detect(make_frame(0, pixels=pixels))

    def test_requires_pixels(self):
        det = OnnxDetector("unused.onnx", session=FakeSession(np.zeros((0, 8))))
        with pytest.raises(BackendError, match="no pixel data"):
            det.detect(make_frame(0))

    def test_deterministic(self):
        raw = np.array([[320.0, 320.0, 100.0, 200.0, 0.9, 0.7, 0.2, 0.1]])
        det = OnnxDetector("unused.onnx", session=FakeSession(raw))
        pixels = np.random.default_rng(3).integers(0, 255, (720, 1280, 3), dtype=np.uint8)
        assert det.detect(make_frame(0, pixels=pixels)) == det.detect(make_frame(0, pixels=pixels))

    def test_missing_model_file(self, tmp_path):
        with pytest.raises(BackendError):
            OnnxDetector(tmp_path / "nope.onnx")
