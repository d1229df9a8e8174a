import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiform.classification import (
    DEFAULT_LABEL_SETS,
    ClassDistribution,
    LabelSet,
    OnnxClassifier,
    ScriptedClassifier,
    build_crop,
    classify,
    collapse,
    uniform_distribution,
)
from multiform.errors import FixtureError, ShapeMismatchError
from multiform.geometry import Box

SLEEP = DEFAULT_LABEL_SETS["sleep"]
FALL = DEFAULT_LABEL_SETS["fall"]


def dist(labels, probs):
    return ClassDistribution(tuple(labels), tuple(probs))


@st.composite
def distributions(draw, n=3):
    raw = draw(
        st.lists(st.floats(0.001, 1.0, allow_nan=False), min_size=n, max_size=n)
    )
    total = sum(raw)
    return tuple(p / total for p in raw)


class TestLabelSet:
    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            LabelSet(("a", "a"), frozenset({"a"}))

    def test_positive_must_be_subset(self):
        with pytest.raises(ValueError):
            LabelSet(("a", "b"), frozenset({"c"}))

    def test_positive_nonempty(self):
        with pytest.raises(ValueError):
            LabelSet(("a", "b"), frozenset())


class TestClassDistribution:
    def test_sum_must_be_one(self):
        with pytest.raises(ValueError):
            dist(["a", "b"], [0.5, 0.3])

    def test_range(self):
        with pytest.raises(ValueError):
            dist(["a", "b"], [1.2, -0.2])

    def test_length_match(self):
        with pytest.raises(ValueError):
            dist(["a", "b", "c"], [0.5, 0.5])


class TestCollapse:
    def test_sleep_positive(self):
        positive, score, top = collapse(dist(SLEEP.names, (0.7, 0.2, 0.1)), SLEEP)
        assert positive is True
        assert score == pytest.approx(0.7)
        assert top == "sleep"

    def test_one_hot_negative(self):
        positive, score, top = collapse(dist(SLEEP.names, (0.0, 0.0, 1.0)), SLEEP)
        assert positive is False
        assert score == 0.0
        assert top == "nosleep"

    def test_fall_near_tie(self):
        positive, score, top = collapse(dist(FALL.names, (0.34, 0.33, 0.33)), FALL)
        assert positive is True
        assert score == pytest.approx(0.34)
        assert top == "fall"

    def test_exact_tie_goes_to_earliest_label(self):
        _, _, top = collapse(dist(SLEEP.names, (0.4, 0.4, 0.2)), SLEEP)
        assert top == "sleep"

    def test_mass_threshold_overrides_argmax(self):
        d = dist(SLEEP.names, (0.4, 0.5, 0.1))
        assert collapse(d, SLEEP)[0] is False
        assert collapse(d, SLEEP, positive_mass_threshold=0.3)[0] is True

    def test_misaligned_labels_rejected(self):
        with pytest.raises(ValueError):
            collapse(dist(("x", "y", "z"), (0.5, 0.3, 0.2)), SLEEP)

    @given(distributions())
    def test_score_is_positive_mass(self, probs):
        d = dist(SLEEP.names, probs)
        _, score, _ = collapse(d, SLEEP)
        want = sum(p for name, p in zip(d.labels, probs) if name in SLEEP.positive)
        assert score == want
        assert 0.0 <= score <= 1.0

    @given(distributions())
    def test_dominant_label_drives_verdict(self, probs):
        d = dist(SLEEP.names, probs)
        positive, _, top = collapse(d, SLEEP)
        best = max(probs)
        if probs.count(best) == 1:
            dominant = d.labels[probs.index(best)]
            assert top == dominant
            assert positive == (dominant in SLEEP.positive)

    @given(distributions())
    def test_monotone_rescaling_preserves_verdict(self, probs):
        # A strictly monotone remap (here squaring, then renormalizing)
        # keeps the ordering, hence the top label and the verdict.
        if len(set(probs)) < len(probs):
            return
        squared = tuple(p * p for p in probs)
        total = sum(squared)
        remapped = tuple(p / total for p in squared)
        a = collapse(dist(SLEEP.names, probs), SLEEP)
        b = collapse(dist(SLEEP.names, remapped), SLEEP)
        assert a[0] == b[0]
        assert a[2] == b[2]

    @given(distributions())
    def test_label_permutation_preserves_verdict(self, probs):
        if len(set(probs)) < len(probs):
            return  # exact ties resolve by declaration order on purpose
        rng = random.Random(17)
        order = list(range(3))
        rng.shuffle(order)
        permuted_set = LabelSet(tuple(SLEEP.names[i] for i in order), SLEEP.positive)
        a = collapse(dist(SLEEP.names, probs), SLEEP)
        b = collapse(
            dist(permuted_set.names, tuple(probs[i] for i in order)), permuted_set
        )
        assert (a[0], a[2]) == (b[0], b[2])
        assert a[1] == pytest.approx(b[1])


FIXTURE = """\
labels: sleep, sit, nosleep
default: uniform
0 0 0.7 0.2 0.1
0 1 0.1 0.1 0.8
"""


class TestScriptedClassifier:
    def test_lookup(self, tmp_path):
        f = tmp_path / "cls.txt"
        f.write_text(FIXTURE)
        clf = ScriptedClassifier(f)
        assert clf.labels == ("sleep", "sit", "nosleep")
        got = clf.predict(None, 0, 0)
        assert got.probs == (0.7, 0.2, 0.1)

    def test_missing_key_uses_default(self, tmp_path):
        f = tmp_path / "cls.txt"
        f.write_text(FIXTURE)
        got = ScriptedClassifier(f).predict(None, 9, 9)
        assert got == uniform_distribution(("sleep", "sit", "nosleep"))

    def test_explicit_default(self, tmp_path):
        f = tmp_path / "cls.txt"
        f.write_text("labels: a, b\ndefault: 0.25 0.75\n")
        assert ScriptedClassifier(f).predict(None, 0, 0).probs == (0.25, 0.75)

    def test_bad_sum_is_parse_error(self, tmp_path):
        f = tmp_path / "cls.txt"
        f.write_text("labels: a, b\n0 0 0.5 0.3\n")
        with pytest.raises(FixtureError, match="cls.txt:2"):
            ScriptedClassifier(f)

    def test_missing_header(self, tmp_path):
        f = tmp_path / "cls.txt"
        f.write_text("0 0 0.5 0.5\n")
        with pytest.raises(FixtureError, match="header"):
            ScriptedClassifier(f)

    def test_wrong_prob_count(self, tmp_path):
        f = tmp_path / "cls.txt"
        f.write_text("labels: a, b, c\n0 0 0.5 0.5\n")
        with pytest.raises(FixtureError, match="cls.txt:2"):
            ScriptedClassifier(f)


class TestClassifyWrapper:
    def test_wrong_canvas_size_rejected(self, tmp_path):
        f = tmp_path / "cls.txt"
        f.write_text(FIXTURE)
        clf = ScriptedClassifier(f)
        with pytest.raises(ValueError, match="384x128x3"):
            classify(np.zeros((100, 100, 3), dtype=np.uint8), clf)

    def test_valid_canvas_passes(self, tmp_path):
        f = tmp_path / "cls.txt"
        f.write_text(FIXTURE)
        clf = ScriptedClassifier(f)
        canvas = np.zeros((384, 128, 3), dtype=np.uint8)
        assert classify(canvas, clf, 0, 0).probs == (0.7, 0.2, 0.1)
        assert classify(canvas, clf, 0, 0) == classify(canvas, clf, 0, 0)


class FakeSession:
    def __init__(self, output):
        self._output = output

    def get_inputs(self):
        class _In:
            name = "input"

        return [_In()]

    def run(self, names, feed):
        return [self._output]


class TestOnnxClassifier:
    def canvas(self):
        return np.zeros((384, 128, 3), dtype=np.uint8)

    def test_probability_head_passthrough(self):
        clf = OnnxClassifier(
            "unused.onnx", ("a", "b", "c"), session=FakeSession(np.array([[0.2, 0.5, 0.3]]))
        )
        got = clf.predict(self.canvas(), 0, 0)
        assert got.probs == pytest.approx((0.2, 0.5, 0.3))

    def test_logit_head_softmaxed(self):
        clf = OnnxClassifier(
            "unused.onnx", ("a", "b"), session=FakeSession(np.array([[2.0, -1.0]]))
        )
        got = clf.predict(self.canvas(), 0, 0)
        assert sum(got.probs) == pytest.approx(1.0)
        assert got.probs[0] > got.probs[1]

    def test_class_count_mismatch(self):
        clf = OnnxClassifier(
            "unused.onnx",
            ("a", "b", "c"),
            session=FakeSession(np.zeros((1, 5))),
        )
        with pytest.raises(ShapeMismatchError, match="5 classes.*3"):
            clf.predict(self.canvas(), 0, 0)


class TestBuildCrop:
    def test_canvas_shape_and_fill(self):
        pixels = np.full((720, 1280, 3), 200, dtype=np.uint8)
        canvas = build_crop(pixels, Box(100, 100, 100, 100))
        assert canvas.shape == (384, 128, 3)
        # 100x100 crop scales to 128x128 centered: rows above pad_y keep the fill.
        assert np.all(canvas[0] == 114)
        assert np.all(canvas[192] == 200)

    def test_box_partially_outside(self):
        pixels = np.full((100, 100, 3), 50, dtype=np.uint8)
        canvas = build_crop(pixels, Box(-20, -20, 60, 60))
        assert canvas.shape == (384, 128, 3)
