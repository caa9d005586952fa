import math

import pytest
from hypothesis import given, settings, strategies as st

import oracle
from subaction_rl.detection import Detection, DetectionResult, detect
from subaction_rl.errors import LengthMismatch, OutOfRange, TooShort
from subaction_rl.temporal import (
    GroundTruthAnnotation,
    interval_iou,
    kendall_tau,
    s_bind,
    s_cross,
    s_seq,
    s_temporal,
)
from subaction_rl.trace import make_trace


def test_kendall_cases():
    assert kendall_tau([1, 2, 3], [10, 20, 30]) == 1.0
    assert kendall_tau([1, 2, 3], [30, 20, 10]) == -1.0
    assert abs(kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) - oracle.kendall([1, 2, 3, 4], [1, 3, 2, 4])) < 1e-15
    assert abs(kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) - 2 / 3) < 1e-15


def test_kendall_errors():
    with pytest.raises(LengthMismatch):
        kendall_tau([1, 2], [1])
    with pytest.raises(TooShort):
        kendall_tau([1], [1])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=2, max_size=12))
def test_kendall_against_oracle(pairs):
    xs, ys = zip(*pairs)
    assert abs(kendall_tau(xs, ys) - oracle.kendall(xs, ys)) < 1e-12


def _timed(windows):
    return make_trace([(w, f"step {i}") for i, w in enumerate(windows)], None)


def test_s_seq_cases():
    assert s_seq(_timed([(0, 4), (4, 8), (8, 12)])) == 1.0
    assert s_seq(_timed([(8, 12), (4, 8), (0, 4)])) == 0.0
    assert s_seq(_timed([(3, 5)])) == 1.0
    assert s_seq(_timed([None, (0, 2), None])) == 1.0


def test_iou_cases():
    assert interval_iou((0, 4), (0, 4)) == 1.0
    assert interval_iou((0, 4), (4, 8)) == 0.0
    assert interval_iou((0, 4), (2, 6)) == 1 / 3


def _det(phase, seg, action="jump"):
    return Detection(action, phase, seg, 1.0)


def test_s_bind_cases():
    truth = GroundTruthAnnotation("jump", {"preparation": (0, 4), "loading": (4, 8)})
    exact = make_trace([((0, 4), "knee flexion"), ((4, 8), "deep crouch")], "jump")
    res = DetectionResult((_det("preparation", 0), _det("loading", 1)))
    assert s_bind(exact, res, truth) == 1.0
    bare = make_trace([(None, "knee flexion"), (None, "deep crouch")], "jump")
    assert s_bind(bare, res, truth) == 0.0
    half = make_trace([((0, 4), "knee flexion"), ((2, 6), "deep crouch")], "jump")
    truth2 = GroundTruthAnnotation("jump", {"preparation": (0, 4), "loading": (0, 4)})
    assert abs(s_bind(half, res, truth2) - (1.0 + 1 / 3) / 2) < 1e-15
    assert s_bind(exact, DetectionResult(), truth) == 1.0


def test_s_cross_cases():
    three = make_trace([(None, "@subject a"), (None, "@subject b"), (None, "@subject c")], "jump")
    res = DetectionResult(tuple(_det(p, i) for i, p in enumerate(["preparation", "loading", "flight"])))
    assert s_cross(three, res) == 1.0
    two = make_trace([(None, "@subject a"), (None, "@subject b")], "jump")
    mixed = DetectionResult((_det("preparation", 0), _det("address", 1, "golf_swing")))
    assert s_cross(two, mixed) == 0.5
    plain = make_trace([(None, "a"), (None, "b")], "jump")
    assert s_cross(plain, mixed) == 1.0


def test_s_temporal_cases():
    assert s_temporal(1, 1, 1) == 1.0
    assert s_temporal(0, 0, 0) == 0.0
    assert s_temporal(1, 0.5, 0) == 0.5
    with pytest.raises(OutOfRange):
        s_temporal(1.1, 0, 0)


def test_annotation_roundtrip():
    t = GroundTruthAnnotation("jump", {"flight": (12, 16)})
    assert GroundTruthAnnotation.from_dict(t.to_dict()) == t


# --- property suite -----------------------------------------------------------

_unit = st.floats(0, 1)


@settings(max_examples=500, deadline=None)
@given(_unit, _unit, _unit, st.permutations([0, 1, 2]))
def test_s_temporal_permutation_invariant(a, b, c, perm):
    xs = (a, b, c)
    assert s_temporal(*xs) == s_temporal(*(xs[i] for i in perm))
    assert 0.0 <= s_temporal(*xs) <= 1.0


_win = st.tuples(st.integers(0, 20), st.integers(1, 8)).map(lambda t: (t[0], t[0] + t[1]))


@settings(max_examples=500, deadline=None)
@given(_win, _win)
def test_iou_symmetric(a, b):
    assert interval_iou(a, b) == interval_iou(b, a)
    assert (interval_iou(a, b) == 1.0) == (a == b)
    assert 0.0 <= interval_iou(a, b) <= 1.0


@settings(max_examples=300, deadline=None)
@given(st.lists(st.one_of(st.none(), _win), max_size=8), st.integers(0, 50))
def test_s_seq_shift_invariant(windows, shift):
    moved = [None if w is None else (w[0] + shift, w[1] + shift) for w in windows]
    assert s_seq(_timed(windows)) == s_seq(_timed(moved))


def test_scores_bounded_on_random_traces(lib):
    """10^4 random traces through detection and every score."""
    import numpy as np
    rng = np.random.default_rng(11)
    words = sorted({w for a in lib.actions.values() for p in a.phases for d in p.descriptions for w in d.split()})
    words += ["@subject", "@ball", "@coach", "noise"]
    labels = lib.action_names
    for _ in range(10_000):
        n = int(rng.integers(0, 6))
        lines = []
        for _ in range(n):
            text = " ".join(rng.choice(words, size=int(rng.integers(1, 5))))
            w = None
            if rng.random() < 0.7:
                s = int(rng.integers(0, 14))
                w = (s, s + int(rng.integers(1, 5)))
            lines.append((w, text))
        label = labels[int(rng.integers(len(labels)))]
        trace = make_trace(lines, label)
        res = detect(trace, lib)
        starts = sorted(int(x) for x in rng.choice(15, size=4, replace=False))
        truth = GroundTruthAnnotation(label, {p.id: (s, s + 2) for p, s in zip(lib.action(label).phases, starts)})
        vals = (s_seq(trace), s_cross(trace, res, lib), s_bind(trace, res, truth))
        for v in vals + (s_temporal(*vals), interval_iou(truth.phase_windows[lib.action(label).phases[0].id], (0, 3))):
            assert 0.0 <= v <= 1.0
