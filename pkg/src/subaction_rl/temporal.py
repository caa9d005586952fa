"""Rule-based temporal consistency scores: sequence, cross-step, and binding."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .detection import DetectionResult
from .errors import InvariantViolation, LengthMismatch, OutOfRange, TooShort
from .library import SubActionLibrary
from .trace import StructuredTrace

Interval = tuple[int, int]


@dataclass(frozen=True)
class GroundTruthAnnotation:
    label: str
    phase_windows: dict[str, Interval] = field(default_factory=dict)

    def __post_init__(self):
        for pid, (start, end) in self.phase_windows.items():
            if not (0 <= start < end):
                raise InvariantViolation(f"invalid window [{start}, {end})", f"phase_windows.{pid}")

    def to_dict(self) -> dict:
        return {"label": self.label, "phase_windows": {k: list(v) for k, v in self.phase_windows.items()}}

    @classmethod
    def from_dict(cls, doc) -> "GroundTruthAnnotation":
        if not isinstance(doc, dict) or set(doc) - {"label", "phase_windows"}:
            raise InvariantViolation("annotation must be an object with label and phase_windows", "$")
        windows = {}
        for pid, w in (doc.get("phase_windows") or {}).items():
            if not (isinstance(w, list) and len(w) == 2 and all(isinstance(x, int) for x in w)):
                raise InvariantViolation("window must be [start, end]", f"$.phase_windows.{pid}")
            windows[pid] = (w[0], w[1])
        return cls(doc.get("label", ""), windows)


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def kendall_tau(xs, ys) -> float:
    """Kendall's tau-a; pairs tied in either sequence contribute zero."""
    if len(xs) != len(ys):
        raise LengthMismatch(f"length {len(xs)} != {len(ys)}")
    n = len(xs)
    if n < 2:
        raise TooShort("kendall_tau needs at least two observations")
    s = 0
    for i in range(n):
        for j in range(i + 1, n):
            s += _sign(xs[i] - xs[j]) * _sign(ys[i] - ys[j])
    return s / (n * (n - 1) / 2)


def s_seq(trace: StructuredTrace) -> float:
    timed = [s for s in trace.steps if s.frame_window is not None]
    if len(timed) < 2:
        return 1.0
    tau = kendall_tau([s.index for s in timed], [s.frame_window[0] for s in timed])
    return (tau + 1.0) / 2.0


def interval_iou(a: Interval, b: Interval) -> float:
    inter = max(0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union if union > 0 else 0.0


def s_bind(trace: StructuredTrace, detections: DetectionResult, truth: GroundTruthAnnotation) -> float:
    windows = {s.index: s.frame_window for s in trace.steps}
    scores = []
    for det in detections.for_action(truth.label):
        gt = truth.phase_windows.get(det.phase_id)
        if gt is None:
            continue
        claimed = windows.get(det.segment_index)
        scores.append(interval_iou(claimed, gt) if claimed is not None else 0.0)
    if not scores:
        return 1.0
    return sum(scores) / len(scores)


def s_cross(trace: StructuredTrace, detections: DetectionResult, lib: SubActionLibrary | None = None) -> float:
    """Entity consistency: how often each repeated entity's steps agree on one action.

    A step's claimed action is the single action owning the phases detected at
    that step; steps with zero or several owning actions have no claim. Action
    ownership is carried on the detections, so ``lib`` is accepted for
    signature symmetry only.
    """
    owners: dict[int, set[str]] = {}
    for det in detections.detections:
        owners.setdefault(det.segment_index, set()).add(det.action)
    claims = {i: next(iter(acts)) for i, acts in owners.items() if len(acts) == 1}
    per_entity: dict[str, list[str]] = {}
    for step in trace.steps:
        if step.index not in claims:
            continue
        for ent in step.entities:
            per_entity.setdefault(ent, []).append(claims[step.index])
    ratios = []
    for votes in per_entity.values():
        if len(votes) >= 2:
            ratios.append(Counter(votes).most_common(1)[0][1] / len(votes))
    if not ratios:
        return 1.0
    return sum(ratios) / len(ratios)


def s_temporal(seq: float, cross: float, bind: float) -> float:
    for name, v in (("s_seq", seq), ("s_cross", cross), ("s_bind", bind)):
        if not (0.0 <= v <= 1.0):
            raise OutOfRange(f"{name}={v} outside [0, 1]")
    # fsum is correctly rounded, so the mean is exactly symmetric in its arguments
    return math.fsum((seq, cross, bind)) / 3.0
