"""Task, sub-action, format, and composite rewards."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .detection import DetectionResult, detect
from .embedding import EmbedderConfig
from .errors import DuplicateIds
from .library import SubActionLibrary, phases_of
from .temporal import GroundTruthAnnotation, kendall_tau, s_bind, s_cross, s_seq, s_temporal
from .trace import StructuredTrace, parse_trace


@dataclass(frozen=True)
class SubRewardParams:
    alpha: float = 0.6
    beta: float = 0.2
    gamma: float = 0.2

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{k} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class TotalRewardWeights:
    lambda1: float = 0.3
    lambda2: float = 0.2
    lambda3: float = 0.1

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{k} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class RewardBreakdown:
    r_task: float
    r_sub: float
    s_temporal: float
    r_format: float
    r_total: float
    weights: TotalRewardWeights = field(default_factory=TotalRewardWeights)
    s_seq: float | None = None
    s_cross: float | None = None
    s_bind: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def ordering_score(detected_order, truth_order, detected_keys=None) -> float:
    """Normalized Kendall tau over the ids both orders share.

    ``detected_keys`` optionally maps ids to their detection positions (segment
    indices) so that ties contribute zero; by default list position is used.
    """
    if len(set(detected_order)) != len(detected_order):
        raise DuplicateIds(f"duplicate ids in detected order {list(detected_order)}")
    if len(set(truth_order)) != len(truth_order):
        raise DuplicateIds(f"duplicate ids in truth order {list(truth_order)}")
    truth_rank = {pid: i for i, pid in enumerate(truth_order)}
    if detected_keys is None:
        detected_keys = {pid: i for i, pid in enumerate(detected_order)}
    common = [pid for pid in detected_order if pid in truth_rank]
    if not common:
        return 0.0
    if len(common) == 1:
        return 1.0
    tau = kendall_tau([detected_keys[p] for p in common], [truth_rank[p] for p in common])
    return (tau + 1.0) / 2.0


def r_sub(result: DetectionResult, truth_action: str, lib: SubActionLibrary,
          params: SubRewardParams = SubRewardParams()) -> float:
    truth_phases = phases_of(lib, truth_action)
    k = len(truth_phases)
    own = sorted(result.for_action(truth_action), key=lambda d: d.segment_index)
    n_false = sum(1 for d in result.detections if d.action != truth_action)
    p = ordering_score(
        [d.phase_id for d in own],
        [ph.id for ph in truth_phases],
        {d.phase_id: d.segment_index for d in own},
    )
    return params.alpha * len(own) / k - params.beta * n_false / k + params.gamma * p


def _fold(s: str) -> str:
    return s.strip().casefold()


def r_task(answer: str | None, truth: str) -> float:
    return 1.0 if answer is not None and _fold(answer) == _fold(truth) else 0.0


def r_format(trace: StructuredTrace) -> float:
    return 1.0 if trace.format_ok else 0.0


def r_total(task: float, sub: float, temporal: float, fmt: float,
            weights: TotalRewardWeights = TotalRewardWeights(), **components) -> RewardBreakdown:
    total = task + weights.lambda1 * sub + weights.lambda2 * temporal + weights.lambda3 * fmt
    return RewardBreakdown(task, sub, temporal, fmt, total, weights, **components)


@dataclass(frozen=True)
class ScoredTrace:
    trace: StructuredTrace
    detections: DetectionResult
    breakdown: RewardBreakdown


def score_trace(
    trace: StructuredTrace,
    truth: GroundTruthAnnotation,
    lib: SubActionLibrary,
    params: SubRewardParams = SubRewardParams(),
    weights: TotalRewardWeights = TotalRewardWeights(),
    cfg: EmbedderConfig = EmbedderConfig(),
) -> ScoredTrace:
    """Run detection and every scorer on one trace."""
    dets = detect(trace, lib, None, cfg)
    seq = s_seq(trace)
    cross = s_cross(trace, dets, lib)
    bind = s_bind(trace, dets, truth)
    bd = r_total(
        r_task(trace.answer, truth.label),
        r_sub(dets, truth.label, lib, params),
        s_temporal(seq, cross, bind),
        r_format(trace),
        weights,
        s_seq=seq,
        s_cross=cross,
        s_bind=bind,
    )
    return ScoredTrace(trace, dets, bd)


class RewardScorer:
    """Memoizing scorer for raw trace text; rollouts repeat traces often."""

    def __init__(self, lib: SubActionLibrary, params: SubRewardParams = SubRewardParams(),
                 weights: TotalRewardWeights = TotalRewardWeights(), cfg: EmbedderConfig = EmbedderConfig()):
        self.lib, self.params, self.weights, self.cfg = lib, params, weights, cfg
        self._cache: dict = {}

    def __call__(self, raw: str, truth: GroundTruthAnnotation) -> RewardBreakdown:
        key = (raw, truth.label, tuple(sorted(truth.phase_windows.items())))
        hit = self._cache.get(key)
        if hit is None:
            hit = score_trace(parse_trace(raw), truth, self.lib, self.params, self.weights, self.cfg).breakdown
            if len(self._cache) > 200_000:
                self._cache.clear()
            self._cache[key] = hit
        return hit
