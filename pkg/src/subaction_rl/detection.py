"""Sub-action detection over trace segments."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .embedding import EmbedderConfig, cosine, embed
from .library import SubActionLibrary, SubActionPhase, phases_of
from .trace import StructuredTrace, segments


@dataclass(frozen=True)
class Detection:
    action: str
    phase_id: str
    segment_index: int
    similarity: float


@dataclass(frozen=True)
class DetectionResult:
    detections: tuple[Detection, ...] = ()

    def for_action(self, action: str) -> list[Detection]:
        return [d for d in self.detections if d.action == action]

    def to_dict(self) -> dict:
        return {
            "detections": [
                {"action": d.action, "phase_id": d.phase_id, "segment_index": d.segment_index,
                 "similarity": d.similarity}
                for d in self.detections
            ]
        }


def similarity_to_phase(segment_text: str, phase: SubActionPhase, cfg: EmbedderConfig = EmbedderConfig()) -> float:
    """Max cosine between the segment and any of the phase's descriptions."""
    seg = embed(segment_text, cfg)
    return max(cosine(seg, embed(d, cfg)) for d in phase.descriptions)


@dataclass(frozen=True)
class _PhaseIndex:
    keys: tuple[tuple[str, SubActionPhase], ...]
    starts: np.ndarray      # first description row of each phase
    thresholds: np.ndarray
    matrix: np.ndarray      # (n_descriptions, dims)


@lru_cache(maxsize=64)
def _phase_index(lib: SubActionLibrary, action_filter: str | None, cfg: EmbedderConfig) -> _PhaseIndex:
    names = [action_filter] if action_filter is not None else lib.action_names
    keys, starts, rows = [], [], []
    for name in names:
        for phase in phases_of(lib, name):
            starts.append(len(rows))
            rows.extend(embed(d, cfg) for d in phase.descriptions)
            keys.append((name, phase))
    thresholds = np.array([ph.threshold for _, ph in keys])
    return _PhaseIndex(tuple(keys), np.array(starts), thresholds, np.vstack(rows))


def detect(
    trace: StructuredTrace,
    lib: SubActionLibrary,
    action_filter: str | None = None,
    cfg: EmbedderConfig = EmbedderConfig(),
) -> DetectionResult:
    """Detect each candidate phase at its earliest segment reaching the phase threshold."""
    if action_filter is not None:
        lib.action(action_filter)
    segs = segments(trace)
    if not segs:
        return DetectionResult()
    index = _phase_index(lib, action_filter, cfg)
    seg_mat = np.vstack([embed(text, cfg) for _, text in segs])
    sims = np.clip(seg_mat @ index.matrix.T, -1.0, 1.0)
    best = np.maximum.reduceat(sims, index.starts, axis=1)  # (n_segments, n_phases)
    hit = best >= index.thresholds
    found = []
    for k in np.flatnonzero(hit.any(axis=0)):
        i = int(np.argmax(hit[:, k]))
        name, phase = index.keys[k]
        found.append(Detection(name, phase.id, segs[i][0], float(best[i, k])))
    return DetectionResult(tuple(found))
