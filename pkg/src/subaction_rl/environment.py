"""Synthetic video-reasoning episodes, oracle traces, and a brute-force baseline.

A synthetic video is a sequence of frames, each a bag of keyword phrases.
Ground truth partitions the frames into contiguous phase windows; frames in
phase ``i``'s window show that phase's descriptions, thinned by keyword
dropout and polluted with distractor phrases from other actions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import EmbedderConfig, cosine, embed
from .library import SubActionLibrary, phases_of
from .temporal import GroundTruthAnnotation
from .trace import StructuredTrace, make_trace

ORACLE_ENTITY = "subject"
EPISODE_VERSION = 1


@dataclass(frozen=True)
class SyntheticVideo:
    frames: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ValueError("a video needs at least one frame")

    @property
    def n_frames(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class EpisodeSpec:
    noise_drop: float = 0.0
    noise_distract: float = 0.0
    seed: int = 0
    n_frames: int = 16

    def __post_init__(self):
        if not 0.0 <= self.noise_drop <= 1.0:
            raise ValueError(f"noise_drop must lie in [0, 1], got {self.noise_drop}")
        if self.noise_distract < 0.0:
            raise ValueError(f"noise_distract must be >= 0, got {self.noise_distract}")
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")


@dataclass(frozen=True)
class Episode:
    video: SyntheticVideo
    truth: GroundTruthAnnotation

    def to_dict(self) -> dict:
        return {
            "version": EPISODE_VERSION,
            "label": self.truth.label,
            "n_frames": self.video.n_frames,
            "frames": [list(f) for f in self.video.frames],
            "phase_windows": {k: list(v) for k, v in self.truth.phase_windows.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Episode":
        frames = tuple(tuple(f) for f in doc["frames"])
        if len(frames) != doc["n_frames"]:
            raise ValueError("n_frames does not match the frame list")
        windows = {k: (v[0], v[1]) for k, v in doc["phase_windows"].items()}
        return cls(SyntheticVideo(frames), GroundTruthAnnotation(doc["label"], windows))


def phase_partition(n_frames: int, k: int) -> list[tuple[int, int]]:
    """Split ``[0, n_frames)`` into ``k`` contiguous windows; the last absorbs the remainder."""
    if k < 1 or n_frames < k:
        raise ValueError(f"cannot split {n_frames} frames into {k} non-empty windows")
    size = n_frames // k
    return [(i * size, (i + 1) * size if i < k - 1 else n_frames) for i in range(k)]


def _distractor_pool(lib: SubActionLibrary, label: str) -> list[str]:
    return [d for name in lib.action_names if name != label
            for p in phases_of(lib, name) for d in p.descriptions]


def generate_episode(lib: SubActionLibrary, spec: EpisodeSpec,
                     rng: np.random.Generator | None = None) -> Episode:
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    names = lib.action_names
    label = names[int(rng.integers(len(names)))]
    phases = phases_of(lib, label)
    windows = phase_partition(spec.n_frames, len(phases))
    pool = _distractor_pool(lib, label)
    frames = []
    for phase, (start, end) in zip(phases, windows):
        for _ in range(start, end):
            bag = [d for d in phase.descriptions if not rng.random() < spec.noise_drop]
            n_distract = int(rng.poisson(spec.noise_distract)) if spec.noise_distract > 0 else 0
            if pool:
                bag.extend(pool[int(i)] for i in rng.integers(len(pool), size=n_distract))
            frames.append(tuple(bag))
    truth = GroundTruthAnnotation(label, {p.id: w for p, w in zip(phases, windows)})
    return Episode(SyntheticVideo(tuple(frames)), truth)


def oracle_trace(episode: Episode, lib: SubActionLibrary) -> StructuredTrace:
    """Reference trace: one step per phase in order, with its true window and first description."""
    label = episode.truth.label
    lines = [
        (episode.truth.phase_windows.get(p.id), f"@{ORACLE_ENTITY} {p.descriptions[0]}")
        for p in phases_of(lib, label)
    ]
    return make_trace(lines, label)


def brute_force_label(video: SyntheticVideo, lib: SubActionLibrary,
                      cfg: EmbedderConfig = EmbedderConfig()) -> str:
    """Label maximizing the summed best-description similarity over frames.

    Ties go to the lexicographically first action name.
    """
    frame_vecs = [embed(" ".join(f), cfg) for f in video.frames]
    best_name, best_score = None, -np.inf
    for name in lib.action_names:
        descs = [embed(d, cfg) for p in phases_of(lib, name) for d in p.descriptions]
        score = sum(max(cosine(fv, dv) for dv in descs) for fv in frame_vecs)
        if score > best_score:
            best_name, best_score = name, score
    return best_name
