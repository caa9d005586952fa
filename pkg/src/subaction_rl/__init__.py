"""Sub-action reward shaping for video action reasoning, at desk scale."""

from .detection import Detection, DetectionResult, detect
from .embedding import EmbedderConfig, cosine, embed
from .environment import Episode, EpisodeSpec, brute_force_label, generate_episode, oracle_trace
from .library import (
    ActionDecomposition,
    SubActionLibrary,
    SubActionPhase,
    dump_library,
    library_stats,
    load_library,
    sample_library,
)
from .rewards import RewardBreakdown, SubRewardParams, TotalRewardWeights, r_sub, r_total, score_trace
from .temporal import GroundTruthAnnotation, kendall_tau, s_bind, s_cross, s_seq, s_temporal
from .trace import StructuredTrace, TraceStep, parse_trace, render_trace

__version__ = "0.1.0"
