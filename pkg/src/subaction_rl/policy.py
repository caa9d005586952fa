"""Slot-structured linear-softmax policy with analytic gradients.

A trace is produced by ``2M + 1`` categorical decisions: for each of ``M``
slots a phase-claim symbol (one per library phase, plus SKIP) and a window
from a fixed grid of ``M`` contiguous spans, then a final answer label.

Slot ``m`` reads the mean frame embedding over grid window ``m``; the answer
head reads the mean over all frames. Every context vector carries a trailing
constant 1 so a head can express a prior even when the frames are blank.

Decision layout everywhere (log-prob vectors, per-decision weights) is
``[phase_0 .. phase_{M-1}, window_0 .. window_{M-1}, answer]``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .embedding import EmbedderConfig, embed
from .environment import ORACLE_ENTITY, Episode, SyntheticVideo, phase_partition
from .errors import IndexOutOfRange, IoFailure, MalformedFile
from .library import SubActionLibrary, phases_of
from .trace import make_trace, render_trace

CHECKPOINT_MAGIC = b"SUBACTRL-CKPT\n"
CHECKPOINT_VERSION = 1
_BLOCKS = ("phase_head", "window_head", "answer_head")


@dataclass(frozen=True)
class PolicySpace:
    labels: tuple[str, ...]
    symbols: tuple[tuple[str, str, str], ...]  # (action, phase_id, rendered description)
    n_slots: int
    n_frames: int
    dims: int
    hash_seed: int = 0

    @classmethod
    def from_library(cls, lib: SubActionLibrary, cfg: EmbedderConfig = EmbedderConfig(),
                     n_slots: int = 4, n_frames: int = 16) -> "PolicySpace":
        symbols = tuple((a, p.id, p.descriptions[0]) for a in lib.action_names for p in phases_of(lib, a))
        phase_partition(n_frames, n_slots)  # validates the grid
        return cls(tuple(lib.action_names), symbols, n_slots, n_frames, cfg.dims, cfg.hash_seed)

    @property
    def embedder(self) -> EmbedderConfig:
        return EmbedderConfig(self.dims, self.hash_seed)

    @property
    def skip(self) -> int:
        return len(self.symbols)

    @property
    def n_phase_options(self) -> int:
        return len(self.symbols) + 1

    @property
    def n_windows(self) -> int:
        return self.n_slots

    @property
    def context_dim(self) -> int:
        return self.dims + 1

    @property
    def window_grid(self) -> list[tuple[int, int]]:
        return phase_partition(self.n_frames, self.n_slots)

    @property
    def n_decisions(self) -> int:
        return 2 * self.n_slots + 1

    def decision_sizes(self) -> list[int]:
        m = self.n_slots
        return [self.n_phase_options] * m + [self.n_windows] * m + [len(self.labels)]

    def symbol_index(self, action: str, phase_id: str) -> int:
        for i, (a, p, _) in enumerate(self.symbols):
            if a == action and p == phase_id:
                return i
        raise KeyError((action, phase_id))

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "symbols": [list(s) for s in self.symbols],
            "n_slots": self.n_slots,
            "n_frames": self.n_frames,
            "dims": self.dims,
            "hash_seed": self.hash_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicySpace":
        return cls(tuple(d["labels"]), tuple(tuple(s) for s in d["symbols"]),
                   d["n_slots"], d["n_frames"], d["dims"], d["hash_seed"])


@dataclass
class PolicyParams:
    phase_head: np.ndarray   # (M, F+1, P+1)
    window_head: np.ndarray  # (M, F+1, W)
    answer_head: np.ndarray  # (F+1, K)

    @classmethod
    def zeros(cls, space: PolicySpace) -> "PolicyParams":
        m, d = space.n_slots, space.context_dim
        return cls(np.zeros((m, d, space.n_phase_options)), np.zeros((m, d, space.n_windows)),
                   np.zeros((d, len(space.labels))))

    def blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.phase_head, self.window_head, self.answer_head

    def copy(self) -> "PolicyParams":
        return PolicyParams(*(b.copy() for b in self.blocks()))

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams(*(np.zeros_like(b) for b in self.blocks()))

    def axpy(self, a: float, other: "PolicyParams") -> "PolicyParams":
        """Return ``self + a * other``."""
        return PolicyParams(*(x + a * y for x, y in zip(self.blocks(), other.blocks())))

    def iadd(self, other: "PolicyParams", a: float = 1.0) -> None:
        for x, y in zip(self.blocks(), other.blocks()):
            x += a * y

    def scale(self, a: float) -> None:
        for x in self.blocks():
            x *= a

    def norm(self) -> float:
        return math.sqrt(sum(float(np.sum(b * b)) for b in self.blocks()))

    def flat(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.blocks()])

    def all_finite(self) -> bool:
        return all(bool(np.isfinite(b).all()) for b in self.blocks())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolicyParams):
            return NotImplemented
        return all(np.array_equal(x, y) for x, y in zip(self.blocks(), other.blocks()))


@dataclass(frozen=True)
class Observation:
    frame_features: np.ndarray  # (T, F)
    pooled: np.ndarray          # (F,)
    slot_context: np.ndarray    # (M, F+1): window means plus bias
    answer_context: np.ndarray  # (F+1,)


def _with_bias(v: np.ndarray) -> np.ndarray:
    return np.concatenate([v, [1.0]])


def observation_from_features(frames: np.ndarray, space: PolicySpace) -> Observation:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape != (space.n_frames, space.dims):
        raise ValueError(f"expected frame features of shape {(space.n_frames, space.dims)}, got {frames.shape}")
    pooled = frames.mean(axis=0)
    slot_ctx = np.stack([_with_bias(frames[a:b].mean(axis=0)) for a, b in space.window_grid])
    return Observation(frames, pooled, slot_ctx, _with_bias(pooled))


def featurize(video: SyntheticVideo, space: PolicySpace) -> Observation:
    """Row ``t`` is the embedding of frame ``t``'s joined keyword bag."""
    cfg = space.embedder
    rows = np.stack([embed(" ".join(frame), cfg) for frame in video.frames])
    return observation_from_features(rows, space)


def text_only_observation(space: PolicySpace) -> Observation:
    """Observation with blank frames; only the bias feature is live."""
    return observation_from_features(np.zeros((space.n_frames, space.dims)), space)


@dataclass(frozen=True)
class TraceChoice:
    phases: tuple[int, ...]
    windows: tuple[int, ...]
    answer: int
    logps: tuple[float, ...] | None = None

    def indices(self) -> tuple[int, ...]:
        return (*self.phases, *self.windows, self.answer)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def decision_logits(params: PolicyParams, obs: Observation) -> list[np.ndarray]:
    ctx = obs.slot_context[:, None, :]
    phase = (ctx @ params.phase_head)[:, 0, :]
    window = (ctx @ params.window_head)[:, 0, :]
    return [*phase, *window, obs.answer_context @ params.answer_head]


def decision_log_probs(params: PolicyParams, obs: Observation) -> list[np.ndarray]:
    ctx = obs.slot_context[:, None, :]
    phase = _log_softmax((ctx @ params.phase_head)[:, 0, :])
    window = _log_softmax((ctx @ params.window_head)[:, 0, :])
    return [*phase, *window, _log_softmax(obs.answer_context @ params.answer_head)]


def _check_choice(choice: TraceChoice, sizes: list[int]) -> tuple[int, ...]:
    idx = choice.indices()
    if len(idx) != len(sizes):
        raise IndexOutOfRange(f"choice has {len(idx)} decisions, policy expects {len(sizes)}")
    for j, (c, n) in enumerate(zip(idx, sizes)):
        if not (0 <= c < n):
            raise IndexOutOfRange(f"decision {j}: index {c} outside [0, {n})")
    return idx


def logprob(params: PolicyParams, obs: Observation, choice: TraceChoice) -> tuple[float, np.ndarray]:
    """Total log-probability of ``choice`` and the per-decision vector."""
    lps = decision_log_probs(params, obs)
    idx = _check_choice(choice, [len(l) for l in lps])
    per = np.array([lp[c] for lp, c in zip(lps, idx)])
    return float(per.sum()), per


def sample_trace(params: PolicyParams, obs: Observation, rng_seed) -> TraceChoice:
    """Draw every decision by inverse-CDF sampling; deterministic in ``rng_seed``."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    lps = decision_log_probs(params, obs)
    u = rng.random(len(lps))
    idx = []
    for lp, ui in zip(lps, u):
        cdf = np.cumsum(np.exp(lp))
        idx.append(min(int(np.searchsorted(cdf, ui * cdf[-1], side="right")), len(lp) - 1))
    return _choice_from(idx, lps)


def greedy_trace(params: PolicyParams, obs: Observation) -> TraceChoice:
    lps = decision_log_probs(params, obs)
    return _choice_from([int(np.argmax(lp)) for lp in lps], lps)


def _choice_from(idx: list[int], lps: list[np.ndarray]) -> TraceChoice:
    m = (len(idx) - 1) // 2
    logps = tuple(float(lp[c]) for lp, c in zip(lps, idx))
    return TraceChoice(tuple(idx[:m]), tuple(idx[m:2 * m]), idx[-1], logps)


def _accumulate(grad: PolicyParams, obs: Observation, coefs: list[np.ndarray]) -> None:
    m = obs.slot_context.shape[0]
    ctx = obs.slot_context[:, :, None]
    grad.phase_head += ctx * np.stack(coefs[:m])[:, None, :]
    grad.window_head += ctx * np.stack(coefs[m:2 * m])[:, None, :]
    grad.answer_head += np.outer(obs.answer_context, coefs[-1])


def logprob_coefs(lps: list[np.ndarray], idx, weights=None) -> list[np.ndarray]:
    """Per-decision logit gradients ``w_j * (onehot_j - softmax_j)``."""
    coefs = []
    for j, (lp, c) in enumerate(zip(lps, idx)):
        g = -np.exp(lp)
        g[c] += 1.0
        coefs.append(g if weights is None else weights[j] * g)
    return coefs


def accumulate(grad: PolicyParams, obs: Observation, coefs: list[np.ndarray]) -> None:
    """Add the parameter gradient implied by per-decision logit gradients into ``grad``."""
    _accumulate(grad, obs, coefs)


def grad_logprob(params: PolicyParams, obs: Observation, choice: TraceChoice,
                 weights=None, out: PolicyParams | None = None) -> PolicyParams:
    """Gradient of ``sum_j weights[j] * logp_j`` (all weights 1 by default).

    Per decision the gradient is ``outer(context, onehot - softmax)``. When
    ``out`` is given the gradient is added into it.
    """
    lps = decision_log_probs(params, obs)
    idx = _check_choice(choice, [len(l) for l in lps])
    grad = params.zeros_like() if out is None else out
    _accumulate(grad, obs, logprob_coefs(lps, idx, weights))
    return grad


def kl_divergence(p: PolicyParams, q: PolicyParams, obs: Observation) -> float:
    """Sum over decisions of KL(softmax_p || softmax_q), computed exactly."""
    total = 0.0
    for lp, lq in zip(decision_log_probs(p, obs), decision_log_probs(q, obs)):
        total += float(np.sum(np.exp(lp) * (lp - lq)))
    return max(total, 0.0)


def grad_kl(p: PolicyParams, q: PolicyParams, obs: Observation, scale: float = 1.0,
            out: PolicyParams | None = None) -> PolicyParams:
    """Gradient of ``scale * kl_divergence(p, q, obs)`` with respect to ``p``.

    For one categorical, d KL / d z_j = p_j * (log p_j - log q_j - KL).
    """
    coefs = []
    for lp, lq in zip(decision_log_probs(p, obs), decision_log_probs(q, obs)):
        pj = np.exp(lp)
        diff = lp - lq
        coefs.append(scale * pj * (diff - np.sum(pj * diff)))
    grad = p.zeros_like() if out is None else out
    _accumulate(grad, obs, coefs)
    return grad


def render_choice(space: PolicySpace, choice: TraceChoice) -> str:
    """Canonical trace text for a choice; SKIP slots emit no step."""
    grid = space.window_grid
    lines = []
    for sym, win in zip(choice.phases, choice.windows):
        if sym == space.skip:
            continue
        lines.append((grid[win], f"@{ORACLE_ENTITY} {space.symbols[sym][2]}"))
    return render_trace(make_trace(lines, space.labels[choice.answer]))


def oracle_choice(space: PolicySpace, episode: Episode, lib: SubActionLibrary) -> TraceChoice:
    """Reference decisions: slot ``m`` claims phase ``m`` of the true action in window ``m``."""
    label = episode.truth.label
    phases = phases_of(lib, label)
    syms = []
    for m in range(space.n_slots):
        syms.append(space.symbol_index(label, phases[m].id) if m < len(phases) else space.skip)
    return TraceChoice(tuple(syms), tuple(range(space.n_slots)), space.labels.index(label))


def save_checkpoint(params: PolicyParams, space: PolicySpace, path_or_buf) -> None:
    """Write a checkpoint.

    Layout: the magic line ``SUBACTRL-CKPT\\n``, one UTF-8 JSON header line
    (format version, dtype, block names and shapes, policy space), then the
    raw little-endian float64 bytes of each block in header order, C order.
    """
    header = {
        "format_version": CHECKPOINT_VERSION,
        "dtype": "<f8",
        "blocks": [{"name": n, "shape": list(b.shape)} for n, b in zip(_BLOCKS, params.blocks())],
        "space": space.to_dict(),
    }
    payload = [CHECKPOINT_MAGIC, json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"]
    payload += [np.ascontiguousarray(b, dtype="<f8").tobytes() for b in params.blocks()]
    data = b"".join(payload)
    if isinstance(path_or_buf, io.IOBase) or hasattr(path_or_buf, "write"):
        path_or_buf.write(data)
    else:
        with open(path_or_buf, "wb") as fh:
            fh.write(data)


def load_checkpoint(path_or_bytes) -> tuple[PolicyParams, PolicySpace]:
    if isinstance(path_or_bytes, (bytes, bytearray)):
        data = bytes(path_or_bytes)
    else:
        try:
            with open(path_or_bytes, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise IoFailure(f"cannot read checkpoint {path_or_bytes}: {exc.strerror}") from None
    if not data.startswith(CHECKPOINT_MAGIC):
        raise MalformedFile("not a policy checkpoint (bad magic)", "byte 0")
    nl = data.find(b"\n", len(CHECKPOINT_MAGIC))
    if nl < 0:
        raise MalformedFile("truncated header", "header")
    try:
        header = json.loads(data[len(CHECKPOINT_MAGIC):nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"bad header: {exc}", "header") from None
    if header.get("format_version") != CHECKPOINT_VERSION or header.get("dtype") != "<f8":
        raise MalformedFile(f"unsupported checkpoint format {header.get('format_version')!r}", "header")
    names = [b["name"] for b in header["blocks"]]
    if names != list(_BLOCKS):
        raise MalformedFile(f"unexpected blocks {names}", "header.blocks")
    offset, blocks = nl + 1, []
    for spec in header["blocks"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) * 8
        chunk = data[offset:offset + n]
        if len(chunk) != n:
            raise MalformedFile(f"block {spec['name']} truncated", f"byte {offset}")
        blocks.append(np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64))
        offset += n
    if offset != len(data):
        raise MalformedFile("trailing bytes after last block", f"byte {offset}")
    params = PolicyParams(*blocks)
    space = PolicySpace.from_dict(header["space"])
    expected = PolicyParams.zeros(space)
    if any(x.shape != y.shape for x, y in zip(params.blocks(), expected.blocks())):
        raise MalformedFile("block shapes disagree with the policy space", "header.blocks")
    return params, space
