"""Training configuration with strict JSON loading."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

from .errors import ConfigInvalid, IoFailure
from .rewards import SubRewardParams, TotalRewardWeights


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 1
    # curriculum
    stage1_iters: int = 50
    stage2_iters: int = 100
    stage3_iters: int = 150
    stage1_lr: float = 0.5
    stage2_lr: float = 0.5
    stage3_lr: float = 2.0
    skip_stage1: bool = False
    skip_stage2: bool = False
    skip_stage3: bool = False
    batch_size: int = 16
    # T-GRPO
    prompts_per_step: int = 8
    group_size: int = 4
    num_microbatches: int = 2
    clip_eps: float = 0.2
    kl_coef: float = 0.04
    max_grad_norm: float = 5.0
    # rewards
    alpha: float = 0.6
    beta: float = 0.2
    gamma: float = 0.2
    lambda1: float = 0.3
    lambda2: float = 0.2
    lambda3: float = 0.1
    disable_sub_reward: bool = False
    disable_temporal_reward: bool = False
    disable_format_reward: bool = False
    # environment and policy
    noise_drop: float = 0.2
    noise_distract: float = 1.0
    n_frames: int = 16
    n_slots: int = 4
    embed_dims: int = 384
    hash_seed: int = 0
    library: str | None = None
    # evaluation
    eval_episodes: int = 200
    eval_samples: int = 8

    def __post_init__(self):
        def bad(msg):
            raise ConfigInvalid(msg)

        for f in fields(self):
            v = getattr(self, f.name)
            kind = f.type
            if kind == "bool" and not isinstance(v, bool):
                bad(f"{f.name} must be a boolean, got {v!r}")
            if kind == "int" and (isinstance(v, bool) or not isinstance(v, int)):
                bad(f"{f.name} must be an integer, got {v!r}")
            if kind == "float":
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                    bad(f"{f.name} must be a finite number, got {v!r}")
                object.__setattr__(self, f.name, float(v))
            if kind == "str | None" and v is not None and not isinstance(v, str):
                bad(f"{f.name} must be a string or null, got {v!r}")
        if not 0.0 < self.clip_eps < 1.0:
            bad(f"clip_eps must lie in (0, 1), got {self.clip_eps}")
        if self.group_size < 2:
            bad(f"group_size must be >= 2, got {self.group_size}")
        if self.max_grad_norm <= 0:
            bad(f"max_grad_norm must be > 0, got {self.max_grad_norm}")
        for name in ("stage1_iters", "stage2_iters", "stage3_iters", "eval_episodes"):
            if getattr(self, name) < 0:
                bad(f"{name} must be >= 0")
        for name in ("batch_size", "prompts_per_step", "num_microbatches", "eval_samples", "n_slots"):
            if getattr(self, name) < 1:
                bad(f"{name} must be >= 1")
        if self.num_microbatches > self.prompts_per_step:
            bad("num_microbatches cannot exceed prompts_per_step")
        if self.n_frames < self.n_slots:
            bad("n_frames must be >= n_slots")
        if self.embed_dims < 2:
            bad("embed_dims must be >= 2")
        for name in ("stage1_lr", "stage2_lr", "stage3_lr", "kl_coef", "alpha", "beta", "gamma",
                     "lambda1", "lambda2", "lambda3", "noise_distract"):
            if getattr(self, name) < 0:
                bad(f"{name} must be >= 0")
        if not 0.0 <= self.noise_drop <= 1.0:
            bad("noise_drop must lie in [0, 1]")

    @property
    def sub_params(self) -> SubRewardParams:
        return SubRewardParams(self.alpha, self.beta, self.gamma)

    @property
    def eval_weights(self) -> TotalRewardWeights:
        """Weights used for scoring and reporting, independent of ablation flags."""
        return TotalRewardWeights(self.lambda1, self.lambda2, self.lambda3)

    @property
    def train_weights(self) -> TotalRewardWeights:
        """Weights behind the training advantage; ablation flags zero their term."""
        return TotalRewardWeights(
            0.0 if self.disable_sub_reward else self.lambda1,
            0.0 if self.disable_temporal_reward else self.lambda2,
            0.0 if self.disable_format_reward else self.lambda3,
        )

    def replace(self, **changes) -> "TrainConfig":
        return config_from_dict({**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name for f in fields(TrainConfig)}


def config_from_dict(doc) -> TrainConfig:
    if not isinstance(doc, dict):
        raise ConfigInvalid("config must be a JSON object")
    for key in doc:
        if key not in _FIELDS:
            raise ConfigInvalid(f"unknown config key {key!r}")
    return TrainConfig(**doc)


def load_config(path) -> TrainConfig:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(doc)


def dump_config(cfg: TrainConfig) -> str:
    """Canonical snapshot text; ``dump_config(config_from_dict(json.loads(s))) == s``."""
    return json.dumps(asdict(cfg), indent=2) + "\n"
