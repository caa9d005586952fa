"""Group-relative PPO-clip optimization and supervised cross-entropy steps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .environment import Episode
from .errors import TooFewCompletions
from .policy import (
    Observation,
    PolicyParams,
    PolicySpace,
    TraceChoice,
    _check_choice,
    accumulate,
    decision_log_probs,
    grad_kl,
    kl_divergence,
    logprob_coefs,
    render_choice,
    sample_trace,
)
from .rewards import RewardBreakdown, RewardScorer, TotalRewardWeights

ADV_EPS = 1e-8


def compute_advantages(rewards) -> np.ndarray:
    """Standardize rewards within a group (population std); flat groups get zeros."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise TooFewCompletions(f"need at least 2 completions per group, got {r.size}")
    if np.all(r == r[0]):
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + ADV_EPS)


def ppo_clip_objective(ratio: float, advantage: float, eps: float) -> float:
    clipped = min(max(ratio, 1.0 - eps), 1.0 + eps)
    return min(ratio * advantage, clipped * advantage)


def clip_grad_norm(grad: PolicyParams, max_norm: float) -> tuple[float, float]:
    """Scale ``grad`` in place to global norm <= ``max_norm``; returns (pre, post) norms."""
    pre = grad.norm()
    if pre > max_norm:
        grad.scale(max_norm / pre)
    return pre, grad.norm()


@dataclass(frozen=True)
class Prompt:
    episode: Episode
    obs: Observation


@dataclass
class Completion:
    choice: TraceChoice
    text: str
    reward: RewardBreakdown   # scored with the evaluation weights
    train_reward: float       # total under the (possibly ablated) training weights
    advantage: float = 0.0


@dataclass
class GroupRollout:
    prompt_id: int
    completions: list[Completion]

    @property
    def advantages(self) -> list[float]:
        return [c.advantage for c in self.completions]


@dataclass
class StepMetrics:
    mean_r_total: float
    mean_r_task: float
    mean_r_sub: float
    mean_s_temporal: float
    mean_r_format: float
    kl: float
    clip_fraction: float
    grad_norm_preclip: float
    loss: float
    microbatch_clip_fractions: list[float] = field(default_factory=list)
    microbatch_grad_norms: list[tuple[float, float]] = field(default_factory=list)
    ratios: list[np.ndarray] = field(default_factory=list)


def weighted_total(bd: RewardBreakdown, w: TotalRewardWeights) -> float:
    return bd.r_task + w.lambda1 * bd.r_sub + w.lambda2 * bd.s_temporal + w.lambda3 * bd.r_format


def rollout(params: PolicyParams, prompts: list[Prompt], space: PolicySpace, scorer: RewardScorer,
            group_size: int, train_weights: TotalRewardWeights, rng: np.random.Generator) -> list[GroupRollout]:
    groups = []
    for i, prompt in enumerate(prompts):
        comps = []
        for seed in rng.integers(0, 2**63 - 1, size=group_size):
            choice = sample_trace(params, prompt.obs, int(seed))
            text = render_choice(space, choice)
            bd = scorer(text, prompt.episode.truth)
            comps.append(Completion(choice, text, bd, weighted_total(bd, train_weights)))
        for c, a in zip(comps, compute_advantages([c.train_reward for c in comps])):
            c.advantage = float(a)
        groups.append(GroupRollout(i, comps))
    return groups


def _microbatches(n: int, k: int) -> list[range]:
    bounds = np.linspace(0, n, k + 1).round().astype(int)
    return [range(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def tgrpo_step(params: PolicyParams, ref_params: PolicyParams, prompts: list[Prompt], space: PolicySpace,
               scorer: RewardScorer, config, rng: np.random.Generator):
    """One rollout-and-update step.

    Completions are sampled under ``params`` with their per-decision log-probs
    recorded. The prompts are then consumed in ``config.num_microbatches``
    contiguous microbatches, each taking one clipped SGD update, so later
    microbatches see ratios away from 1.

    Returns ``(new_params, metrics, groups)``.
    """
    groups = rollout(params, prompts, space, scorer, config.group_size, config.train_weights, rng)
    eps = config.clip_eps
    cur = params.copy()
    losses, kls, clip_fracs, norms, ratios_all = [], [], [], [], []
    n_clipped = n_total = 0
    for mb in _microbatches(len(prompts), config.num_microbatches):
        grad = cur.zeros_like()
        n_dec = sum(len(groups[i].completions) for i in mb) * space.n_decisions
        surrogate = 0.0
        mb_clipped = 0
        for i in mb:
            obs = prompts[i].obs
            lps = decision_log_probs(cur, obs)
            total = None
            for comp in groups[i].completions:
                idx = comp.choice.indices()
                new_lp = np.array([lp[c] for lp, c in zip(lps, idx)])
                ratio = np.exp(new_lp - np.asarray(comp.choice.logps))
                ratios_all.append(ratio)
                a = comp.advantage
                coefs = np.zeros(space.n_decisions)
                for j, r in enumerate(ratio):
                    r = float(r)
                    unclipped = r * a
                    clipped = min(max(r, 1.0 - eps), 1.0 + eps) * a
                    surrogate += min(unclipped, clipped)
                    if unclipped <= clipped:
                        coefs[j] = a * r
                    else:
                        mb_clipped += 1
                # d(-surrogate/n_dec) = -sum_j coef_j * dlogp_j / n_dec
                cs = logprob_coefs(lps, idx, -coefs / n_dec)
                total = cs if total is None else [t + c for t, c in zip(total, cs)]
            accumulate(grad, obs, total)
        kl = sum(kl_divergence(cur, ref_params, prompts[i].obs) for i in mb) / len(mb)
        for i in mb:
            grad_kl(cur, ref_params, prompts[i].obs, config.kl_coef / len(mb), out=grad)
        loss = -surrogate / n_dec + config.kl_coef * kl
        pre, post = clip_grad_norm(grad, config.max_grad_norm)
        cur.iadd(grad, -config.stage3_lr)
        losses.append(loss)
        kls.append(kl)
        clip_fracs.append(mb_clipped / n_dec)
        norms.append((pre, post))
        n_clipped += mb_clipped
        n_total += n_dec
    comps = [c for g in groups for c in g.completions]
    metrics = StepMetrics(
        mean_r_total=_mean(c.reward.r_total for c in comps),
        mean_r_task=_mean(c.reward.r_task for c in comps),
        mean_r_sub=_mean(c.reward.r_sub for c in comps),
        mean_s_temporal=_mean(c.reward.s_temporal for c in comps),
        mean_r_format=_mean(c.reward.r_format for c in comps),
        kl=_mean(kls),
        clip_fraction=n_clipped / n_total,
        grad_norm_preclip=_mean(p for p, _ in norms),
        loss=_mean(losses),
        microbatch_clip_fractions=clip_fracs,
        microbatch_grad_norms=norms,
        ratios=ratios_all,
    )
    return cur, metrics, groups


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0


def supervised_grad(params: PolicyParams, batch: list[tuple[Observation, TraceChoice]]):
    """Cross-entropy loss (negative mean total log-prob of the references) and its gradient."""
    grad = params.zeros_like()
    total = 0.0
    for obs, ref in batch:
        lps = decision_log_probs(params, obs)
        idx = _check_choice(ref, [len(l) for l in lps])
        total += math.fsum(lp[c] for lp, c in zip(lps, idx))
        accumulate(grad, obs, logprob_coefs(lps, idx))
    n = len(batch)
    grad.scale(-1.0 / n)
    return -total / n, grad


def supervised_step(params: PolicyParams, batch: list[tuple[Observation, TraceChoice]],
                    learning_rate: float) -> tuple[PolicyParams, float]:
    """One gradient-descent step; the returned loss is measured before the update."""
    loss, grad = supervised_grad(params, batch)
    return params.axpy(-learning_rate, grad), loss
