"""Three-stage training pipeline, evaluation, and run artifacts.

Run directory layout::

    config.json      resolved effective config (canonical dump)
    metrics.jsonl    one record per training iteration
    stage{1,2,3}.ckpt  checkpoint after each stage that ran
    final.ckpt       parameters at the end of the run
    summary.json     evaluations at each stage boundary
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig, dump_config
from .embedding import EmbedderConfig
from .environment import Episode, EpisodeSpec, brute_force_label, generate_episode
from .errors import IoFailure
from .library import SubActionLibrary, load_library_path, sample_library
from .policy import (
    PolicyParams,
    PolicySpace,
    featurize,
    greedy_trace,
    oracle_choice,
    render_choice,
    sample_trace,
    save_checkpoint,
    text_only_observation,
)
from .rewards import RewardBreakdown, RewardScorer
from .trace import make_trace, render_trace
from .tgrpo import Prompt, StepMetrics, supervised_grad, tgrpo_step

METRIC_FIELDS = ("stage", "iter", "mean_r_total", "mean_r_task", "mean_r_sub", "mean_s_temporal",
                 "mean_r_format", "kl", "clip_fraction", "grad_norm_preclip", "loss")
SUMMARY_VERSION = 1

# spawn keys for independent random streams; shared across ablation variants
_STAGE1, _STAGE2, _STAGE3_PROMPTS, _STAGE3_SAMPLING = (1,), (2,), (3, 0), (3, 1)
_EVAL_NOISY, _EVAL_CLEAN, _EVAL_SAMPLING = (9, 0), (9, 1), (9, 2)


def derived_rng(seed: int, key: tuple[int, ...]) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass
class RunArtifacts:
    run_dir: Path
    config_path: Path
    metrics_path: Path
    summary_path: Path
    checkpoints: dict[str, Path] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    params: PolicyParams | None = None


def _components(bds: list[RewardBreakdown]) -> dict:
    def mean(attr):
        vals = [getattr(b, attr) for b in bds]
        return math.fsum(vals) / len(vals) if vals else None

    return {
        "mean_r_total": mean("r_total"),
        "mean_r_task": mean("r_task"),
        "mean_r_sub": mean("r_sub"),
        "mean_s_temporal": mean("s_temporal"),
        "mean_r_format": mean("r_format"),
    }


def make_prompts(lib: SubActionLibrary, space: PolicySpace, spec: EpisodeSpec, n: int,
                 rng: np.random.Generator) -> list[Prompt]:
    prompts = []
    for _ in range(n):
        ep = generate_episode(lib, spec, rng)
        prompts.append(Prompt(ep, featurize(ep.video, space)))
    return prompts


def evaluate(params: PolicyParams, space: PolicySpace, prompts: list[Prompt], scorer: RewardScorer,
             samples: int = 0, sampling_seed: int = 0, records: list | None = None) -> dict:
    """Greedy accuracy and reward means; with ``samples > 0`` also a Monte Carlo
    estimate of the expected reward under the sampling policy.

    The sampling stream is fixed by ``sampling_seed`` so two policies evaluated
    with the same seed see common random numbers.
    """
    greedy, sampled = [], []
    rng = np.random.default_rng(sampling_seed)
    for i, p in enumerate(prompts):
        choice = greedy_trace(params, p.obs)
        text = render_choice(space, choice)
        bd = scorer(text, p.episode.truth)
        greedy.append(bd)
        if records is not None:
            records.append({"episode": i, "label": p.episode.truth.label,
                            "answer": space.labels[choice.answer], **bd.to_dict()})
        for seed in rng.integers(0, 2**63 - 1, size=samples):
            sampled.append(scorer(render_choice(space, sample_trace(params, p.obs, int(seed))),
                                  p.episode.truth))
    out = {
        "episodes": len(prompts),
        "accuracy": (math.fsum(b.r_task for b in greedy) / len(greedy)) if greedy else None,
        "greedy": _components(greedy),
    }
    if samples:
        out["sampled"] = _components(sampled)
    return out


def evaluate_baseline(episodes: list[Episode], lib: SubActionLibrary, scorer: RewardScorer,
                      records: list | None = None) -> dict:
    """Accuracy of the brute-force frame-matching classifier; its trace is the bare answer."""
    bds = []
    for i, ep in enumerate(episodes):
        label = brute_force_label(ep.video, lib, scorer.cfg)
        bd = scorer(render_trace(make_trace([], label)), ep.truth)
        bds.append(bd)
        if records is not None:
            records.append({"episode": i, "label": ep.truth.label, "answer": label, **bd.to_dict()})
    return {
        "episodes": len(episodes),
        "accuracy": (math.fsum(b.r_task for b in bds) / len(bds)) if bds else None,
        "greedy": _components(bds),
    }


class _MetricsWriter:
    def __init__(self, path: Path):
        self.fh = open(path, "w", encoding="utf-8", newline="\n")

    def write(self, record: dict) -> None:
        self.fh.write(json.dumps({k: record[k] for k in METRIC_FIELDS}) + "\n")

    def close(self) -> None:
        self.fh.close()


def _supervised_stage(name: str, params: PolicyParams, lib: SubActionLibrary, space: PolicySpace,
                      cfg: TrainConfig, scorer: RewardScorer, writer: _MetricsWriter,
                      text_only: bool) -> PolicyParams:
    iters = cfg.stage1_iters if text_only else cfg.stage2_iters
    lr = cfg.stage1_lr if text_only else cfg.stage2_lr
    rng = derived_rng(cfg.seed, _STAGE1 if text_only else _STAGE2)
    spec = EpisodeSpec(0.0, 0.0, n_frames=cfg.n_frames) if text_only else \
        EpisodeSpec(cfg.noise_drop, cfg.noise_distract, n_frames=cfg.n_frames)
    blank = text_only_observation(space)
    for it in range(iters):
        batch, truths = [], []
        for _ in range(cfg.batch_size):
            ep = generate_episode(lib, spec, rng)
            obs = blank if text_only else featurize(ep.video, space)
            batch.append((obs, oracle_choice(space, ep, lib)))
            truths.append(ep.truth)
        bds = [scorer(render_choice(space, greedy_trace(params, obs)), t) for (obs, _), t in zip(batch, truths)]
        loss, grad = supervised_grad(params, batch)
        grad_norm = grad.norm()
        params = params.axpy(-lr, grad)
        writer.write({"stage": name, "iter": it, **_components(bds), "kl": None, "clip_fraction": None,
                      "grad_norm_preclip": grad_norm, "loss": loss})
    return params


def _rl_stage(params: PolicyParams, lib: SubActionLibrary, space: PolicySpace, cfg: TrainConfig,
              scorer: RewardScorer, writer: _MetricsWriter) -> PolicyParams:
    ref = params.copy()
    prompt_rng = derived_rng(cfg.seed, _STAGE3_PROMPTS)
    sample_rng = derived_rng(cfg.seed, _STAGE3_SAMPLING)
    spec = EpisodeSpec(cfg.noise_drop, cfg.noise_distract, n_frames=cfg.n_frames)
    for it in range(cfg.stage3_iters):
        prompts = make_prompts(lib, space, spec, cfg.prompts_per_step, prompt_rng)
        params, m, _ = tgrpo_step(params, ref, prompts, space, scorer, cfg, sample_rng)
        writer.write({"stage": "stage3", "iter": it, **_metrics_dict(m)})
    return params


def _metrics_dict(m: StepMetrics) -> dict:
    return {k: getattr(m, k) for k in METRIC_FIELDS[2:]}


def resolve_library(cfg: TrainConfig) -> SubActionLibrary:
    return sample_library() if cfg.library is None else load_library_path(cfg.library)


class EvalSuite:
    """Held-out evaluation episodes for a seed: a noisy set and a zero-noise set."""

    def __init__(self, lib: SubActionLibrary, space: PolicySpace, cfg: TrainConfig):
        self.space, self.cfg = space, cfg
        noisy = EpisodeSpec(cfg.noise_drop, cfg.noise_distract, n_frames=cfg.n_frames)
        clean = EpisodeSpec(0.0, 0.0, n_frames=cfg.n_frames)
        self.noisy = make_prompts(lib, space, noisy, cfg.eval_episodes, derived_rng(cfg.seed, _EVAL_NOISY))
        self.clean = make_prompts(lib, space, clean, cfg.eval_episodes, derived_rng(cfg.seed, _EVAL_CLEAN))
        self.sampling_seed = int(derived_rng(cfg.seed, _EVAL_SAMPLING).integers(2**63 - 1))

    def __call__(self, params: PolicyParams, scorer: RewardScorer) -> dict:
        return {
            "noisy": evaluate(params, self.space, self.noisy, scorer, self.cfg.eval_samples, self.sampling_seed),
            "clean": evaluate(params, self.space, self.clean, scorer, self.cfg.eval_samples, self.sampling_seed),
        }


def train(cfg: TrainConfig, lib: SubActionLibrary | None, out_dir, init_params: PolicyParams | None = None) -> RunArtifacts:
    """Run the enabled curriculum stages in order and write the run artifacts."""
    lib = resolve_library(cfg) if lib is None else lib
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"{out} is not writable")
    except OSError as exc:
        raise IoFailure(f"cannot use run directory {out}: {exc}") from None

    space = PolicySpace.from_library(lib, EmbedderConfig(cfg.embed_dims, cfg.hash_seed), cfg.n_slots, cfg.n_frames)
    scorer = RewardScorer(lib, cfg.sub_params, cfg.eval_weights, space.embedder)
    suite = EvalSuite(lib, space, cfg)
    art = RunArtifacts(out, out / "config.json", out / "metrics.jsonl", out / "summary.json")
    params = PolicyParams.zeros(space) if init_params is None else init_params.copy()

    try:
        art.config_path.write_text(dump_config(cfg), encoding="utf-8")
        evaluations = [{"point": "init", **suite(params, scorer)}]
        stages = []
        writer = _MetricsWriter(art.metrics_path)
        try:
            for name, enabled in (("stage1", not cfg.skip_stage1), ("stage2", not cfg.skip_stage2),
                                  ("stage3", not cfg.skip_stage3)):
                if not enabled:
                    continue
                if name == "stage3":
                    params = _rl_stage(params, lib, space, cfg, scorer, writer)
                else:
                    params = _supervised_stage(name, params, lib, space, cfg, scorer, writer,
                                               text_only=(name == "stage1"))
                stages.append(name)
                ckpt = out / f"{name}.ckpt"
                save_checkpoint(params, space, ckpt)
                art.checkpoints[name] = ckpt
                evaluations.append({"point": name, **suite(params, scorer)})
        finally:
            writer.close()
        final = out / "final.ckpt"
        save_checkpoint(params, space, final)
        art.checkpoints["final"] = final
        summary = {
            "version": SUMMARY_VERSION,
            "seed": cfg.seed,
            "stages": stages,
            "evaluations": evaluations,
            "final": evaluations[-1],
        }
        if "stage3" in stages:
            # the evaluation just before stage 3 is its iteration-0 point
            summary["stage3"] = {"start": evaluations[-2], "end": evaluations[-1]}
        art.summary_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"failed writing run artifacts under {out}: {exc}") from None
    art.summary = summary
    art.params = params
    return art
