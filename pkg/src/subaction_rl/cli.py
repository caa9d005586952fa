"""Command-line entry point.

Exit codes: 0 success, 1 IO failure, 2 validation failure, 3 bad config.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from .config import load_config
from .embedding import EmbedderConfig
from .detection import detect
from .environment import EpisodeSpec, generate_episode, oracle_trace
from .errors import InvariantViolation, IoFailure, MalformedFile, SubActionError
from .library import library_stats, load_library_path, sample_library
from .policy import load_checkpoint
from .rewards import RewardScorer, SubRewardParams, TotalRewardWeights, score_trace
from .runner import METRIC_FIELDS, derived_rng, evaluate, evaluate_baseline, make_prompts, train
from .temporal import GroundTruthAnnotation
from .trace import parse_trace, render_trace

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_CONFIG = 0, 1, 2, 3
REPORT_COLUMNS = ("run", "stage", "iterations", *METRIC_FIELDS[2:], "delta_mean_r_total")


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise MalformedFile(f"{path} is not UTF-8 text", "$") from None


def _read_json(path):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: {exc.msg} at line {exc.lineno}", "$") from None


def _library(path):
    return sample_library() if path is None else load_library_path(path)


def _emit(doc) -> None:
    print(json.dumps(doc, indent=2))


def cmd_validate_lib(args) -> int:
    lib = load_library_path(args.path)
    _emit({"valid": True, **library_stats(lib)})
    return EXIT_OK


def cmd_score(args) -> int:
    lib = _library(args.lib)
    lib.action(args.truth)
    windows = {}
    if args.windows is not None:
        windows = GroundTruthAnnotation.from_dict({"label": args.truth, "phase_windows": _read_json(args.windows)}).phase_windows
    truth = GroundTruthAnnotation(args.truth, windows)
    defaults = TotalRewardWeights()
    weights = TotalRewardWeights(
        defaults.lambda1 if args.lambda1 is None else args.lambda1,
        defaults.lambda2 if args.lambda2 is None else args.lambda2,
        defaults.lambda3 if args.lambda3 is None else args.lambda3,
    )
    params = SubRewardParams(args.alpha, args.beta, args.gamma)
    cfg = EmbedderConfig(args.dims, args.hash_seed)
    scored = score_trace(parse_trace(_read_text(args.trace)), truth, lib, params, weights, cfg)
    _emit({**scored.breakdown.to_dict(), **scored.detections.to_dict()})
    return EXIT_OK


def cmd_detect(args) -> int:
    lib = _library(args.lib)
    result = detect(parse_trace(_read_text(args.trace)), lib, args.action, EmbedderConfig(args.dims, args.hash_seed))
    _emit(result.to_dict())
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    art = train(cfg, None, args.out)
    final = art.summary["final"]
    noisy = final["noisy"]
    mean = noisy.get("sampled", noisy["greedy"])["mean_r_total"]
    print(f"run={art.run_dir} stages={','.join(art.summary['stages']) or 'none'} "
          f"eval_accuracy={_fmt(noisy['accuracy'])} eval_mean_r_total={_fmt(mean)}")
    return EXIT_OK


def _fmt(v) -> str:
    return "nan" if v is None else f"{v:.4f}"


def cmd_eval(args) -> int:
    lib = _library(args.lib)
    spec = EpisodeSpec(args.noise_drop, args.noise_distract, n_frames=args.n_frames)
    records: list = []
    if args.baseline == "brute-force":
        rng = derived_rng(args.seed, (9, 0))
        episodes = [generate_episode(lib, spec, rng) for _ in range(args.episodes)]
        summary = evaluate_baseline(episodes, lib, RewardScorer(lib), records)
        summary["policy"] = "brute-force"
    else:
        if args.checkpoint is None:
            raise IoFailure("a checkpoint is required unless --baseline is given")
        params, space = load_checkpoint(args.checkpoint)
        if list(space.labels) != lib.action_names:
            raise InvariantViolation("checkpoint labels do not match the library's actions", "$.space.labels")
        spec = EpisodeSpec(args.noise_drop, args.noise_distract, n_frames=space.n_frames)
        prompts = make_prompts(lib, space, spec, args.episodes, derived_rng(args.seed, (9, 0)))
        summary = evaluate(params, space, prompts, RewardScorer(lib, cfg=space.embedder), records=records)
        summary["policy"] = "checkpoint"
    summary["seed"] = args.seed
    if args.records is not None:
        try:
            with open(args.records, "w", encoding="utf-8", newline="\n") as fh:
                for rec in records:
                    fh.write(json.dumps(rec) + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot write {args.records}: {exc.strerror}") from None
    _emit(summary)
    return EXIT_OK


def read_metrics(path) -> list[dict]:
    """Parse a metrics stream; a bad record raises with its 1-based line number."""
    records = []
    for lineno, line in enumerate(_read_text(path).splitlines(), 1):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            raise MalformedFile(f"{path}: corrupt record at line {lineno}", f"line {lineno}") from None
        if not isinstance(rec, dict) or set(rec) != set(METRIC_FIELDS):
            raise MalformedFile(f"{path}: corrupt record at line {lineno}", f"line {lineno}")
        records.append(rec)
    return records


def stage_finals(records: list[dict]) -> dict[str, tuple[int, dict]]:
    """Iteration count and last record of each stage, in first-seen order."""
    out: dict = {}
    for rec in records:
        n = out.get(rec["stage"], (0, None))[0]
        out[rec["stage"]] = (n + 1, rec)
    return out


def report_rows(run_dir, against=None) -> list[dict]:
    finals = stage_finals(read_metrics(Path(run_dir) / "metrics.jsonl"))
    other = stage_finals(read_metrics(Path(against) / "metrics.jsonl")) if against is not None else {}
    rows = []
    for stage, (n, rec) in finals.items():
        row = {"run": str(run_dir), "stage": stage, "iterations": n,
               **{k: rec[k] for k in METRIC_FIELDS[2:]}, "delta_mean_r_total": None}
        if stage in other:
            row["delta_mean_r_total"] = rec["mean_r_total"] - other[stage][1]["mean_r_total"]
        rows.append(row)
    return rows


def render_report(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in rows:
        w.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                    for c in REPORT_COLUMNS])
    return buf.getvalue()


def cmd_report(args) -> int:
    sys.stdout.write(render_report(report_rows(args.run_dir, args.against)))
    return EXIT_OK


def cmd_gen_episode(args) -> int:
    lib = _library(args.lib)
    spec = EpisodeSpec(args.noise_drop, args.noise_distract, n_frames=args.n_frames)
    ep = generate_episode(lib, spec, derived_rng(args.seed, (7,)))
    doc = ep.to_dict()
    if args.oracle:
        doc["oracle_trace"] = render_trace(oracle_trace(ep, lib))
    _emit(doc)
    return EXIT_OK


def _finite(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"{s} is not a finite number")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subaction-rl", description="Sub-action reward shaping toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate-lib", help="validate a sub-action library file")
    s.add_argument("path")
    s.set_defaults(func=cmd_validate_lib)

    def embed_flags(s):
        s.add_argument("--dims", type=int, default=384)
        s.add_argument("--hash-seed", type=int, default=0)

    s = sub.add_parser("score", help="score a trace file against a ground-truth label")
    s.add_argument("--lib", help="library file (default: bundled sample library)")
    s.add_argument("--trace", required=True)
    s.add_argument("--truth", required=True, help="ground-truth action label")
    s.add_argument("--windows", help='JSON object {"phase_id": [start, end], ...}')
    for name in ("lambda1", "lambda2", "lambda3"):
        s.add_argument(f"--{name}", type=_finite)
    s.add_argument("--alpha", type=_finite, default=0.6)
    s.add_argument("--beta", type=_finite, default=0.2)
    s.add_argument("--gamma", type=_finite, default=0.2)
    embed_flags(s)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("detect", help="list sub-action detections in a trace file")
    s.add_argument("--lib")
    s.add_argument("--trace", required=True)
    s.add_argument("--action", help="restrict detection to one action")
    embed_flags(s)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("train", help="run the training curriculum")
    s.add_argument("config")
    s.add_argument("out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint with greedy decoding")
    s.add_argument("checkpoint", nargs="?")
    s.add_argument("--lib")
    s.add_argument("--episodes", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-drop", type=float, default=0.0)
    s.add_argument("--noise-distract", type=float, default=0.0)
    s.add_argument("--n-frames", type=int, default=16, help="frames per episode for --baseline")
    s.add_argument("--baseline", choices=["brute-force"])
    s.add_argument("--records", help="write per-episode records (JSON lines) here")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="tabulate per-stage final metrics of a run as CSV")
    s.add_argument("run_dir")
    s.add_argument("--against", help="second run; adds the mean_r_total delta per stage")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("gen-episode", help="print one synthetic episode as JSON")
    s.add_argument("--lib")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-drop", type=float, default=0.0)
    s.add_argument("--noise-distract", type=float, default=0.0)
    s.add_argument("--n-frames", type=int, default=16)
    s.add_argument("--oracle", action="store_true", help="include the oracle trace")
    s.set_defaults(func=cmd_gen_episode)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "episodes", 0) < 0:
        print("error: --episodes must be >= 0", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except SubActionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
