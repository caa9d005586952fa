import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subaction_rl.environment import (
    Episode,
    EpisodeSpec,
    SyntheticVideo,
    brute_force_label,
    generate_episode,
    oracle_trace,
    phase_partition,
)
from subaction_rl.errors import UnknownAction
from subaction_rl.library import library_from_dict, phases_of
from subaction_rl.rewards import score_trace
from subaction_rl.temporal import GroundTruthAnnotation
from subaction_rl.trace import parse_trace, render_trace


def test_zero_noise_frames_hold_exact_descriptions(lib):
    for seed in range(20):
        ep = generate_episode(lib, EpisodeSpec(0.0, 0.0, seed=seed))
        for ph in phases_of(lib, ep.truth.label):
            a, b = ep.truth.phase_windows[ph.id]
            for t in range(a, b):
                assert ep.video.frames[t] == ph.descriptions


def test_full_drop_empties_frames(lib):
    ep = generate_episode(lib, EpisodeSpec(1.0, 0.0, seed=3))
    assert all(f == () for f in ep.video.frames)


def test_fixed_seed_repeats(lib):
    spec = EpisodeSpec(0.2, 1.0, seed=17)
    assert generate_episode(lib, spec) == generate_episode(lib, spec)
    assert generate_episode(lib, spec) != generate_episode(lib, EpisodeSpec(0.2, 1.0, seed=18))


def test_spec_validation():
    with pytest.raises(ValueError):
        EpisodeSpec(1.5, 0.0)
    with pytest.raises(ValueError):
        EpisodeSpec(0.0, -1.0)
    with pytest.raises(ValueError):
        SyntheticVideo(())


def test_labels_uniform(lib):
    rng = np.random.default_rng(0)
    n = 4000
    counts = {}
    for _ in range(n):
        ep = generate_episode(lib, EpisodeSpec(1.0, 0.0), rng)
        counts[ep.truth.label] = counts.get(ep.truth.label, 0) + 1
    sigma = np.sqrt(n * 0.1 * 0.9)
    assert set(counts) == set(lib.action_names)
    assert all(abs(c - n * 0.1) < 4 * sigma for c in counts.values())


def test_distractors_come_from_other_actions(lib):
    ep = generate_episode(lib, EpisodeSpec(0.0, 3.0, seed=9))
    own = {d for p in phases_of(lib, ep.truth.label) for d in p.descriptions}
    others = {d for a in lib.action_names if a != ep.truth.label for p in phases_of(lib, a) for d in p.descriptions}
    extra = [d for f in ep.video.frames for d in f if d not in own]
    assert extra and all(d in others for d in extra)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 3), st.integers(4, 40))
def test_windows_partition_the_video(lib, seed, drop, distract, n_frames):
    ep = generate_episode(lib, EpisodeSpec(drop, distract, seed=seed, n_frames=n_frames))
    wins = [ep.truth.phase_windows[p.id] for p in phases_of(lib, ep.truth.label)]
    assert wins[0][0] == 0 and wins[-1][1] == n_frames
    for (a, b), (c, d) in zip(wins, wins[1:]):
        assert b == c and a < b
    assert ep.video.n_frames == n_frames


def test_phase_partition():
    assert phase_partition(16, 4) == [(0, 4), (4, 8), (8, 12), (12, 16)]
    assert phase_partition(10, 3) == [(0, 3), (3, 6), (6, 10)]
    with pytest.raises(ValueError):
        phase_partition(2, 3)


def test_oracle_trace_scores(lib):
    for seed in range(10):
        ep = generate_episode(lib, EpisodeSpec(0.0, 0.0, seed=seed))
        tr = oracle_trace(ep, lib)
        assert parse_trace(render_trace(tr)) == tr
        bd = score_trace(tr, ep.truth, lib).breakdown
        assert bd.r_task == 1.0 and bd.r_format == 1.0
        assert abs(bd.r_sub - 0.8) < 1e-12
        assert bd.s_seq == bd.s_cross == bd.s_bind == 1.0
        assert abs(bd.r_total - 1.54) < 1e-12
        assert all(s.entities == ("subject",) for s in tr.steps)


def test_oracle_trace_single_phase():
    lib = library_from_dict({"version": 1, "actions": [
        {"name": "nod", "phases": [{"id": "dip", "order": 0, "descriptions": ["head dip"]}]}]})
    ep = generate_episode(lib, EpisodeSpec(seed=1))
    tr = oracle_trace(ep, lib)
    assert len(tr.steps) == 1 and tr.steps[0].frame_window == (0, 16)


def test_oracle_trace_unknown_label(lib):
    ep = Episode(SyntheticVideo(((),)), GroundTruthAnnotation("moonwalk", {}))
    with pytest.raises(UnknownAction):
        oracle_trace(ep, lib)


def test_brute_force_zero_noise(lib):
    rng = np.random.default_rng(100)
    hits = sum(brute_force_label(ep.video, lib) == ep.truth.label
               for ep in (generate_episode(lib, EpisodeSpec(), rng) for _ in range(100)))
    assert hits == 100


def test_brute_force_all_scores_exhaustive(lib):
    """Cross-check the winning label against an exhaustive per-action score table."""
    from subaction_rl.embedding import cosine, embed
    ep = generate_episode(lib, EpisodeSpec(0.3, 1.0, seed=21))
    table = {}
    for name in lib.action_names:
        descs = [d for p in lib.action(name).phases for d in p.descriptions]
        table[name] = sum(max(cosine(embed(" ".join(f)), embed(d)) for d in descs) for f in ep.video.frames)
    best = max(table.values())
    assert brute_force_label(ep.video, lib) == min(n for n, v in table.items() if v == best)


def test_brute_force_empty_frames(lib):
    assert brute_force_label(SyntheticVideo(((),) * 4), lib) == "chop"


def test_brute_force_golf_only(lib):
    words = [d for p in lib.action("golf_swing").phases for d in p.descriptions]
    video = SyntheticVideo(tuple((w,) for w in words))
    assert brute_force_label(video, lib) == "golf_swing"


def test_episode_dict_roundtrip(lib):
    ep = generate_episode(lib, EpisodeSpec(0.2, 1.0, seed=6))
    assert Episode.from_dict(ep.to_dict()) == ep


def test_episode_schema(lib):
    import json
    from importlib import resources
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads(resources.files("subaction_rl").joinpath("schemas/episode.schema.json").read_text())
    jsonschema.validate(generate_episode(lib, EpisodeSpec(0.2, 1.0, seed=6)).to_dict(), schema)
