import copy
import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from subaction_rl.errors import InvariantViolation, MalformedFile, UnknownAction
from subaction_rl.library import (
    dump_library,
    library_from_dict,
    library_stats,
    library_to_dict,
    load_library,
    phases_of,
    sample_library,
)


def test_jump_file_loads(jump_doc):
    lib = load_library(json.dumps(jump_doc))
    assert lib.action_names == ["jump"]
    assert [p.id for p in phases_of(lib, "jump")] == ["preparation", "loading", "propulsion", "flight"]
    assert "knee flexion" in lib.action("jump").phase("preparation").descriptions
    assert "explosive extension" in lib.action("jump").phase("propulsion").descriptions
    assert all(p.threshold == 0.75 for p in lib.action("jump").phases)


def test_zero_actions_rejected():
    with pytest.raises(InvariantViolation):
        library_from_dict({"version": 1, "actions": []})


def test_duplicate_order_names_phase(jump_doc):
    jump_doc["actions"][0]["phases"][1]["order"] = 0
    with pytest.raises(InvariantViolation) as exc:
        library_from_dict(jump_doc)
    msg = str(exc.value)
    assert "loading" in msg and "jump" in msg
    assert exc.value.location == "$.actions[0].phases[1].order"


def test_duplicate_phase_id(jump_doc):
    jump_doc["actions"][0]["phases"][2]["id"] = "loading"
    with pytest.raises(InvariantViolation, match="duplicate phase id 'loading'"):
        library_from_dict(jump_doc)


def test_unknown_field_rejected(jump_doc):
    jump_doc["actions"][0]["colour"] = "red"
    with pytest.raises(InvariantViolation, match="colour"):
        library_from_dict(jump_doc)


def test_bad_json_is_malformed():
    with pytest.raises(MalformedFile) as exc:
        load_library(b'{"version": 1,')
    assert "line 1" in str(exc.value)


def test_descriptions_lowercased(jump_doc):
    jump_doc["actions"][0]["phases"][0]["descriptions"][0] = "Knee FLEXION"
    lib = library_from_dict(jump_doc)
    assert lib.action("jump").phase("preparation").descriptions[0] == "knee flexion"


def test_stats_jump_only(jump_lib):
    assert library_stats(jump_lib) == {"n_actions": 1, "n_phases": 4, "n_descriptions": 16}


def test_stats_two_actions(lib):
    doc = library_to_dict(lib)
    doc["actions"] = [a for a in doc["actions"] if a["name"] in ("jump", "golf_swing")]
    stats = library_stats(library_from_dict(doc))
    assert stats["n_actions"] == 2 and stats["n_phases"] == 8


def test_stats_order_invariant(lib):
    doc = library_to_dict(lib)
    rev = dict(doc, actions=doc["actions"][::-1])
    assert library_stats(library_from_dict(rev)) == library_stats(lib)
    assert library_from_dict(rev) == lib


def test_sample_library_shape(lib):
    assert library_stats(lib) == {"n_actions": 10, "n_phases": 40, "n_descriptions": 160}


def test_phases_of_cases(jump_lib):
    with pytest.raises(UnknownAction):
        phases_of(jump_lib, "curtsy")
    doc = {"version": 1, "actions": [{"name": "nod", "phases": [{"id": "dip", "order": 0, "descriptions": ["head dip"]}]}]}
    assert [p.id for p in phases_of(library_from_dict(doc), "nod")] == ["dip"]


def test_phases_sorted_by_order():
    doc = {"version": 1, "actions": [{"name": "a", "phases": [
        {"id": "x", "order": 1, "descriptions": ["one"]},
        {"id": "y", "order": 5, "descriptions": ["two"]}]}]}
    assert [p.order for p in phases_of(library_from_dict(doc), "a")] == [1, 5]


def test_dump_is_canonical(lib):
    text = dump_library(lib)
    assert dump_library(load_library(text)) == text
    assert load_library(text) == lib


# --- property tests -------------------------------------------------------

_word = st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=8)
_ident = st.from_regex(r"[a-z][a-z0-9_]{0,7}", fullmatch=True)


@st.composite
def libraries(draw):
    names = draw(st.lists(_ident, min_size=1, max_size=4, unique=True))
    actions = []
    for name in names:
        ids = draw(st.lists(_ident, min_size=1, max_size=5, unique=True))
        orders = sorted(draw(st.lists(st.integers(0, 50), min_size=len(ids), max_size=len(ids), unique=True)))
        phases = []
        for pid, order in zip(ids, orders):
            descs = draw(st.lists(st.lists(_word, min_size=1, max_size=3).map(" ".join), min_size=1, max_size=4))
            ph = {"id": pid, "order": order, "descriptions": descs}
            if draw(st.booleans()):
                ph["threshold"] = draw(st.floats(0.05, 1.0))
            phases.append(ph)
        a = {"name": name, "phases": phases}
        if draw(st.booleans()):
            a["source"] = draw(_word)
        actions.append(a)
    return {"version": 1, "actions": actions}


@settings(max_examples=150, deadline=None)
@given(libraries())
def test_roundtrip_byte_identical(doc):
    lib = library_from_dict(doc)
    text = dump_library(lib)
    again = load_library(text.encode("utf-8"))
    assert again == lib
    assert dump_library(again) == text


@settings(max_examples=50, deadline=None)
@given(libraries(), st.randoms(use_true_random=False))
def test_roundtrip_independent_of_action_order(doc, rnd):
    shuffled = dict(doc, actions=rnd.sample(doc["actions"], len(doc["actions"])))
    assert library_from_dict(shuffled) == library_from_dict(doc)


def _mutate(doc, rnd):
    """Apply one random structural mutation somewhere in the document."""
    doc = copy.deepcopy(doc)
    a = rnd.choice(doc["actions"])
    ph = rnd.choice(a["phases"])
    kind = rnd.randrange(10)
    if kind == 0:
        ph["order"] = rnd.choice([-1, "1", 1.5, None, ph["order"]])
    elif kind == 1:
        ph["id"] = rnd.choice(["", "has space", 3, a["phases"][0]["id"]])
    elif kind == 2:
        ph["descriptions"] = rnd.choice([[], "text", [""], [7], ["ok"]])
    elif kind == 3:
        ph["threshold"] = rnd.choice([0, -0.5, 1.5, "high", True, 0.5])
    elif kind == 4:
        ph[rnd.choice(["extra", "Order"])] = 1
    elif kind == 5:
        del ph[rnd.choice(["id", "order", "descriptions"])]
    elif kind == 6:
        a["phases"] = rnd.choice([[], {}, None])
    elif kind == 7:
        doc["version"] = rnd.choice([0, 2, "1", None])
    elif kind == 8:
        a["name"] = rnd.choice(["", "a b", doc["actions"][0]["name"], None])
    else:
        rnd.shuffle(a["phases"])
    return doc


def _check_invariants(lib):
    for name, action in lib.actions.items():
        assert name == action.action_name
        ids = [p.id for p in action.phases]
        orders = [p.order for p in action.phases]
        assert len(set(ids)) == len(ids) and len(set(orders)) == len(orders)
        assert orders == sorted(orders)
        for p in action.phases:
            assert p.descriptions and all(d == d.lower() and d.strip() for d in p.descriptions)
            assert 0 < p.threshold <= 1


@settings(max_examples=300, deadline=None)
@given(libraries(), st.integers(0, 2**32 - 1))
def test_fuzz_mutations_load_or_locate(doc, seed):
    mutated = _mutate(doc, random.Random(seed))
    try:
        lib = library_from_dict(mutated)
    except InvariantViolation as exc:
        assert exc.location and exc.location.startswith("$")
    else:
        _check_invariants(lib)


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=64))
def test_arbitrary_bytes_never_crash(raw):
    try:
        load_library(raw)
    except (InvariantViolation, MalformedFile) as exc:
        assert exc.location


def test_sample_library_validates_against_schema(lib):
    jsonschema = pytest.importorskip("jsonschema")
    from importlib import resources
    schema = json.loads(resources.files("subaction_rl").joinpath("schemas/library.schema.json").read_text())
    jsonschema.validate(json.loads(dump_library(sample_library())), schema)
