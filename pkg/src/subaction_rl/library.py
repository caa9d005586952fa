"""Sub-action libraries: actions decomposed into ordered phases.

A library file is a UTF-8 JSON document::

    {"version": 1,
     "actions": [{"name": "jump",
                  "source": "optional free-text provenance note",
                  "phases": [{"id": "preparation", "order": 0,
                              "descriptions": ["knee flexion", ...],
                              "threshold": 0.75}, ...]}]}

Parsing is strict: unknown fields are rejected and every invariant failure
names the JSON path where it happened.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import IO, Iterable

from .errors import InvariantViolation, IoFailure, MalformedFile, UnknownAction

DEFAULT_THRESHOLD = 0.75
LIBRARY_VERSION = 1

_IDENT = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.\-]*$")
_LIB_KEYS = {"version", "actions"}
_ACTION_KEYS = {"name", "phases", "source"}
_PHASE_KEYS = {"id", "order", "descriptions", "threshold"}


@dataclass(frozen=True)
class SubActionPhase:
    id: str
    order: int
    descriptions: tuple[str, ...]
    threshold: float = DEFAULT_THRESHOLD


@dataclass(frozen=True)
class ActionDecomposition:
    action_name: str
    phases: tuple[SubActionPhase, ...]
    source: str | None = None

    def phase(self, phase_id: str) -> SubActionPhase:
        for p in self.phases:
            if p.id == phase_id:
                return p
        raise KeyError(phase_id)


@dataclass(frozen=True)
class SubActionLibrary:
    version: int
    actions: dict[str, ActionDecomposition] = field(default_factory=dict)

    def __hash__(self) -> int:
        # identity hash: libraries are immutable after load and used as cache keys
        return id(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SubActionLibrary):
            return NotImplemented
        return self.version == other.version and self.actions == other.actions

    @property
    def action_names(self) -> list[str]:
        """Action names in sorted order; the canonical label ordering."""
        return sorted(self.actions)

    def action(self, name: str) -> ActionDecomposition:
        try:
            return self.actions[name]
        except KeyError:
            raise UnknownAction(name) from None


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_keys(obj, allowed: set[str], required: Iterable[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise InvariantViolation(f"expected an object, got {type(obj).__name__}", where)
    for key in obj:
        if key not in allowed:
            raise InvariantViolation(f"unknown field {key!r}", where)
    for key in required:
        if key not in obj:
            raise InvariantViolation(f"missing required field {key!r}", where)


def _ident(value, where: str) -> str:
    if not isinstance(value, str) or not _IDENT.match(value):
        raise InvariantViolation(f"not a valid identifier: {value!r}", where)
    return value


def _parse_phase(obj, where: str) -> SubActionPhase:
    _check_keys(obj, _PHASE_KEYS, ("id", "order", "descriptions"), where)
    pid = _ident(obj["id"], f"{where}.id")
    order = obj["order"]
    if not _is_int(order) or order < 0:
        raise InvariantViolation(f"order must be a non-negative integer, got {order!r}", f"{where}.order")
    descs = obj["descriptions"]
    if not isinstance(descs, list) or not descs:
        raise InvariantViolation("descriptions must be a non-empty list", f"{where}.descriptions")
    normalized = []
    for i, d in enumerate(descs):
        if not isinstance(d, str) or not d.strip():
            raise InvariantViolation(f"empty or non-string description {d!r}", f"{where}.descriptions[{i}]")
        normalized.append(d.lower())
    threshold = obj.get("threshold", DEFAULT_THRESHOLD)
    if not _is_number(threshold) or not (0.0 < threshold <= 1.0):
        raise InvariantViolation(f"threshold must lie in (0, 1], got {threshold!r}", f"{where}.threshold")
    return SubActionPhase(pid, order, tuple(normalized), float(threshold))


def _parse_action(obj, where: str) -> ActionDecomposition:
    _check_keys(obj, _ACTION_KEYS, ("name", "phases"), where)
    name = _ident(obj["name"], f"{where}.name")
    source = obj.get("source")
    if source is not None and not isinstance(source, str):
        raise InvariantViolation("source must be a string", f"{where}.source")
    raw_phases = obj["phases"]
    if not isinstance(raw_phases, list) or not raw_phases:
        raise InvariantViolation("phases must be a non-empty list", f"{where}.phases")
    phases: list[SubActionPhase] = []
    seen_ids: dict[str, int] = {}
    seen_orders: dict[int, int] = {}
    for i, raw in enumerate(raw_phases):
        pw = f"{where}.phases[{i}]"
        phase = _parse_phase(raw, pw)
        if phase.id in seen_ids:
            raise InvariantViolation(
                f"duplicate phase id {phase.id!r} in action {name!r} (first at phases[{seen_ids[phase.id]}])",
                f"{pw}.id",
            )
        if phase.order in seen_orders:
            raise InvariantViolation(
                f"duplicate phase order {phase.order} in action {name!r}: phase {phase.id!r} "
                f"repeats the order of phases[{seen_orders[phase.order]}]",
                f"{pw}.order",
            )
        if phases and phase.order < phases[-1].order:
            raise InvariantViolation(
                f"phase orders must increase in file order in action {name!r}: "
                f"{phase.id!r} has order {phase.order} after {phases[-1].order}",
                f"{pw}.order",
            )
        seen_ids[phase.id] = i
        seen_orders[phase.order] = i
        phases.append(phase)
    return ActionDecomposition(name, tuple(phases), source)


def library_from_dict(doc) -> SubActionLibrary:
    _check_keys(doc, _LIB_KEYS, ("version", "actions"), "$")
    version = doc["version"]
    if not _is_int(version) or version != LIBRARY_VERSION:
        raise InvariantViolation(f"unsupported library version {version!r}", "$.version")
    raw_actions = doc["actions"]
    if not isinstance(raw_actions, list) or not raw_actions:
        raise InvariantViolation("library must contain at least one action", "$.actions")
    actions: dict[str, ActionDecomposition] = {}
    for i, raw in enumerate(raw_actions):
        action = _parse_action(raw, f"$.actions[{i}]")
        if action.action_name in actions:
            raise InvariantViolation(f"duplicate action name {action.action_name!r}", f"$.actions[{i}].name")
        actions[action.action_name] = action
    return SubActionLibrary(version, actions)


def load_library(source: IO | bytes | str) -> SubActionLibrary:
    """Parse a library from a byte/text stream or an in-memory document."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFile(f"not valid UTF-8: {exc.reason}", f"byte {exc.start}") from None
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise MalformedFile(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return library_from_dict(doc)


def load_library_path(path) -> SubActionLibrary:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read library {path}: {exc.strerror}") from None
    return load_library(raw)


def sample_library() -> SubActionLibrary:
    """The bundled 10-action library."""
    data = resources.files(__package__).joinpath("data/sample_library.json").read_bytes()
    return load_library(data)


def library_to_dict(lib: SubActionLibrary) -> dict:
    actions = []
    for action in lib.actions.values():
        entry: dict = {"name": action.action_name}
        if action.source is not None:
            entry["source"] = action.source
        entry["phases"] = [
            {"id": p.id, "order": p.order, "descriptions": list(p.descriptions), "threshold": p.threshold}
            for p in action.phases
        ]
        actions.append(entry)
    return {"version": lib.version, "actions": actions}


def dump_library(lib: SubActionLibrary) -> str:
    """Canonical serialization; ``load_library(dump_library(lib)) == lib``."""
    return json.dumps(library_to_dict(lib), indent=2, ensure_ascii=False) + "\n"


def library_stats(lib: SubActionLibrary) -> dict[str, int]:
    n_phases = sum(len(a.phases) for a in lib.actions.values())
    n_desc = sum(len(p.descriptions) for a in lib.actions.values() for p in a.phases)
    return {"n_actions": len(lib.actions), "n_phases": n_phases, "n_descriptions": n_desc}


def phases_of(lib: SubActionLibrary, action: str) -> list[SubActionPhase]:
    return sorted(lib.action(action).phases, key=lambda p: p.order)
