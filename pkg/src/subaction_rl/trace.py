"""Reasoning-trace grammar, parser, and canonical emitter.

Grammar::

    <think>
    [frames A-B] @subject free text ...
    more text without a frame marker
    </think>
    <answer>label</answer>

A trace is well formed when it holds exactly one ``<think>...</think>`` block
followed by exactly one ``<answer>...</answer>`` block, with only whitespace
outside them. Steps are the non-empty lines of the think block. A leading
``[frames A-B]`` marker (inclusive frame numbers, A <= B) becomes the
half-open window ``[A, B+1)``; ``@name`` tokens are entity mentions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

THINK_OPEN, THINK_CLOSE = "<think>", "</think>"
ANSWER_OPEN, ANSWER_CLOSE = "<answer>", "</answer>"

_MARKER = re.compile(r"^\[frames\s+(\d+)\s*-\s*(\d+)\]\s*")
_ANY_MARKER = re.compile(r"\[frames\s+\d+\s*-\s*\d+\]")
_ENTITY = re.compile(r"@(\w+)")
_WS = re.compile(r"\s+")


@dataclass(frozen=True)
class TraceStep:
    index: int
    text: str
    frame_window: tuple[int, int] | None = None
    entities: tuple[str, ...] = ()


@dataclass(frozen=True)
class StructuredTrace:
    steps: tuple[TraceStep, ...]
    answer: str | None
    format_ok: bool


def _block(raw: str, open_tag: str, close_tag: str) -> tuple[str | None, bool]:
    """Content of the first block and whether it was closed."""
    start = raw.find(open_tag)
    if start < 0:
        return None, False
    start += len(open_tag)
    end = raw.find(close_tag, start)
    if end < 0:
        return raw[start:], False
    return raw[start:end], True


def _well_formed(raw: str) -> bool:
    tags = (THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE)
    if any(raw.count(tag) != 1 for tag in tags):
        return False
    pos = [raw.index(tag) for tag in tags]
    if not pos[0] < pos[1] < pos[2] < pos[3]:
        return False
    outside = (
        raw[: pos[0]],
        raw[pos[1] + len(THINK_CLOSE) : pos[2]],
        raw[pos[3] + len(ANSWER_CLOSE) :],
    )
    return all(not chunk.strip() for chunk in outside)


def parse_step(index: int, line: str) -> TraceStep:
    line = line.strip()
    window = None
    m = _MARKER.match(line)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        if a <= b:
            window = (a, b + 1)
            line = line[m.end() :]
    entities: list[str] = []
    for name in _ENTITY.findall(line):
        if name not in entities:
            entities.append(name)
    return TraceStep(index, line.strip(), window, tuple(entities))


def parse_trace(raw: str) -> StructuredTrace:
    """Parse ``raw``; never raises. Malformed input yields ``format_ok=False``."""
    think, _ = _block(raw, THINK_OPEN, THINK_CLOSE)
    steps: list[TraceStep] = []
    if think is not None:
        for line in think.splitlines():
            if line.strip():
                steps.append(parse_step(len(steps), line))
    answer_text, closed = _block(raw, ANSWER_OPEN, ANSWER_CLOSE)
    answer = answer_text.strip() if (answer_text is not None and closed) else None
    return StructuredTrace(tuple(steps), answer or None, _well_formed(raw))


def segment_text(text: str) -> str:
    text = _ANY_MARKER.sub(" ", text)
    text = _ENTITY.sub(" ", text)
    return _WS.sub(" ", text).strip()


def segments(trace: StructuredTrace) -> list[tuple[int, str]]:
    """One detection segment per step, with frame markers and entity mentions removed."""
    return [(s.index, segment_text(s.text)) for s in trace.steps]


def render_step(step: TraceStep) -> str:
    if step.frame_window is None:
        return step.text
    start, end = step.frame_window
    return f"[frames {start}-{end - 1}] {step.text}".rstrip()


def render_trace(trace: StructuredTrace) -> str:
    """Canonical emitter. An absent answer renders as an empty answer block."""
    body = "".join(render_step(s) + "\n" for s in trace.steps)
    return f"{THINK_OPEN}\n{body}{THINK_CLOSE}\n{ANSWER_OPEN}{trace.answer or ''}{ANSWER_CLOSE}\n"


def make_trace(lines: list[tuple[tuple[int, int] | None, str]], answer: str | None) -> StructuredTrace:
    """Build a canonical trace from ``(window, text)`` pairs by round-tripping through the grammar."""
    steps = tuple(
        parse_step(i, render_step(TraceStep(i, text, window))) for i, (window, text) in enumerate(lines)
    )
    return StructuredTrace(steps, answer, True)
