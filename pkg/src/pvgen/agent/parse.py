"""Tolerant parsing of agent replies."""

from __future__ import annotations

import ast
import json
import re
import warnings

THINK_LABEL = "Think Log"
DYNAMIC_LABEL = "Dynamical Description"

# quote styles seen in replies: straight, typographic, backtick, doubled-backtick
_QUOTES = "'\"`‘’“”´"
_EDGE = _QUOTES + " \t\r\n,{}"
_STAGES = (("first stage", "identify"), ("second stage", "describe"), ("third stage", "write prompt"))


class AgentParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class AgentFormatWarning(UserWarning):
    pass


def _label_re(label: str) -> re.Pattern:
    # the label, quotes or markdown emphasis around it, and the colon
    around = r"[" + re.escape(_QUOTES + "*") + r"]*"
    return re.compile(around + re.escape(label) + around + r"\s*:", re.IGNORECASE)


def _from_mapping(raw: str):
    text = raw.strip()
    for loader in (json.loads, ast.literal_eval):
        try:
            obj = loader(text)
        except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError):
            continue
        if isinstance(obj, dict):
            lowered = {str(k).strip().lower(): v for k, v in obj.items()}
            think = lowered.get(THINK_LABEL.lower())
            dyn = lowered.get(DYNAMIC_LABEL.lower())
            if think is not None or dyn is not None:
                return (None if think is None else str(think).strip(), None if dyn is None else str(dyn).strip())
    return None


def split_fields(raw: str):
    """Return ``(think_log | None, dynamic_prompt | None)`` without raising."""
    mapped = _from_mapping(raw)
    if mapped is not None:
        return mapped
    think_m = _label_re(THINK_LABEL).search(raw)
    dyn_m = _label_re(DYNAMIC_LABEL).search(raw)
    think = dyn = None
    if dyn_m is not None:
        dyn = raw[dyn_m.end():].strip(_EDGE)
    if think_m is not None:
        stop = dyn_m.start() if dyn_m is not None and dyn_m.start() > think_m.end() else len(raw)
        think = raw[think_m.end():stop].strip(_EDGE)
    return think, dyn


def parse_agent_response(raw: str) -> tuple[str, str]:
    """Extract ``(think_log, dynamic_prompt)`` from an agent reply.

    A missing think log yields ``""`` and an ``AgentFormatWarning``; a reply
    with neither field raises ``AgentParseError``.
    """
    think, dyn = split_fields(raw)
    if think is None and dyn is None:
        raise AgentParseError("reply has neither a Think Log nor a Dynamical Description", raw)
    if think is None:
        warnings.warn("reply has no Think Log field", AgentFormatWarning, stacklevel=2)
        think = ""
    if dyn is None:
        warnings.warn("reply has no Dynamical Description field", AgentFormatWarning, stacklevel=2)
        dyn = ""
    return think, dyn


def missing_stages(think_log: str) -> list[str]:
    low = think_log.lower()
    return [name for name, _ in _STAGES if name not in low]


def parse_scene_line(raw: str) -> tuple[str, str]:
    """Split a ``'SceneName: description'`` reply."""
    for line in raw.strip().splitlines():
        line = line.strip().strip(_QUOTES).strip()
        if ":" not in line:
            continue
        name, desc = line.split(":", 1)
        name, desc = name.strip().strip(_QUOTES + "*#").strip(), desc.strip().strip(_QUOTES).strip()
        if name and desc:
            return name, desc
    raise AgentParseError("expected a 'SceneName: description' line", raw)


def split_entities(description: str) -> list[str]:
    """Entity phrases of a comma list such as ``'A, b, and c.'``."""
    text = description.strip().rstrip(".").strip()
    if not text:
        return []
    parts = [p.strip() for p in text.split(",")]
    if len(parts) == 1 and " and " in parts[0]:
        parts = parts[0].split(" and ", 1)
    out = []
    for p in parts:
        p = re.sub(r"^(and|&)\s+", "", p.strip(), flags=re.IGNORECASE).strip()
        if p:
            out.append(p)
    return out


def join_entities(phrases) -> str:
    phrases = list(phrases)
    if not phrases:
        return ""
    first = phrases[0][:1].upper() + phrases[0][1:]
    items = [first] + phrases[1:]
    if len(items) == 1:
        body = items[0]
    elif len(items) == 2:
        body = f"{items[0]} and {items[1]}"
    else:
        body = ", ".join(items[:-1]) + ", and " + items[-1]
    return body + "."
