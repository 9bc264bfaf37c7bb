"""Prompting agent: scene imagination and three-stage dynamics prompting."""

from __future__ import annotations

import logging
import re
import warnings
from dataclasses import dataclass, field

from .backends import (
    DRAGON_TEMPLE,
    Agent,
    AgentTransportError,
    FixtureEntity,
    HttpAgent,
    MockAgent,
    RecordingAgent,
    ReplayAgent,
    SceneFixture,
)
from .parse import (
    AgentFormatWarning,
    AgentParseError,
    missing_stages,
    parse_agent_response,
    join_entities,
    parse_scene_line,
    split_entities,
    split_fields,
)
from .templates import (
    DEFAULT_DYNAMICS_PROMPT,
    FLYOVER_PROMPT,
    cot_instruction,
    imagine_instruction,
)

log = logging.getLogger(__name__)

__all__ = [
    "Agent", "AgentFormatWarning", "AgentParseError", "AgentTranscript", "AgentTransportError",
    "DEFAULT_DYNAMICS_PROMPT", "DRAGON_TEMPLE", "Entity", "EntityList", "FLYOVER_PROMPT",
    "FixtureEntity", "HttpAgent", "MockAgent", "RecordingAgent", "ReplayAgent", "SceneFixture",
    "ScenePrompt", "imagine_entities", "parse_agent_response", "parse_entities", "run_cot",
]

_LEVEL_NAMES = ("low", "medium", "high")


@dataclass(frozen=True)
class Entity:
    name: str
    visual_significance: str = "low"
    motion_possibility: str = "low"
    motion_description: str = ""

    def __post_init__(self):
        for v in (self.visual_significance, self.motion_possibility):
            if v not in _LEVEL_NAMES:
                raise ValueError(f"level must be one of {_LEVEL_NAMES}, got {v!r}")

    @property
    def score(self) -> int:
        return _LEVEL_NAMES.index(self.visual_significance) + _LEVEL_NAMES.index(self.motion_possibility)


@dataclass(frozen=True)
class EntityList:
    entities: tuple = ()

    def __len__(self) -> int:
        return len(self.entities)

    def __iter__(self):
        return iter(self.entities)

    def names(self) -> list[str]:
        return [e.name for e in self.entities]

    def ranked(self) -> "EntityList":
        """Stable sort by combined significance and motion, highest first."""
        return EntityList(tuple(sorted(self.entities, key=lambda e: -e.score)))


@dataclass(frozen=True)
class ScenePrompt:
    scene_name: str
    description: str

    @property
    def entities(self) -> list[str]:
        return split_entities(self.description)

    def text(self) -> str:
        return f"{self.scene_name}: {self.description}"

    def to_dict(self) -> dict:
        return {"scene_name": self.scene_name, "description": self.description}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenePrompt":
        return cls(d["scene_name"], d["description"])


@dataclass(frozen=True)
class AgentTranscript:
    think_log: str
    dynamic_prompt: str
    raw_exchanges: tuple = ()  # ((request_messages, response_text), ...)
    warnings: tuple = ()
    entities: EntityList = field(default_factory=EntityList)

    def to_dict(self) -> dict:
        return {
            "think_log": self.think_log,
            "dynamic_prompt": self.dynamic_prompt,
            "raw_exchanges": [{"request": list(req), "response": resp} for req, resp in self.raw_exchanges],
            "warnings": list(self.warnings),
            "entities": [vars(e).copy() for e in self.entities],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentTranscript":
        return cls(
            d["think_log"],
            d["dynamic_prompt"],
            tuple((tuple(x["request"]), x["response"]) for x in d.get("raw_exchanges", [])),
            tuple(d.get("warnings", [])),
            EntityList(tuple(Entity(**e) for e in d.get("entities", []))),
        )


_DESCRIBED = re.compile(
    r"(?:^|\s)\d+\.\s*(?P<body>[^()]*?)\s*\(\s*Visual Significance:\s*(?P<sig>low|medium|high)\s*,"
    r"\s*Motion Possibility:\s*(?P<mot>low|medium|high)\s*\)",
    re.IGNORECASE,
)


def parse_entities(think_log: str) -> EntityList:
    """Entities described in the second stage of a think log, in the order given."""
    low = think_log.lower()
    start = low.find("second stage")
    stop = low.find("third stage", start + 1 if start >= 0 else 0)
    section = think_log[start if start >= 0 else 0: stop if stop >= 0 else len(think_log)]
    out = []
    for m in _DESCRIBED.finditer(section):
        body = m.group("body").strip()
        words = re.split(r"\s+(?:is|are)\s+", body, maxsplit=1)
        out.append(Entity(words[0].strip(), m.group("sig").lower(), m.group("mot").lower(), body))
    return EntityList(tuple(out))


def _call(agent, messages, image_ref, max_retries: int) -> str:
    for attempt in range(max_retries + 1):
        try:
            return agent.complete(messages, image_ref)
        except AgentTransportError:
            if attempt == max_retries:
                raise
            log.warning("agent call failed (attempt %d of %d), retrying", attempt + 1, max_retries + 1)
    raise AssertionError("unreachable")


def imagine_entities(agent, current_entities, k: int = 10, *, max_retries: int = 2) -> ScenePrompt:
    """Ask the agent to imagine ``k`` dynamic entities for the scene around ``current_entities``.

    The reply is truncated to ``k`` entities; a reply with fewer is accepted
    with an ``AgentFormatWarning``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    messages = [{"role": "user", "content": imagine_instruction(list(current_entities), k)}]
    raw = _call(agent, messages, None, max_retries)
    name, desc = parse_scene_line(raw)
    phrases = split_entities(desc)
    if not phrases:
        raise AgentParseError("scene description lists no entities", raw)
    if len(phrases) > k:
        desc = join_entities(phrases[:k])
    elif len(phrases) < k:
        warnings.warn(f"agent named {len(phrases)} entities, expected {k}", AgentFormatWarning, stacklevel=2)
    return ScenePrompt(name, desc)


def run_cot(
    agent,
    image_ref,
    scene_prompt: ScenePrompt,
    *,
    strict: bool = False,
    max_retries: int = 2,
) -> AgentTranscript:
    """Run the identify / describe / write-prompt protocol in one exchange.

    A reply whose identified objects are all outside ``scene_prompt`` is
    accepted as is.  Missing stage text is tolerated with a warning unless
    ``strict``; a missing dynamics field always raises ``AgentParseError``.
    """
    if not scene_prompt.scene_name or not scene_prompt.description:
        raise ValueError("scene prompt needs a name and a description")
    messages = [{"role": "user", "content": cot_instruction(scene_prompt.scene_name, scene_prompt.description)}]
    raw = _call(agent, messages, image_ref, max_retries)
    think, dyn = split_fields(raw)
    if not dyn:
        raise AgentParseError("reply has no Dynamical Description", raw)
    notes = []
    if think is None:
        think = ""
        notes.append("missing Think Log")
    gaps = missing_stages(think)
    if gaps:
        if strict:
            raise AgentParseError(f"think log lacks {', '.join(gaps)}", raw)
        notes.append("think log lacks " + ", ".join(gaps))
    for n in notes:
        warnings.warn(n, AgentFormatWarning, stacklevel=2)
    exchange = (tuple(dict(m) for m in messages), raw)
    return AgentTranscript(think, dyn, (exchange,), tuple(notes), parse_entities(think))
