"""Agent backends: rule-based mock, chat-completion HTTP client, fixture replay."""

from __future__ import annotations

import base64
import json
import logging
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

from ..imageio import png_bytes
from .parse import join_entities, split_entities
from .templates import COT_MARKER, IMAGINE_MARKER

log = logging.getLogger(__name__)

ENV_ENDPOINT = "PVGEN_AGENT_ENDPOINT"
ENV_API_KEY = "PVGEN_AGENT_API_KEY"
ENV_MODEL = "PVGEN_AGENT_MODEL"


class AgentTransportError(RuntimeError):
    """Retriable failure talking to an agent backend."""


@runtime_checkable
class Agent(Protocol):
    def complete(self, messages: list[dict], image_ref=None) -> str: ...


# --------------------------------------------------------------------------
# mock
# --------------------------------------------------------------------------

LEVELS = {"low": 1, "medium": 2, "high": 3}


@dataclass(frozen=True)
class FixtureEntity:
    name: str  # how the entity is named when identified, e.g. "Dragon wings"
    phrase: str  # imagined-scene phrase, e.g. "dragon wings fluttering"
    visible: bool = False
    significance: str = "low"
    motion: str = "low"
    observation: str = ""
    subject: str = ""
    verb: str = "moves"
    plural: bool = False

    def sentence(self) -> str:
        subject = self.subject or self.name.lower()
        return f"The {subject} {self.verb}."

    @property
    def score(self) -> int:
        return LEVELS[self.significance.lower()] + LEVELS[self.motion.lower()]


@dataclass(frozen=True)
class SceneFixture:
    scene_name: str
    entities: tuple = field(default_factory=tuple)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneFixture":
        return cls(d["scene_name"], tuple(FixtureEntity(**e) for e in d["entities"]))

    @classmethod
    def load(cls, path) -> "SceneFixture":
        return cls.from_dict(json.loads(Path(path).read_text()))


DRAGON_TEMPLE = SceneFixture(
    "Dragon Temple Garden",
    (
        FixtureEntity(
            "Dragon wings", "dragon wings fluttering", True, "high", "high",
            "Dragon wings are spread and take a reasonable portion of the image. "
            "The wings seem ready to flap any moment.",
            "dragon's wings", "flap", plural=True,
        ),
        FixtureEntity("Sakura petals", "sakura petals dropping", plural=True),
        FixtureEntity(
            "Incense smoke", "incense smoke swirling", True, "low", "high",
            "Incense smoke is located in the background and takes a small portion of the image. "
            "The smoke seems to be wafting upwards.",
            "smoke", "wafts",
        ),
        FixtureEntity("Lion statue's eyes", "lion statue's eyes blinking", plural=True),
        FixtureEntity("Flag", "flag rustling in the wind"),
        FixtureEntity("Koi fish", "koi fish swimming in the pond"),
        FixtureEntity("Lotus flower", "lotus flower opening"),
        FixtureEntity("Owl", "owl hooting on the temple"),
        FixtureEntity("Beads on prayer wheels", "beads on prayer wheels turning", plural=True),
        FixtureEntity(
            "Paper lanterns", "paper lanterns swaying gently", True, "medium", "medium",
            "Paper lanterns are scattered throughout the scene and take a noticeable portion "
            "of the image. They seem to be gently swinging or floating.",
            "lanterns", "swing", plural=True,
        ),
    ),
)

_FILLER = (
    "clouds drifting overhead", "leaves trembling", "birds circling", "grass swaying",
    "water rippling", "butterflies fluttering", "dust motes floating", "shadows shifting",
)


class MockAgent:
    """Deterministic offline agent driven by a ``SceneFixture``.

    It answers the two instruction templates by rule: imagined entities come
    from the fixture (current entities first), identification is substring
    matching against the fixture's visible entities, and the final prompt
    concatenates one sentence per identified entity.
    """

    def __init__(self, fixture: SceneFixture = DRAGON_TEMPLE):
        self.fixture = fixture

    def complete(self, messages, image_ref=None) -> str:
        text = "\n".join(m["content"] for m in messages if m.get("role") == "user")
        if IMAGINE_MARKER in text:
            return self._imagine(text)
        if COT_MARKER in text:
            return self._cot(text)
        return "I can only answer scene imagination and dynamics prompting requests."

    def _imagine(self, text: str) -> str:
        m = re.search(r"for the (\d+) main entities", text)
        k = int(m.group(1)) if m else 10
        cur = re.search(r"Current entities:\s*(.*)", text)
        current = [] if cur is None else [c.strip().lower() for c in cur.group(1).split(",") if c.strip()]
        ents = list(self.fixture.entities)
        ents.sort(key=lambda e: not any(c and c in e.phrase.lower() for c in current))
        phrases = [e.phrase for e in ents]
        i = 0
        while len(phrases) < k:
            phrases.append(_FILLER[i % len(_FILLER)] + ("" if i < len(_FILLER) else f" ({i // len(_FILLER) + 1})"))
            i += 1
        return f"{self.fixture.scene_name}: {join_entities(phrases[:k])}"

    def _match(self, phrase: str):
        low = phrase.lower()
        for e in self.fixture.entities:
            if e.name.lower() in low or e.phrase.lower() in low:
                return e
        return None

    def _cot(self, text: str) -> str:
        m = re.search(r"Possible dynamic objects:\s*(.*)", text)
        phrases = split_entities(m.group(1)) if m else []
        first, found = [], []
        for i, phrase in enumerate(phrases, 1):
            e = self._match(phrase)
            name = e.name if e else phrase[:1].upper() + phrase[1:]
            verb = "are" if e and e.plural else "is"
            if e is not None and e.visible:
                first.append(f"{i}. {name} {verb} identified in the given image.")
                found.append(e)
            else:
                first.append(f"{i}. {name} {verb} not identified in the given image.")
        if not found:
            found = [e for e in self.fixture.entities if e.visible]
            names = ", ".join(e.name for e in found)
            first.append(f"None of the listed objects is identified; identified by myself: {names}.")
        second = []
        for i, e in enumerate(found, 1):
            obs = e.observation or f"{e.name} {'are' if e.plural else 'is'} visible in the image."
            second.append(
                f"{i}. {obs} (Visual Significance: {e.significance.capitalize()}, "
                f"Motion Possibility: {e.motion.capitalize()})."
            )
        ranked = sorted(found, key=lambda e: -e.score)
        prompt = " ".join(e.sentence() for e in ranked)
        think = (
            "First stage: " + " ".join(first)
            + " Second Stage: " + " ".join(second)
            + f" Third stage: The visual summary for dynamical description is '{prompt}'."
        )
        return f"'Think Log': '{think}', 'Dynamical Description': '{prompt}'"


# --------------------------------------------------------------------------
# HTTP chat backend
# --------------------------------------------------------------------------


def encode_image_ref(image_ref) -> str | None:
    """Data URL for an image given as PNG bytes, a file path, or an HxWxC float array in [0, 1]."""
    if image_ref is None:
        return None
    if isinstance(image_ref, (bytes, bytearray)):
        data = bytes(image_ref)
    elif isinstance(image_ref, (str, Path)):
        data = Path(image_ref).read_bytes()
    else:
        data = png_bytes(image_ref)
    return "data:image/png;base64," + base64.b64encode(data).decode("ascii")


class HttpAgent:
    """Chat-completion client: POST ``{model, messages}``, read ``choices[0].message.content``."""

    def __init__(
        self,
        endpoint: str | None = None,
        model: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        supports_vision: bool = True,
    ):
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT)
        if not self.endpoint:
            raise ValueError(f"no agent endpoint configured (set {ENV_ENDPOINT} or pass endpoint)")
        self.model = model or os.environ.get(ENV_MODEL, "gpt-4")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY)
        self.timeout = timeout
        self.supports_vision = supports_vision

    def build_body(self, messages, image_ref=None) -> dict:
        msgs = [{"role": m["role"], "content": m["content"]} for m in messages]
        url = encode_image_ref(image_ref) if image_ref is not None else None
        if url is not None and not self.supports_vision:
            log.warning("backend has no vision support; image omitted from the request")
            url = None
        if url is not None:
            for m in reversed(msgs):
                if m["role"] == "user":
                    m["content"] = [
                        {"type": "text", "text": m["content"]},
                        {"type": "image_url", "image_url": {"url": url}},
                    ]
                    break
        return {"model": self.model, "messages": msgs}

    def complete(self, messages, image_ref=None) -> str:
        body = json.dumps(self.build_body(messages, image_ref)).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            if exc.code >= 500 or exc.code == 429:
                raise AgentTransportError(f"agent endpoint returned HTTP {exc.code}") from exc
            raise
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            raise AgentTransportError(f"agent endpoint unreachable: {exc}") from exc
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise AgentTransportError("malformed chat-completion response") from exc


# --------------------------------------------------------------------------
# fixture replay / recording
# --------------------------------------------------------------------------


def read_fixture(path) -> list[dict]:
    """Load line-delimited JSON ``{"request": {"messages": [...]}, "response": "..."}`` records."""
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        if "response" not in rec:
            raise ValueError(f"{path}:{n}: record has no 'response'")
        out.append(rec)
    return out


def append_fixture(path, messages, response: str) -> None:
    rec = {"request": {"messages": list(messages)}, "response": response}
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


class ReplayAgent:
    """Answers from recorded exchanges: exact request match first, else the next unused record."""

    def __init__(self, path):
        self.records = read_fixture(path)
        self._next = 0

    def complete(self, messages, image_ref=None) -> str:
        want = [{"role": m["role"], "content": m["content"]} for m in messages]
        for rec in self.records:
            if rec.get("request", {}).get("messages") == want:
                return rec["response"]
        if self._next >= len(self.records):
            raise AgentTransportError("replay fixture exhausted")
        rec = self.records[self._next]
        self._next += 1
        return rec["response"]


class RecordingAgent:
    def __init__(self, inner: Agent, path):
        self.inner = inner
        self.path = path

    def complete(self, messages, image_ref=None) -> str:
        reply = self.inner.complete(messages, image_ref)
        append_fixture(self.path, messages, reply)
        return reply
