"""LLM providers: remote chat client, scripted mock, transcript recording and replay."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import httpx

logger = logging.getLogger(__name__)

_TAG_RE = re.compile(r"^### task: (\S+)", re.MULTILINE)


class LlmError(Exception):
    pass


class LlmTransportError(LlmError):
    pass


class MockScriptError(LlmError):
    """The scripted mock received a prompt it has no matching entry for."""


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    max_tokens: int = 512


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


def prompt_tag(prompt: str) -> str | None:
    m = _TAG_RE.search(prompt)
    return m.group(1) if m else None


class LlmProvider(ABC):
    name = "llm"

    @abstractmethod
    def complete(self, prompt: str, decoding: Decoding = Decoding()) -> Completion:
        ...

    def send(self, prompt: str, decoding: Decoding = Decoding()) -> str:
        return self.complete(prompt, decoding).text


class ChatProvider(LlmProvider):
    """OpenAI-compatible chat endpoint: POST ``{base_url}/chat/completions``."""

    def __init__(
        self,
        base_url: str,
        model: str,
        timeout: float = 60.0,
        retries: int = 2,
        backoff: float = 1.0,
        api_key: str | None = None,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.name = f"chat:{model}"
        self.retries = retries
        self.backoff = backoff
        self.api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY")
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, prompt: str, decoding: Decoding = Decoding()) -> Completion:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": decoding.temperature,
            "max_tokens": decoding.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff)
            try:
                resp = self._client.post(f"{self.base_url}/chat/completions", json=payload, headers=headers)
                resp.raise_for_status()
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
            except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
                last_exc = exc
                logger.warning("chat attempt %d failed: %s", attempt + 1, exc)
                continue
            usage = body.get("usage") or {}
            return Completion(text or "", usage.get("prompt_tokens"), usage.get("completion_tokens"))
        raise LlmTransportError(f"chat request failed after {self.retries + 1} attempts: {last_exc}")


@dataclass(frozen=True)
class MockEntry:
    """``match`` is a prompt substring, or ``@name`` to match a prompt's task tag.

    Optional entries are skipped when the next prompt does not match them.
    """

    match: str
    response: str
    optional: bool = False

    def matches(self, prompt: str) -> bool:
        if self.match.startswith("@"):
            return prompt_tag(prompt) == self.match[1:]
        return self.match in prompt


class MockProvider(LlmProvider):
    """Consumes a script in order. Each instance owns its cursor."""

    name = "mock"

    def __init__(self, entries: Iterable[MockEntry]):
        self.entries = tuple(entries)
        self.cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def from_jsonl(cls, path) -> "MockProvider":
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    entries.append(MockEntry(obj["match"], obj["response"], bool(obj.get("optional", False))))
                except (ValueError, KeyError, TypeError) as exc:
                    raise MockScriptError(f"{path}: line {line_no}: {exc}") from exc
        return cls(entries)

    @classmethod
    def of(cls, *pairs: tuple[str, str]) -> "MockProvider":
        return cls(MockEntry(m, r) for m, r in pairs)

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.entries)

    def complete(self, prompt: str, decoding: Decoding = Decoding()) -> Completion:
        with self._lock:
            pos = self.cursor
            while pos < len(self.entries):
                entry = self.entries[pos]
                if entry.matches(prompt):
                    self.cursor = pos + 1
                    return Completion(entry.response)
                if not entry.optional:
                    break
                pos += 1
            tag = prompt_tag(prompt)
            if pos >= len(self.entries):
                raise MockScriptError(f"mock script exhausted at prompt tagged {tag!r}")
            raise MockScriptError(
                f"mock entry {pos} expects {self.entries[pos].match!r} but prompt is tagged {tag!r}"
            )


@dataclass
class TranscriptRecord:
    seq: int
    tag: str | None
    prompt: str
    completion: str
    latency_s: float
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


class Transcript:
    """Append-only log of provider calls for one run."""

    def __init__(self, records: Sequence[TranscriptRecord] = ()):
        self.records: list[TranscriptRecord] = list(records)
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.records)

    def append(self, prompt: str, completion: Completion, latency: float) -> TranscriptRecord:
        with self._lock:
            rec = TranscriptRecord(
                len(self.records), prompt_tag(prompt), prompt, completion.text, latency,
                completion.prompt_tokens, completion.completion_tokens,
            )
            self.records.append(rec)
            return rec

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "Transcript":
        records = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    records.append(TranscriptRecord(**json.loads(line)))
        return cls(records)


class ReplayProvider(LlmProvider):
    """Replays a transcript; every prompt must equal the recorded one."""

    name = "replay"

    def __init__(self, transcript: Transcript):
        self._records = list(transcript.records)
        self._pos = 0

    def complete(self, prompt: str, decoding: Decoding = Decoding()) -> Completion:
        if self._pos >= len(self._records):
            raise MockScriptError("replay transcript exhausted")
        rec = self._records[self._pos]
        if rec.prompt != prompt:
            raise MockScriptError(f"replay divergence at call {self._pos} (tag {rec.tag!r})")
        self._pos += 1
        return Completion(rec.completion, rec.prompt_tokens, rec.completion_tokens)
