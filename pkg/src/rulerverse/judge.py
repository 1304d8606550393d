"""Chat-completion client: live HTTP backend, scripted mock, on-disk cache.

This is the only module that performs network I/O.  Responses are cached by a
stable hash of (model_id, temperature, system_text, user_text); cache entries
store the full request next to the response so a run can be audited later, and
nothing is ever evicted automatically.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import requests

from .errors import CorpusFormatError, EmptyCompletion, MockScriptMiss, TransportExhausted

log = logging.getLogger(__name__)

BACKENDS = ("live", "mock")


@dataclass(frozen=True)
class JudgeRequest:
    system_text: str
    user_text: str
    # None defers to the config temperature; the config itself may be None,
    # which means "let the backend use its own default".
    temperature: float | None = None


@dataclass(frozen=True)
class JudgeResponse:
    text: str
    cached: bool
    backend_id: str
    latency: float


@dataclass
class JudgeConfig:
    backend: str = "mock"
    model_id: str = "mock-judge"
    endpoint: str = ""
    api_key_env: str = "JUDGE_API_KEY"
    script_path: Path | str | None = None
    temperature: float | None = 0.0
    max_retries: int = 3
    timeout: float = 60.0
    cache_dir: Path | str | None = None
    concurrency_limit: int = 4

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def cache_key(model_id: str, temperature: float | None, system_text: str, user_text: str) -> str:
    """Stable hash identifying a completion; temperature is always part of it."""
    payload = json.dumps(
        {
            "model": model_id,
            "temperature": "default" if temperature is None else repr(float(temperature)),
            "system": system_text,
            "user": user_text,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def prompt_hash(system_text: str, user_text: str) -> str:
    """Model-independent hash used by mock script "hash" rules."""
    return hashlib.sha256(f"{system_text}\n\n{user_text}".encode("utf-8")).hexdigest()


class MockScript:
    """Ordered pattern rules mapping prompts to canned responses.

    Script file shape:
        {"rules": [{"contains": "...", "regex": "...", "hash": "...",
                    "response": "..."}, ...],
         "default": "..."}

    A rule matches when every condition it carries holds ("contains" may be a
    list, all substrings required).  Rules are tried in order; the optional
    default answers anything unmatched.
    """

    def __init__(self, rules: list[dict], default: str | None = None):
        for i, rule in enumerate(rules):
            if "response" not in rule:
                raise CorpusFormatError(f"mock rule {i}: missing response")
            if not any(k in rule for k in ("contains", "regex", "hash")):
                raise CorpusFormatError(f"mock rule {i}: needs contains, regex, or hash")
        self.rules = rules
        self.default = default

    @classmethod
    def load(cls, path: Path | str) -> "MockScript":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(rules=data.get("rules", []), default=data.get("default"))

    def respond(self, system_text: str, user_text: str) -> str:
        combined = f"{system_text}\n\n{user_text}"
        for rule in self.rules:
            if "contains" in rule:
                needles = rule["contains"]
                if isinstance(needles, str):
                    needles = [needles]
                if not all(n in combined for n in needles):
                    continue
            if "regex" in rule and not re.search(rule["regex"], combined):
                continue
            if "hash" in rule and rule["hash"] != prompt_hash(system_text, user_text):
                continue
            return rule["response"]
        if self.default is not None:
            return self.default
        raise MockScriptMiss(
            f"no mock rule matches prompt (hash {prompt_hash(system_text, user_text)[:16]}...)"
        )


@dataclass
class JudgeStats:
    backend_calls: int = 0
    cache_hits: int = 0


class Judge:
    """Thread-safe completion client; share one instance across workers."""

    def __init__(self, config: JudgeConfig):
        self.config = config
        self._stats = JudgeStats()
        self._lock = threading.Lock()
        self._sem = threading.Semaphore(config.concurrency_limit)
        self._script: MockScript | None = None
        if config.backend == "mock":
            if config.script_path is None:
                raise ValueError("mock backend requires script_path")
            self._script = MockScript.load(config.script_path)
        if config.cache_dir is not None:
            Path(config.cache_dir).mkdir(parents=True, exist_ok=True)

    # Shared mutable state (counters, semaphore, script) is carried over so a
    # derived judge still reports into the same run statistics.
    def with_temperature(self, temperature: float | None) -> "Judge":
        clone = object.__new__(type(self))
        clone.config = replace(self.config, temperature=temperature)
        clone._stats = self._stats
        clone._lock = self._lock
        clone._sem = self._sem
        clone._script = self._script
        return clone

    @property
    def stats(self) -> dict[str, int]:
        with self._lock:
            return {"backend_calls": self._stats.backend_calls, "cache_hits": self._stats.cache_hits}

    def complete(self, request: JudgeRequest) -> JudgeResponse:
        temperature = (
            request.temperature if request.temperature is not None else self.config.temperature
        )
        key = cache_key(self.config.model_id, temperature, request.system_text, request.user_text)

        cached_text = self._cache_read(key)
        if cached_text is not None:
            with self._lock:
                self._stats.cache_hits += 1
            return JudgeResponse(
                text=cached_text, cached=True, backend_id=self.config.model_id, latency=0.0
            )

        start = time.monotonic()
        with self._sem:
            if self._script is not None:
                text = self._script.respond(request.system_text, request.user_text)
            else:
                text = self._live_complete(request.system_text, request.user_text, temperature)
        latency = time.monotonic() - start
        with self._lock:
            self._stats.backend_calls += 1
        if not text.strip():
            raise EmptyCompletion("backend returned an empty completion")

        self._cache_write(key, request, temperature, text)
        return JudgeResponse(
            text=text, cached=False, backend_id=self.config.model_id, latency=latency
        )

    # -- cache --

    def _cache_path(self, key: str) -> Path | None:
        if self.config.cache_dir is None:
            return None
        return Path(self.config.cache_dir) / f"{key}.json"

    def _cache_read(self, key: str) -> str | None:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
            return entry["response"]["text"]
        except (json.JSONDecodeError, KeyError, OSError):
            log.warning("unreadable cache entry %s, treating as miss", path.name)
            return None

    def _cache_write(self, key: str, request: JudgeRequest, temperature: float | None, text: str) -> None:
        path = self._cache_path(key)
        if path is None:
            return
        entry = {
            "request": {
                "model_id": self.config.model_id,
                "temperature": temperature,
                "system_text": request.system_text,
                "user_text": request.user_text,
            },
            "response": {"text": text},
        }
        # write-temp-then-rename: concurrent writers of the same key are
        # benign because the value is identical
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(entry, f, ensure_ascii=False, sort_keys=True)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    # -- live transport --

    def _post(self, payload: dict[str, Any]) -> str:
        """Single HTTP attempt against a chat-completions endpoint."""
        api_key = os.environ.get(self.config.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        resp = requests.post(
            self.config.endpoint, json=payload, headers=headers, timeout=self.config.timeout
        )
        resp.raise_for_status()
        body = resp.json()
        return body["choices"][0]["message"]["content"]

    def _sleep(self, seconds: float) -> None:
        time.sleep(seconds)

    def _live_complete(self, system_text: str, user_text: str, temperature: float | None) -> str:
        payload: dict[str, Any] = {
            "model": self.config.model_id,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
        }
        if temperature is not None:
            payload["temperature"] = temperature
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                return self._post(payload)
            except Exception as exc:
                last_error = exc
                if attempt < self.config.max_retries:
                    delay = 2.0 ** attempt
                    log.warning(
                        "judge attempt %d/%d failed (%r), retrying in %.0fs",
                        attempt + 1, self.config.max_retries + 1, exc, delay,
                    )
                    self._sleep(delay)
        raise TransportExhausted(
            f"gave up after {self.config.max_retries + 1} attempts: {last_error!r}"
        )
