"""Chat-completion transport: an HTTP client and the offline oracle backend."""
from __future__ import annotations

import json
import logging
import os
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import requests

from . import oracle

log = logging.getLogger(__name__)

TOP_LOGPROBS = 20
RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


class EndpointError(RuntimeError):
    """The endpoint could not produce a usable response."""


class LogprobsUnsupported(EndpointError):
    """The endpoint answered without token log-probabilities."""


class FailureBudgetExceeded(EndpointError):
    """Too many cells failed while building a score matrix."""


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "http://localhost:8000/v1"
    auth_token_env: str = "ISSUEREL_API_KEY"
    model_name: str = "default"
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 60.0
    backoff: float = 0.5
    oracle: bool = False

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass
class Completion:
    text: str
    top_logprobs: Optional[list[tuple[str, float]]] = None  # first generated token only


class HttpBackend:
    """OpenAI-compatible ``/chat/completions`` client with retry and backoff."""

    def __init__(self, config: EndpointConfig, session: Optional[requests.Session] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self.sleep = sleep
        self._jitter = random.Random()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_token_env, "") if self.config.auth_token_env else ""
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, messages: list[dict], *, logprobs: bool = False,
                 max_tokens: Optional[int] = None, meta: Optional[dict] = None) -> Completion:
        cfg = self.config
        payload = {"model": cfg.model_name, "messages": messages, "temperature": cfg.temperature}
        if logprobs:
            payload.update(logprobs=True, top_logprobs=TOP_LOGPROBS)
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        last = ""
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                delay = cfg.backoff * 2 ** (attempt - 1)
                self.sleep(delay + self._jitter.uniform(0, delay))
            try:
                resp = self.session.post(url, json=payload, headers=self._headers(), timeout=cfg.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("request to %s failed (attempt %d): %s", url, attempt + 1, last)
                continue
            if resp.status_code in RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                log.warning("request to %s returned %s (attempt %d)", url, last, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise EndpointError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
            try:
                return _parse_completion(resp.json(), logprobs)
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                if isinstance(exc, LogprobsUnsupported):
                    raise
                raise EndpointError(f"malformed response from {url}: {exc}") from None
        raise EndpointError(f"{url} failed after {cfg.max_retries + 1} attempts ({last})")


def _parse_completion(data: dict, want_logprobs: bool) -> Completion:
    choice = data["choices"][0]
    text = (choice.get("message") or {}).get("content") or ""
    if not want_logprobs:
        return Completion(text)
    content = (choice.get("logprobs") or {}).get("content")
    if not content:
        raise LogprobsUnsupported(
            "the endpoint returned no token log-probabilities; "
            "use --oracle or an endpoint that supports logprobs")
    first = content[0]
    tops = first.get("top_logprobs") or [{"token": first["token"], "logprob": first["logprob"]}]
    return Completion(text, [(str(t["token"]), float(t["logprob"])) for t in tops])


@dataclass
class OracleBackend:
    """Deterministic stand-in answering from the structured request metadata."""

    calls: dict = field(default_factory=dict)

    def complete(self, messages: list[dict], *, logprobs: bool = False,
                 max_tokens: Optional[int] = None, meta: Optional[dict] = None) -> Completion:
        if not meta or "task" not in meta:
            raise EndpointError("the oracle backend needs request metadata")
        task = meta["task"]
        self.calls[task] = self.calls.get(task, 0) + 1
        if task == "questions":
            qs = oracle.questions(meta["issue"], meta["k"])
            return Completion("\n".join(f"{i + 1}. {q}" for i, q in enumerate(qs)))
        if task == "verify":
            yes = oracle.answer(meta["facts"], meta["issue"], meta["question"])
            tops = oracle.verifier_logprobs(yes)
            return Completion(tops[0][0], tops if logprobs else None)
        if task == "issues":
            return Completion(json.dumps(oracle.issues(meta["facts"])))
        if task == "judge":
            return Completion("Relevant" if oracle.judge(meta["facts"], meta["issue"]) else "Irrelevant")
        raise EndpointError(f"oracle cannot answer task {task!r}")


def make_backend(endpoint):
    """Accept an ``EndpointConfig`` or anything with a ``complete`` method."""
    if isinstance(endpoint, EndpointConfig):
        return OracleBackend() if endpoint.oracle else HttpBackend(endpoint)
    if hasattr(endpoint, "complete"):
        return endpoint
    raise TypeError(f"not an endpoint: {endpoint!r}")
