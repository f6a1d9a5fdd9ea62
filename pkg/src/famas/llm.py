"""Minimal chat-completion HTTP client with retry, used by extractor and judge.

Wire contract: POST a JSON body {"model", "messages", "temperature": 0} to
<base_url><endpoint_path>; authentication is a bearer token read from the
FAMAS_LLM_TOKEN environment variable.  The transport is injectable so tests
can run fully offline.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import requests

TOKEN_ENV = "FAMAS_LLM_TOKEN"

RETRY_WAITS = (1.0, 2.0, 4.0)  # seconds before each retry


class LlmTransportError(Exception):
    """Request failed after all retries (network, HTTP, or malformed body)."""


class Transport(Protocol):
    def __call__(self, url: str, headers: dict, payload: dict, timeout: float) -> tuple[int, str]:
        """Return (status_code, response_body)."""


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float) -> tuple[int, str]:
    response = requests.post(url, headers=headers, json=payload, timeout=timeout)
    return response.status_code, response.text


@dataclass
class LlmSettings:
    base_url: str = "http://localhost:8000/v1"
    model: str = "qwen2.5-72b-instruct"
    endpoint_path: str = "/chat/completions"
    timeout: float = 120.0
    token_env: str = TOKEN_ENV

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + self.endpoint_path


@dataclass
class ChatCompletionClient:
    settings: LlmSettings = field(default_factory=LlmSettings)
    transport: Transport = _requests_transport
    sleep: Callable[[float], None] = time.sleep

    def complete(self, messages: list[dict]) -> str:
        """Run one temperature-0 completion, retrying transient failures."""
        payload = {
            "model": self.settings.model,
            "messages": messages,
            "temperature": 0,
        }
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.settings.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"

        last_error: Exception | None = None
        for attempt in range(1 + len(RETRY_WAITS)):
            if attempt > 0:
                self.sleep(RETRY_WAITS[attempt - 1])
            try:
                status, body = self.transport(self.settings.url, headers, payload, self.settings.timeout)
            except Exception as exc:  # noqa: BLE001 - transport errors become retries
                last_error = exc
                continue
            if status != 200:
                last_error = LlmTransportError(f"HTTP {status} from {self.settings.url}")
                continue
            try:
                document = json.loads(body)
                return document["choices"][0]["message"]["content"]
            except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                last_error = LlmTransportError(f"malformed completion body: {exc}")
                continue
        raise LlmTransportError(f"completion failed after {1 + len(RETRY_WAITS)} attempts: {last_error}")
