"""Chat-completion style HTTP client used as a knowledge-base backend."""
from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass

import httpx

from .base import KbBackend


class KbConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LlmClientConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4"
    api_key_env: str = "SEMLAB_LLM_API_KEY"
    timeout_s: float = 30.0
    max_retries: int = 2
    retry_backoff_s: float = 0.5
    max_in_flight: int = 4
    model_field: str = "model"
    messages_field: str = "messages"
    response_path: str = "choices.0.message.content"
    require_api_key: bool = True

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise KbConfigError("timeout must be positive")
        if self.max_retries < 0:
            raise KbConfigError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise KbConfigError("max_in_flight must be >= 1")

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env) if self.api_key_env else None


def extract_path(obj, path: str):
    for part in path.split("."):
        obj = obj[int(part)] if isinstance(obj, list) else obj[part]
    return obj


def _set_path(body: dict, path: str, value) -> None:
    *parents, leaf = path.split(".")
    for part in parents:
        body = body.setdefault(part, {})
    body[leaf] = value


class LlmKb(KbBackend):
    backend_id = "llm"

    def __init__(self, config: LlmClientConfig, client: httpx.Client | None = None, **kw):
        super().__init__(**kw)
        self.config = config
        key = config.api_key()
        if config.require_api_key and not key:
            raise KbConfigError(f"environment variable {config.api_key_env} is not set")
        self._headers = {"Content-Type": "application/json"}
        if key:
            self._headers["Authorization"] = f"Bearer {key}"
        self._client = client or httpx.Client(timeout=config.timeout_s)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self.backend_id = f"llm:{config.model}"

    def complete(self, prompt: str) -> str:
        cfg = self.config
        body: dict = {}
        _set_path(body, cfg.model_field, cfg.model)
        _set_path(body, cfg.messages_field, [{"role": "user", "content": prompt}])
        last_exc: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.retry_backoff_s * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._client.post(cfg.endpoint, json=body, headers=self._headers,
                                             timeout=cfg.timeout_s)
                resp.raise_for_status()
                text = extract_path(resp.json(), cfg.response_path)
                if not isinstance(text, str):
                    raise TypeError(f"response field {cfg.response_path} is not text")
                return text.strip()
            except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
                last_exc = exc
        raise RuntimeError(f"LLM call failed after {cfg.max_retries + 1} attempts") from last_exc

    def _run(self, op, prompt, text, flags, **kw):
        return self.complete(prompt)

    def close(self):
        self._client.close()
