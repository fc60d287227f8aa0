"""Shared knowledge-base plumbing: background records, audit log, disk cache."""
from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..fuzzyctl import PromptDirective
from .templates import render_prompt, template_version


@dataclass(frozen=True)
class Background:
    user_id: str
    facts: tuple[str, ...] = ()

    def render(self) -> str:
        return "\n".join(f"- {f}" for f in self.facts) or "- (none)"


@dataclass
class KbExchange:
    op: str
    prompt: str
    response: str
    latency_ms: float
    backend: str
    pass_through: bool = False
    cached: bool = False
    flags: list[str] = field(default_factory=list)


class DiskCache:
    """Append-only JSONL cache: concurrent readers, one writer at a time."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._data: dict[str, str] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self._data[rec["key"]] = rec["value"]

    @staticmethod
    def key(backend: str, template_id: str, prompt: str) -> str:
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        return f"{backend}|{template_id}|v{template_version()}|{digest}"

    def get(self, key: str) -> str | None:
        return self._data.get(key)

    def put(self, key: str, value: str) -> None:
        with self._lock:
            self._data[key] = value
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "value": value}) + "\n")

    def __contains__(self, key):
        return key in self._data

    def __len__(self):
        return len(self._data)


class KbBackend:
    """Base class. Subclasses implement ``_run(op, prompt, text, **kw)``.

    Every public operation is total: if ``_run`` raises, the input text is
    returned unchanged and the exchange is marked ``pass_through``.
    """

    backend_id = "base"

    def __init__(self, audit_path: str | Path | None = None, cache: DiskCache | None = None):
        self.audit_path = Path(audit_path) if audit_path else None
        self.cache = cache
        self.exchanges: list[KbExchange] = []
        self._audit_lock = threading.Lock()

    @property
    def last(self) -> KbExchange | None:
        return self.exchanges[-1] if self.exchanges else None

    def _record(self, ex: KbExchange) -> None:
        with self._audit_lock:
            self.exchanges.append(ex)
            if self.audit_path:
                self.audit_path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.audit_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(asdict(ex), sort_keys=True) + "\n")

    def _call(self, op: str, slots: dict, text: str, **kw) -> str:
        prompt = render_prompt(op, slots)
        key = DiskCache.key(self.backend_id, op, prompt) if self.cache is not None else None
        t0 = time.perf_counter()
        if key is not None and key in self.cache:
            out = self.cache.get(key)
            self._record(KbExchange(op, prompt, out, 0.0, self.backend_id, cached=True))
            return out
        flags: list[str] = []
        try:
            out = self._run(op, prompt, text, flags=flags, **kw)
            passed = False
        except Exception as exc:  # any backend failure degrades to pass-through
            out, passed = text, True
            flags.append(f"{type(exc).__name__}: {exc}")
        ms = (time.perf_counter() - t0) * 1000.0
        self._record(KbExchange(op, prompt, out, ms, self.backend_id, passed, False, flags))
        if key is not None and not passed:
            self.cache.put(key, out)
        return out

    def _run(self, op, prompt, text, flags, **kw) -> str:
        raise NotImplementedError

    def disambiguate(self, text: str, background: Background) -> str:
        return self._call("disambiguate", {"background": background.render(), "text": text}, text,
                          background=background)

    def correct(self, text: str, background: Background) -> str:
        return self._call("correct", {"background": background.render(), "text": text}, text,
                          background=background)

    def kb_encode(self, text: str, directive: PromptDirective) -> str:
        lo, hi = directive.length_ratio_range
        if directive.snr_class == "High" or not text.strip():
            return text
        slots = {"text": text, "range_lo": round(lo * 100), "range_hi": round(hi * 100)}
        return self._call("kb_encode", slots, text, directive=directive)

    def kb_decode(self, text: str, context: str = "") -> str:
        if not text.strip():
            return text
        return self._call("kb_decode", {"context": context or "(none)", "text": text}, text,
                          context=context)


class IdentityKb(KbBackend):
    """Pass-through knowledge base: every operation returns its input."""

    backend_id = "identity"

    def _run(self, op, prompt, text, flags, **kw):
        return text
