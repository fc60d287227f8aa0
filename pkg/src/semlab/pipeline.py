"""End-to-end transmitter / channel / receiver chain for one sentence at a time.

Transmitter: directive(snr) -> disambiguate -> kb_encode -> tokenize
             -> semantic_encode -> channel_encode
Receiver:    equalize -> channel_decode -> semantic_decode -> detokenize
             -> correct -> kb_decode -> synthesis manifest
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import channel as chan
from .chancodec import ChannelSymbols
from .fuzzyctl import FuzzyParams, PromptDirective, directive_for
from .kb import Background, KbBackend
from .model import SemComModel
from .textcore import Corpus, detokenize

TX_STAGES = ("gse", "directive", "disambiguate", "kb_encode", "tokenize", "semantic_encode", "channel_encode")
RX_STAGES = ("equalize", "channel_decode", "semantic_decode", "detokenize", "correct", "kb_decode", "gsr")


class GseError(FileNotFoundError):
    pass


class FileTranscriptGse:
    """Reads the ``<media basename>.txt`` transcript next to a media file."""

    def extract(self, media_ref: str | Path) -> str:
        sidecar = Path(media_ref).with_suffix(".txt")
        if not sidecar.is_file():
            raise GseError(f"no transcript for {media_ref}: expected {sidecar}")
        return sidecar.read_text(encoding="utf-8")


class PassThroughText:
    def extract(self, media_ref: str) -> str:
        return str(media_ref)


@dataclass(frozen=True)
class PublicKbRecord:
    user_id: str
    face_image_path: str
    vocal_feature_vector: tuple[float, ...]


class PublicKb:
    def __init__(self):
        self._records: dict[str, PublicKbRecord] = {}

    def register(self, record: PublicKbRecord) -> None:
        self._records[record.user_id] = record

    def lookup(self, user_id: str) -> PublicKbRecord:
        try:
            return self._records[user_id]
        except KeyError:
            raise KeyError(f"user {user_id!r} is not registered in the public KB") from None


def synthesis_manifest(text: str, record: PublicKbRecord, snr_db: float, channel: str,
                       flags: list[str] | tuple[str, ...] = ()) -> dict:
    return {
        "user_id": record.user_id,
        "face_image_path": record.face_image_path,
        "vocal_dim": len(record.vocal_feature_vector),
        "text": text,
        "snr_db": float(snr_db),
        "channel": channel,
        "flags": list(flags),
    }


def write_manifest(manifest: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class StageTrace:
    stages: list[tuple[str, dict[str, Any]]] = field(default_factory=list)

    def add(self, name: str, **detail) -> None:
        self.stages.append((name, detail))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.stages]

    def get(self, name: str) -> dict[str, Any]:
        for n, d in self.stages:
            if n == name:
                return d
        raise KeyError(name)

    def format(self) -> str:
        lines = []
        for name, detail in self.stages:
            body = ", ".join(f"{k}={v!r}" for k, v in detail.items())
            lines.append(f"[{name}] {body}")
        return "\n".join(lines)


@dataclass
class Stack:
    """Everything both ends of the link share: codecs, KB, fuzzy params, user."""

    model: SemComModel
    fuzzy: FuzzyParams = field(default_factory=FuzzyParams)
    kb: KbBackend | None = None
    background: Background = field(default_factory=lambda: Background("user"))
    public_kb: PublicKb | None = None
    gse: Any = field(default_factory=PassThroughText)


@dataclass
class Transmission:
    symbols: ChannelSymbols
    directive: PromptDirective
    text: str
    channel_text: str
    token_ids: tuple[int, ...]
    flags: list[str]


@dataclass
class Reception:
    text: str | None
    decoded_ids: tuple[int, ...]
    raw_text: str | None
    manifest: dict | None
    failed: bool
    flags: list[str]


def _kb_op(stack: Stack, flags: list[str], op: str, *args) -> str:
    before = len(stack.kb.exchanges)
    out = getattr(stack.kb, op)(*args)
    for ex in stack.kb.exchanges[before:]:
        if ex.pass_through:
            flags.append(f"{op}: pass-through ({'; '.join(ex.flags)})")
    return out


def transmit(text: str, stack: Stack, snr_db: float, trace: StageTrace | None = None) -> Transmission:
    trace = trace if trace is not None else StageTrace()
    flags: list[str] = []
    trace.add("gse", text=text)
    directive = directive_for(snr_db, stack.fuzzy)
    trace.add("directive", snr_db=float(snr_db), snr_class=directive.snr_class,
              range=directive.length_ratio_range, ratio=round(directive.recommended_ratio, 6))
    work = text
    if stack.kb is not None:
        work = _kb_op(stack, flags, "disambiguate", work, stack.background)
        trace.add("disambiguate", text=work)
        work = _kb_op(stack, flags, "kb_encode", work, directive)
        trace.add("kb_encode", text=work)
    else:
        trace.add("disambiguate", text=work, skipped=True)
        trace.add("kb_encode", text=work, skipped=True)
    tokens = stack.model.tokenize(work)
    trace.add("tokenize", n_tokens=len(tokens))
    features = stack.model.encode(tokens)
    trace.add("semantic_encode", shape=tuple(features.shape))
    symbols = stack.model.channel_encode(features)
    trace.add("channel_encode", n_symbols=len(symbols), power=round(float(np.mean(np.abs(symbols.symbols) ** 2)), 12))
    if symbols.degenerate:
        flags.append("degenerate symbol power")
    return Transmission(symbols, directive, text, work, tokens.ids, flags)


def receive(received: ChannelSymbols, stack: Stack, snr_db: float, realization: chan.ChannelRealization | None = None,
            trace: StageTrace | None = None, channel: str = "awgn") -> Reception:
    trace = trace if trace is not None else StageTrace()
    flags: list[str] = []
    symbols = received
    if realization is not None:
        try:
            eq = chan.equalize(received.symbols, realization)
        except chan.DeepFadeError as exc:
            trace.add("equalize", failed=str(exc))
            return Reception(None, (), None, None, True, [f"deep fade: {exc}"])
        symbols = ChannelSymbols(eq, received.n_positions)
        trace.add("equalize", h=complex(realization.h))
    else:
        trace.add("equalize", skipped=True)
    features = stack.model.channel_decode(symbols)
    trace.add("channel_decode", shape=tuple(features.shape))
    ids = tuple(stack.model.decode(features))
    trace.add("semantic_decode", n_tokens=len(ids))
    raw = detokenize(ids, stack.model.vocab)
    trace.add("detokenize", text=raw)
    text = raw
    if stack.kb is not None:
        text = _kb_op(stack, flags, "correct", text, stack.background)
        trace.add("correct", text=text)
        context = ", ".join(stack.background.facts)
        text = _kb_op(stack, flags, "kb_decode", text, context)
        trace.add("kb_decode", text=text)
    else:
        trace.add("correct", text=text, skipped=True)
        trace.add("kb_decode", text=text, skipped=True)
    manifest = None
    if stack.public_kb is not None:
        record = stack.public_kb.lookup(stack.background.user_id)
        manifest = synthesis_manifest(text, record, snr_db, channel, flags)
        trace.add("gsr", manifest_user=record.user_id)
    else:
        trace.add("gsr", skipped=True)
    return Reception(text, ids, raw, manifest, False, flags)


@dataclass
class RoundTrip:
    index: int
    original: str
    channel_text: str
    sent_ids: tuple[int, ...]
    decoded_ids: tuple[int, ...]
    text: str | None
    directive: PromptDirective
    trace: StageTrace
    failed: bool
    flags: list[str]
    manifest: dict | None = None


def round_trip(text: str, stack: Stack, channel: str, snr_db: float, seed: int, index: int = 0) -> RoundTrip:
    trace = StageTrace()
    tx = transmit(text, stack, snr_db, trace)
    rx_symbols, realization = chan.transmit(tx.symbols.symbols, channel, snr_db, seed)
    trace.add("channel", kind=channel, snr_db=float(snr_db), seed=int(seed))
    rx = receive(ChannelSymbols(rx_symbols, tx.symbols.n_positions), stack, snr_db, realization, trace, channel)
    return RoundTrip(index, text, tx.channel_text, tx.token_ids, rx.decoded_ids, rx.text, tx.directive, trace,
                     rx.failed, tx.flags + rx.flags, rx.manifest)


def run_round_trip(corpus: Corpus | list[str], stack: Stack, channel: str, snr_db: float, seed: int) -> list[RoundTrip]:
    """One record per sentence; the channel seed of sentence i is derived from (seed, i)."""
    texts = corpus.texts if isinstance(corpus, Corpus) else list(corpus)
    out = []
    for i, text in enumerate(texts):
        out.append(round_trip(text, stack, channel, snr_db, chan.derive_seed(seed, "channel", i), i))
    return out
