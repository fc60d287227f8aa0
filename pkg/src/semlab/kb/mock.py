"""Deterministic rule-based stand-in for the LLM knowledge base.

* disambiguate / correct: substitution table rows fire when one of their fact
  patterns matches a background fact; ``{group}`` fields in the text pattern
  and replacement are filled from that fact match. ``correct`` additionally
  replaces ``<unk>`` with the best-scoring word from a corpus bigram table.
* kb_encode: class-specific paraphrases first, then words are dropped one at a
  time until the target word count is reached. Drop order: stopwords, adverbs,
  adjectives, other words (rarest first), and listed content words last. Within
  a tier the leftmost word goes first.
* kb_decode: capitalizes the first letter and restores a final period.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from functools import lru_cache
from pathlib import Path
from typing import Iterable

from ..fuzzyctl import PromptDirective
from .base import Background, KbBackend

DATA = Path(__file__).resolve().parent / "data"
RATIO_SLACK = 0.05

_PIECE_RE = re.compile(r"<(?:pad|unk|bos|eos)>|[^\W_]+(?:'[^\W_]+)*|\S", re.UNICODE)
_NO_SPACE_BEFORE = set(",.;:!?)")
_SOFT_PUNCT = set(",;:")
_FIELD_RE = re.compile(r"\{(\w+)\}")


def _word_list(name: str) -> frozenset[str]:
    lines = (DATA / name).read_text(encoding="utf-8").splitlines()
    return frozenset(ln.strip().lower() for ln in lines if ln.strip() and not ln.startswith("#"))


def _tsv(name: str) -> list[list[str]]:
    lines = (DATA / name).read_text(encoding="utf-8").splitlines()
    return [ln.split("\t") for ln in lines if ln.strip() and not ln.startswith("#")]


@lru_cache(maxsize=None)
def word_lists():
    return {
        "stop": _word_list("stopwords.txt"),
        "adverb": _word_list("adverbs.txt"),
        "adjective": _word_list("adjectives.txt"),
        "content": _word_list("content_words.txt"),
    }


def split_pieces(text: str) -> list[str]:
    return _PIECE_RE.findall(text)


def is_word(piece: str) -> bool:
    return piece.startswith("<") and piece.endswith(">") or piece[0].isalnum()


def word_count(text: str) -> int:
    return sum(1 for p in split_pieces(text) if is_word(p))


def join_pieces(pieces: Iterable[str]) -> str:
    out = ""
    for p in pieces:
        if out and p not in _NO_SPACE_BEFORE and not out.endswith("("):
            out += " "
        out += p
    return out


def tidy_pieces(pieces: list[str]) -> list[str]:
    """Drop commas left dangling by deletions (leading, doubled, before a stop)."""
    out: list[str] = []
    for p in pieces:
        if p in _SOFT_PUNCT and (not out or out[-1] in _SOFT_PUNCT):
            continue
        if p in ".!?" and out and out[-1] in _SOFT_PUNCT:
            out.pop()
        out.append(p)
    return out


def content_words(text: str) -> set[str]:
    lists = word_lists()
    return {p.lower() for p in split_pieces(text) if is_word(p) and p.lower() in lists["content"]}


def _fill_fields(template: str, groups: dict[str, str], escape: bool) -> str:
    def sub(m):
        val = groups.get(m.group(1), m.group(0))
        return re.escape(val) if escape else val
    return _FIELD_RE.sub(sub, template)


def target_word_count(n_words: int, ratio: float, lo: float | None = None, hi: float | None = None) -> int:
    target = int(math.floor(ratio * n_words + 0.5))
    if lo is not None:
        floor_n = math.ceil(round((lo - RATIO_SLACK) * n_words, 9))
        ceil_n = math.floor(round((hi + RATIO_SLACK) * n_words, 9))
        if floor_n <= ceil_n:
            target = min(max(target, floor_n), ceil_n)
    return max(target, 1) if n_words else 0


class MockKb(KbBackend):
    backend_id = "mock"

    def __init__(self, corpus_texts: Iterable[str] = (), **kw):
        super().__init__(**kw)
        self.lists = word_lists()
        self.unigrams: Counter[str] = Counter()
        self.bigrams: Counter[tuple[str, str]] = Counter()
        for text in corpus_texts:
            words = [p.lower() for p in split_pieces(text) if is_word(p)]
            self.unigrams.update(words)
            self.bigrams.update(zip(words, words[1:]))
        self.substitutions = _tsv("substitutions.tsv")
        self.paraphrases = _tsv("paraphrases.tsv")

    # -- rules -----------------------------------------------------------
    def apply_substitutions(self, op: str, text: str, background: Background, flags: list) -> str:
        for row_op, fact_pat, text_pat, repl in self.substitutions:
            if row_op != op:
                continue
            for fact in background.facts:
                m = re.search(fact_pat, fact)
                if not m:
                    continue
                groups = m.groupdict()
                pattern = re.compile(_fill_fields(text_pat, groups, escape=True), re.IGNORECASE)
                new = pattern.sub(lambda _m: _fill_fields(repl, groups, escape=False), text)
                if new != text:
                    flags.append(f"{op}: {text_pat} -> {repl}")
                    text = new
                break
        return text

    def fill_unknowns(self, text: str, flags: list) -> str:
        pieces = split_pieces(text)
        if "<unk>" not in pieces or not self.unigrams:
            return text
        vocab = sorted(self.unigrams)
        for i, p in enumerate(pieces):
            if p != "<unk>":
                continue
            prev = next((q.lower() for q in reversed(pieces[:i]) if is_word(q) and q != "<unk>"), None)
            nxt = next((q.lower() for q in pieces[i + 1:] if is_word(q) and q != "<unk>"), None)

            def score(w):
                return (self.bigrams[(prev, w)] + self.bigrams[(w, nxt)], self.unigrams[w])

            best = max(vocab, key=lambda w: (score(w), [-ord(ch) for ch in w]))
            pieces[i] = best
            flags.append(f"unk -> {best}")
        return join_pieces(pieces)

    def drop_priority(self, word: str, position: int):
        w = word.lower()
        if w in self.lists["stop"]:
            return (0, 0, position)
        if w in self.lists["adverb"]:
            return (1, 0, position)
        if w in self.lists["adjective"]:
            return (2, 0, position)
        if w in self.lists["content"]:
            return (4, 0, position)
        return (3, self.unigrams[w], position)

    def compress(self, text: str, target_words: int, flags: list | None = None) -> str:
        """Drop words by priority until at most ``target_words`` remain."""
        pieces = split_pieces(text)
        words = [i for i, p in enumerate(pieces) if is_word(p)]
        keep = set(range(len(pieces)))
        removed_content = False
        while len(words) > target_words:
            victim = min(words, key=lambda i: self.drop_priority(pieces[i], i))
            removed_content |= self.drop_priority(pieces[victim], victim)[0] == 4
            words.remove(victim)
            keep.discard(victim)
        if removed_content and flags is not None:
            flags.append("content words dropped")
        return join_pieces(tidy_pieces([p for i, p in enumerate(pieces) if i in keep]))

    def paraphrase(self, text: str, snr_class: str, flags: list) -> str:
        for cls, phrase, repl in self.paraphrases:
            if cls != snr_class:
                continue
            pat = re.compile(r"(?<!\w)" + re.escape(phrase) + r"(?!\w)", re.IGNORECASE)
            new = pat.sub(repl, text)
            if new != text:
                flags.append(f"paraphrase: {phrase} -> {repl}")
                text = new
        return text

    def encode(self, text: str, directive: PromptDirective, flags: list) -> str:
        lo, hi = directive.length_ratio_range
        n = word_count(text)
        if directive.snr_class == "High" or n == 0:
            return text
        target = target_word_count(n, directive.recommended_ratio, lo, hi)
        out = self.paraphrase(text, directive.snr_class, flags)
        out = self.compress(out, target, flags)
        ratio = word_count(out) / n
        if not lo - RATIO_SLACK - 1e-9 <= ratio <= hi + RATIO_SLACK + 1e-9:
            flags.append(f"ratio {ratio:.3f} outside [{lo - RATIO_SLACK:.2f}, {hi + RATIO_SLACK:.2f}]")
        return out

    @staticmethod
    def restore(text: str) -> str:
        """Re-attach punctuation, capitalize the pronoun and first letter, end with a period."""
        s = join_pieces("I" if p == "i" else p for p in split_pieces(text.strip()))
        if not s:
            return s
        for i, ch in enumerate(s):
            if ch.isalpha():
                s = s[:i] + ch.upper() + s[i + 1:]
                break
            if ch == "<":  # leave reserved markers such as <unk> alone
                break
        if s[-1] not in ".!?":
            s += "."
        return s

    # -- backend hook ----------------------------------------------------
    def _run(self, op, prompt, text, flags, **kw):
        if op == "disambiguate":
            return self.apply_substitutions(op, text, kw["background"], flags)
        if op == "correct":
            text = self.fill_unknowns(text, flags)
            return self.apply_substitutions(op, text, kw["background"], flags)
        if op == "kb_encode":
            return self.encode(text, kw["directive"], flags)
        if op == "kb_decode":
            return self.restore(text)
        raise ValueError(f"unknown op {op}")
