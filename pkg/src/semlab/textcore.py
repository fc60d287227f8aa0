"""Word-level tokenization, vocabularies and corpus files."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<bos>", "<eos>")
DEFAULT_MAX_LEN = 32

# reserved markers survive as single tokens; everything else is words or single punctuation marks
_TOKEN_RE = re.compile(r"<(?:pad|unk|bos|eos)>|[^\W_]+(?:'[^\W_]+)*|[^\w\s]|_", re.UNICODE)


class CorpusError(ValueError):
    pass


def normalize_words(text: str) -> list[str]:
    """Lowercase ``text`` and split it into word and punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.tokens[:4]) != RESERVED:
            raise ValueError("vocab must start with the reserved tokens")
        index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocab")
        object.__setattr__(self, "index", index)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self.index.get(token, UNK)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    original_text: str = ""

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[tuple[str, str | None], ...]
    source_path: str | None = None

    def __post_init__(self):
        if not self.sentences:
            raise CorpusError("corpus is empty")

    @classmethod
    def from_texts(cls, texts: Iterable[str], labels: Iterable[str | None] | None = None):
        texts = list(texts)
        labels = list(labels) if labels is not None else [None] * len(texts)
        return cls(tuple(zip(texts, labels)))

    @property
    def texts(self) -> list[str]:
        return [t for t, _ in self.sentences]

    @property
    def labels(self) -> list[str | None]:
        return [lab for _, lab in self.sentences]

    @property
    def label_set(self) -> list[str]:
        return sorted({lab for lab in self.labels if lab is not None})

    def __len__(self):
        return len(self.sentences)

    def head(self, n: int) -> "Corpus":
        return Corpus(self.sentences[:n], self.source_path)


def build_vocab(corpus: Corpus | Sequence[str], min_count: int = 1) -> Vocab:
    """Frequency-then-lexicographic vocabulary over the corpus words.

    Reserved ids are pad=0, unk=1, bos=2, eos=3; tokens seen fewer than
    ``min_count`` times map to unk.
    """
    texts = corpus.texts if isinstance(corpus, Corpus) else list(corpus)
    if not texts:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(tok for text in texts for tok in normalize_words(text))
    for tok in RESERVED:
        counts.pop(tok, None)
    kept = sorted((tok for tok, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocab(RESERVED + tuple(kept))


def tokenize(text: str, vocab: Vocab, max_len: int = DEFAULT_MAX_LEN) -> TokenSequence:
    if max_len < 2:
        raise ValueError("max_len must leave room for bos/eos")
    ids = [vocab.id_of(tok) for tok in normalize_words(text)][: max_len - 2]
    return TokenSequence((BOS, *ids, EOS), text)


def detokenize(tokens: TokenSequence | Sequence[int], vocab: Vocab) -> str:
    ids = tokens.ids if isinstance(tokens, TokenSequence) else tokens
    words = []
    for i in ids:
        i = int(i)
        if i < 0 or i >= vocab.size:
            raise IndexError(f"token id {i} outside vocab of size {vocab.size}")
        if i == UNK:
            words.append("<unk>")
        elif i >= len(RESERVED):
            words.append(vocab.tokens[i])
    return " ".join(words)


def bow_vector(text: str, vocab: Vocab) -> np.ndarray:
    vec = np.zeros(vocab.size)
    for tok in normalize_words(text):
        vec[vocab.id_of(tok)] += 1.0
    return vec


def load_corpus(path: str | Path) -> Corpus:
    """Read ``label<TAB>text`` or bare ``text`` lines; blank lines are skipped."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    sentences = []
    for lineno, line in enumerate(raw.split(b"\n"), start=1):
        try:
            line = line.decode("utf-8").rstrip("\r")
        except UnicodeDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: invalid UTF-8") from exc
        if not line.strip():
            continue
        if "\t" in line:
            label, text = line.split("\t", 1)
            sentences.append((text, label))
        else:
            sentences.append((line, None))
    if not sentences:
        raise CorpusError(f"{path}: no sentences")
    return Corpus(tuple(sentences), str(path))


def demo_corpus_path() -> Path:
    return Path(__file__).resolve().parent / "data" / "demo_corpus.tsv"
