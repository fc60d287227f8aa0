"""Fidelity metrics, a naive-Bayes downstream classifier, and SNR sweeps."""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import derive_seed
from .textcore import Corpus, normalize_words

CSV_HEADER = ("snr_db", "seed", "channel", "token_acc", "bleu2", "cosine", "downstream_acc", "compression_ratio",
              "failed_trials")


def compression_ratio(original_bytes: int, compressed_bytes: int) -> float:
    """Fraction of the original size removed: (original - compressed) / original."""
    if original_bytes <= 0:
        raise ValueError("original size must be positive")
    if compressed_bytes < 0:
        raise ValueError("compressed size must be >= 0")
    if compressed_bytes > original_bytes:
        raise ValueError(f"compressed size {compressed_bytes} exceeds original {original_bytes}")
    return (original_bytes - compressed_bytes) / original_bytes


def raw_video_bytes(frames: int, height: int, width: int, channels: int = 3) -> int:
    """Size of uncompressed 8-bit video."""
    return frames * height * width * channels


def token_accuracy(ref: Sequence, hyp: Sequence) -> float:
    """Position-wise matches over the longer length; two empty sequences score 1."""
    ref, hyp = list(ref), list(hyp)
    n = max(len(ref), len(hyp))
    if n == 0:
        return 1.0
    return sum(a == b for a, b in zip(ref, hyp)) / n


def _ngrams(words, n):
    return Counter(tuple(words[i: i + n]) for i in range(len(words) - n + 1))


def bleu2(reference: str | Sequence[str], hypothesis: str | Sequence[str]) -> float:
    """Geometric mean of clipped 1- and 2-gram precision times the brevity penalty.

    Not symmetric: precision is measured on the hypothesis.
    """
    ref = normalize_words(reference) if isinstance(reference, str) else list(reference)
    hyp = normalize_words(hypothesis) if isinstance(hypothesis, str) else list(hypothesis)
    if not hyp:
        return 1.0 if not ref else 0.0
    precisions = []
    for n in (1, 2):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        total = sum(h.values())
        if total == 0:
            # one-word hypothesis: no bigrams, fall back to the unigram score
            continue
        precisions.append(sum(min(c, r[g]) for g, c in h.items()) / total)
    if min(precisions) == 0:
        return 0.0
    bp = 1.0 if len(hyp) >= len(ref) else math.exp(1 - len(ref) / len(hyp))
    return float(bp * math.exp(sum(math.log(p) for p in precisions) / len(precisions)))


def cosine_similarity(u, v) -> float:
    """u.v / (|u||v|), clipped to [-1, 1]; zero vs zero is 1, zero vs nonzero is 0."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 and nv == 0:
        return 1.0
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


# ---------------------------------------------------------------- classifier

@dataclass(frozen=True)
class TinyClassifier:
    labels: tuple[str, ...]
    vocab: tuple[str, ...]
    log_prior: np.ndarray  # (C,)
    log_likelihood: np.ndarray  # (C, V)
    log_unseen: np.ndarray  # (C,) smoothed probability of a word outside the vocabulary
    smoothing: float

    def posterior(self, text: str) -> np.ndarray:
        index = {w: i for i, w in enumerate(self.vocab)}
        scores = self.log_prior.copy()
        for w in normalize_words(text):
            i = index.get(w)
            scores += self.log_likelihood[:, i] if i is not None else self.log_unseen
        return np.exp(scores - np.logaddexp.reduce(scores))


def fit_classifier(labeled: Corpus | Sequence[tuple[str, str]], smoothing: float = 1.0) -> TinyClassifier:
    """Multinomial naive Bayes with additive smoothing over (text, label) pairs.

    The vocabulary gets one extra slot for unseen words, so each class's
    likelihoods over (vocab + unseen) sum to one.
    """
    pairs = [(lab, text) for text, lab in (labeled.sentences if isinstance(labeled, Corpus) else labeled)]
    if any(lab is None for lab, _ in pairs):
        raise ValueError("every training sentence needs a label")
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    labels = tuple(sorted({lab for lab, _ in pairs}))
    if len(labels) < 2:
        raise ValueError("need at least two classes")
    vocab = tuple(sorted({w for _, t in pairs for w in normalize_words(t)}))
    index = {w: i for i, w in enumerate(vocab)}
    counts = np.zeros((len(labels), len(vocab)))
    docs = np.zeros(len(labels))
    for lab, text in pairs:
        c = labels.index(lab)
        docs[c] += 1
        for w in normalize_words(text):
            counts[c, index[w]] += 1
    denom = counts.sum(axis=1, keepdims=True) + smoothing * (len(vocab) + 1)
    return TinyClassifier(labels, vocab, np.log(docs / docs.sum()), np.log((counts + smoothing) / denom),
                          np.log(smoothing / denom[:, 0]), float(smoothing))


def classify(clf: TinyClassifier, text: str) -> str:
    # argmax returns the first maximum: ties go to the lexicographically lowest label
    return clf.labels[int(np.argmax(clf.posterior(text)))]


def classifier_accuracy(clf: TinyClassifier, texts: Sequence[str], labels: Sequence[str]) -> float:
    if not texts:
        return 0.0
    return sum(classify(clf, t) == lab for t, lab in zip(texts, labels)) / len(texts)


# ---------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class MetricRecord:
    snr_db: float
    seed: int
    channel: str
    token_accuracy: float
    bleu2: float
    cosine: float
    downstream_accuracy: float
    compression_ratio: float
    failed_trials: int

    def __post_init__(self):
        for name in ("token_accuracy", "bleu2", "downstream_accuracy"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} out of [0, 1]")
        if not -1.0 <= self.cosine <= 1.0:
            raise ValueError("cosine out of [-1, 1]")
        if not 0.0 <= self.compression_ratio < 1.0:
            raise ValueError("compression_ratio out of [0, 1)")
        if self.failed_trials < 0:
            raise ValueError("failed_trials must be >= 0")

    def row(self) -> list[str]:
        return [f"{self.snr_db:g}", str(self.seed), self.channel, f"{self.token_accuracy:.6f}", f"{self.bleu2:.6f}",
                f"{self.cosine:.6f}", f"{self.downstream_accuracy:.6f}", f"{self.compression_ratio:.6f}",
                str(self.failed_trials)]


@dataclass
class SweepResult:
    records: list[MetricRecord]
    summary: list[MetricRecord]
    cliff: float

    def mean_token_accuracy(self) -> dict[float, float]:
        return {r.snr_db: r.token_accuracy for r in self.summary}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records + self.summary:
            w.writerow(r.row())
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def cliff_statistic(mean_acc: Sequence[float]) -> float:
    """Largest rise in mean accuracy between adjacent SNR points (ascending SNR).

    Read right to left this is the sharpest quality drop as SNR decreases.
    """
    a = list(mean_acc)
    if len(a) < 2:
        return 0.0
    return max(0.0, max(a[i + 1] - a[i] for i in range(len(a) - 1)))


def _trial_metrics(trips, vocab, clf, labels) -> tuple[float, float, float, float, float, int]:
    from .textcore import bow_vector

    tok, bl, cos, right, comp, failed = [], [], [], 0, [], 0
    for trip in trips:
        if trip.failed:
            failed += 1
            tok.append(0.0)
            bl.append(0.0)
            cos.append(0.0)
            comp.append(_byte_ratio(trip.original, trip.channel_text))
            continue
        # the bos/eos frame is fixed by construction, score the payload only
        tok.append(token_accuracy(trip.sent_ids[1:-1], trip.decoded_ids[1:-1]))
        bl.append(bleu2(trip.original, trip.text))
        cos.append(cosine_similarity(bow_vector(trip.original, vocab), bow_vector(trip.text, vocab)))
        if clf is not None and classify(clf, trip.text) == labels[trip.index]:
            right += 1
        comp.append(_byte_ratio(trip.original, trip.channel_text))
    n = len(trips)
    down = right / n if clf is not None and n else 0.0
    return (float(np.mean(tok)), float(np.mean(bl)), float(np.mean(cos)), down, float(np.mean(comp)), failed)


def _byte_ratio(original: str, sent: str) -> float:
    a, b = len(original.encode("utf-8")), len(sent.encode("utf-8"))
    if a == 0 or b >= a:
        return 0.0
    return compression_ratio(a, b)


def snr_sweep(corpus: Corpus, stack, channel: str, snr_list: Sequence[float], seeds: Sequence[int],
              classifier: TinyClassifier | None = None) -> SweepResult:
    """One record per (snr, seed), then one mean row per snr (seed = -1).

    Token accuracy compares the ids put on the wire (after the knowledge
    base rewrite) with the decoded ids; bleu2, cosine and the classifier
    score the final text against the original sentence. Compression ratio
    is the byte reduction of the knowledge-base rewrite.
    """
    from .pipeline import run_round_trip

    labels = corpus.labels
    if classifier is not None and any(lab is None for lab in labels):
        raise ValueError("downstream accuracy needs a labeled corpus")
    records: list[MetricRecord] = []
    summary: list[MetricRecord] = []
    for snr in snr_list:
        rows = []
        for seed in seeds:
            trips = run_round_trip(corpus, stack, channel, snr, derive_seed(seed, "sweep", channel, float(snr)))
            tok, bl, cos, down, comp, failed = _trial_metrics(trips, stack.model.vocab, classifier, labels)
            rows.append(MetricRecord(float(snr), int(seed), channel, tok, bl, cos, down, comp, failed))
        records.extend(rows)
        summary.append(MetricRecord(
            float(snr), -1, channel,
            float(np.mean([r.token_accuracy for r in rows])),
            float(np.mean([r.bleu2 for r in rows])),
            float(np.mean([r.cosine for r in rows])),
            float(np.mean([r.downstream_accuracy for r in rows])),
            float(np.mean([r.compression_ratio for r in rows])),
            int(sum(r.failed_trials for r in rows)),
        ))
    order = np.argsort([r.snr_db for r in summary], kind="stable")
    cliff = cliff_statistic([summary[i].token_accuracy for i in order])
    return SweepResult(records, summary, cliff)
