"""Weight predictor and continuous integrate-and-fire (CIF) aggregation.

Weights are accumulated frame by frame; whenever the running total reaches
1 the crossing frame's weight is split, the completed weighted sum is emitted
and the remainder starts the next segment.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FIRE_EPS = 1e-12


@dataclass(frozen=True)
class Segment:
    vector: np.ndarray
    span: tuple[int, int]
    consumed_weight: float
    shares: tuple[float, ...]
    tail: bool = False


def init_head(d: int, width: int = 3, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    return {
        "conv_w": rng.normal(0, 1 / np.sqrt(d * width), size=(width, d, d)),
        "conv_b": np.zeros(d),
        "lin_w": rng.normal(0, 1 / np.sqrt(d), size=d),
        "lin_b": np.zeros(1),
    }


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def predict_weights(features, head, squash: str = "sigmoid") -> np.ndarray:
    """Causal width-``w`` convolution, linear projection, per-frame squash.

    ``squash="softmax"`` normalizes over time instead (total weight 1).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("need a non-empty (frames, d) feature matrix")
    w = head["conv_w"]  # (width, d_in, d_out); tap j looks j frames back
    width = w.shape[0]
    padded = np.vstack([np.zeros((width - 1, x.shape[1])), x])
    conv = head["conv_b"] + sum(padded[width - 1 - j: width - 1 - j + len(x)] @ w[j] for j in range(width))
    logits = conv @ head["lin_w"] + head["lin_b"][0]
    if squash == "sigmoid":
        return _sigmoid(logits)
    if squash == "softmax":
        e = np.exp(logits - logits.max())
        return e / e.sum()
    raise ValueError(f"unknown squash {squash!r}")


def cif_aggregate(weights, vectors, tail_threshold: float = 0.5, threshold: float = 1.0) -> list[Segment]:
    a = np.asarray(weights, dtype=np.float64)
    v = np.asarray(vectors, dtype=np.float64)
    if len(a) != len(v):
        raise ValueError(f"{len(a)} weights for {len(v)} vectors")
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError("weights must lie in [0, 1]")
    segments: list[Segment] = []
    acc = 0.0
    frame = np.zeros(v.shape[1:]) if v.ndim > 1 else np.zeros(0)
    shares: list[float] = []
    start = 0
    for t, alpha in enumerate(a):
        if acc + alpha >= threshold - FIRE_EPS:
            used = threshold - acc
            frame = frame + used * v[t]
            shares.append(used)
            segments.append(Segment(frame, (start, t), float(sum(shares)), tuple(shares)))
            rest = alpha - used
            acc, frame, shares, start = rest, rest * v[t], [rest] if rest > 0 else [], t if rest > 0 else t + 1
        else:
            acc += alpha
            frame = frame + alpha * v[t]
            if alpha > 0:
                shares.append(alpha)
    if shares and acc >= tail_threshold * threshold and acc > 0:
        # scale the leftover to unit weight
        segments.append(Segment(frame / acc, (start, len(a) - 1), float(acc), tuple(s / acc for s in shares), True))
    return segments
