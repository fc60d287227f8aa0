"""Five-layer Sugeno fuzzy controller mapping channel SNR to a prompt directive.

Layer outputs for rule i (Low, Mid, High):

    O1 = mu_i(x) = 1 / (1 + ((x - c_i) / a_i) ** (2 b_i))
    O2 = w_i = mu_i(x) * x
    O3 = w_i / sum_j w_j
    O4 = O3_i * (p_i x + q_i)
    O5 = softmax(O4)

At x = 0 every w_i vanishes; O3 then falls back to mu_i / sum_j mu_j.
For x < 0 the weights are all negative and the ratio in O3 is taken as is
(the common factor x cancels).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

CLASSES = ("Low", "Mid", "High")
LENGTH_RANGES = {"Low": (0.70, 0.80), "Mid": (0.80, 0.90), "High": (1.00, 1.00)}


@dataclass(frozen=True)
class FuzzyParams:
    a: tuple[float, float, float] = (5.0, 5.0, 5.0)
    b: tuple[float, float, float] = (2.0, 2.0, 2.0)
    c: tuple[float, float, float] = (0.0, 10.0, 20.0)
    p: tuple[float, float, float] = (0.0, 0.0, 0.0)
    q: tuple[float, float, float] = (0.75, 0.85, 1.0)

    def __post_init__(self):
        for name in ("a", "b", "c", "p", "q"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != 3 or not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{name} must hold three finite numbers")
            object.__setattr__(self, name, vals)
        if min(self.a) <= 0:
            raise ValueError("membership widths a_i must be positive")
        if min(self.b) < 1:
            raise ValueError("membership slopes b_i must be >= 1")
        if not self.c[0] < self.c[1] < self.c[2]:
            raise ValueError("centers must satisfy c1 < c2 < c3")

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in ("a", "b", "c", "p", "q")}

    @classmethod
    def from_dict(cls, d: dict) -> "FuzzyParams":
        return cls(**{k: tuple(v) for k, v in d.items()})


@dataclass(frozen=True)
class LayerTrace:
    memberships: np.ndarray
    weights: np.ndarray
    normalized: np.ndarray
    sugeno: np.ndarray
    probabilities: np.ndarray
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class PromptDirective:
    snr_class: str
    length_ratio_range: tuple[float, float]
    recommended_ratio: float
    snr_db: float = float("nan")
    flags: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        lo, hi = self.length_ratio_range
        if not 0 < lo <= hi <= 1:
            raise ValueError("length ratio range must lie in (0, 1]")
        if not lo - 1e-12 <= self.recommended_ratio <= hi + 1e-12:
            raise ValueError("recommended ratio outside its range")

    @property
    def class_index(self) -> int:
        return CLASSES.index(self.snr_class)


def membership(x: float, a: float, b: float, c: float) -> float:
    """Generalized bell membership; 1 at ``c``, 0.5 at ``c +- a``."""
    if a <= 0:
        raise ValueError("a must be positive")
    return 1.0 / (1.0 + (((x - c) / a) ** 2) ** b)


def normalize_weights(w, mu=None) -> tuple[np.ndarray, tuple[str, ...]]:
    """O3 = w / sum(w); falls back to mu / sum(mu) when the weights sum to 0."""
    w = np.asarray(w, dtype=np.float64)
    total = w.sum()
    if total == 0.0:
        if mu is None:
            raise ZeroDivisionError("weights sum to zero and no memberships given")
        mu = np.asarray(mu, dtype=np.float64)
        return mu / mu.sum(), ("zero_weight_sum",)
    return w / total, (("negative_weights",) if np.any(w < 0) else ())


def softmax(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    e = np.exp(y - y.max())
    return e / e.sum()


def controller_forward(snr_db: float, params: FuzzyParams) -> LayerTrace:
    x = float(snr_db)
    mu = np.array([membership(x, a, b, c) for a, b, c in zip(params.a, params.b, params.c)])
    w = mu * x
    norm, flags = normalize_weights(w, mu)
    y = norm * (np.asarray(params.p) * x + np.asarray(params.q))
    return LayerTrace(mu, w, norm, y, softmax(y), flags)


def directive_for(snr_db: float, params: FuzzyParams) -> PromptDirective:
    trace = controller_forward(snr_db, params)
    cls = CLASSES[int(np.argmax(trace.probabilities))]
    lo, hi = LENGTH_RANGES[cls]
    ratio = float(np.sum(trace.normalized * (np.asarray(params.p) * snr_db + np.asarray(params.q))))
    return PromptDirective(cls, (lo, hi), min(max(ratio, lo), hi), float(snr_db), trace.flags)


def default_grid() -> dict[str, tuple[float, ...]]:
    return {
        "p": (-0.02, -0.01, 0.0, 0.01, 0.02),
        "q": tuple(round(0.5 + 0.05 * i, 2) for i in range(11)),
    }


def tune(
    params0: FuzzyParams,
    objective: Callable[[FuzzyParams], float],
    grid: dict[str, Sequence[float]] | None = None,
    max_sweeps: int = 3,
    tune_antecedents: bool = False,
    log: Callable[[str], None] | None = None,
) -> tuple[FuzzyParams, float, float]:
    """Coordinate descent over a fixed grid maximizing ``objective``.

    Only strict improvements are accepted, so the returned objective is never
    below the starting one and a flat objective returns ``params0`` unchanged.
    Returns (params, objective_before, objective_after).
    """
    grid = dict(default_grid() if grid is None else grid)
    names = ["p", "q"] + (["a", "b", "c"] if tune_antecedents else [])
    best = params0
    start = best_val = float(objective(params0))
    for sweep in range(max_sweeps):
        improved = False
        for name in names:
            if name not in grid:
                continue
            for i in range(3):
                for value in grid[name]:
                    vals = list(getattr(best, name))
                    if vals[i] == value:
                        continue
                    vals[i] = value
                    try:
                        cand = replace(best, **{name: tuple(vals)})
                    except ValueError:
                        continue
                    val = float(objective(cand))
                    if val > best_val + 1e-12:
                        best, best_val, improved = cand, val, True
        if log:
            log(f"sweep {sweep}: objective {best_val:.6f}")
        if not improved:
            break
    return best, start, best_val
