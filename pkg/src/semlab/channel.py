"""AWGN and flat Rayleigh fading channels with perfect-CSI equalization.

All randomness comes from counter-based Philox streams keyed by
``(seed, *keys)`` so that trials can run in any order and still reproduce.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

NOISELESS_SNR_DB = 200.0
DEEP_FADE = 1e-12


class DeepFadeError(RuntimeError):
    """Raised when the channel gain is too small to invert."""


def derive_seed(master: int, *parts) -> int:
    """Stable 64-bit seed from a master seed and a path of names/indices."""
    h = hashlib.sha256(repr((int(master), *parts)).encode()).digest()
    return int.from_bytes(h[:8], "little")


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(k) for k in keys]])
    return np.random.Generator(np.random.Philox(ss))


def noise_power_for(snr_db: float) -> float:
    """Noise variance for unit signal power at ``snr_db``; 0 above the noiseless guard."""
    snr_db = float(snr_db)
    if not math.isfinite(snr_db):
        raise ValueError("snr must be finite")
    if snr_db >= NOISELESS_SNR_DB:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


def complex_noise(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    # variance split equally between real and imaginary parts
    std = math.sqrt(sigma2 / 2.0)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return std * (re + 1j * im)


def draw_gain(rng: np.random.Generator) -> complex:
    re, im = rng.standard_normal(2) * math.sqrt(0.5)
    return complex(re, im)


@dataclass(frozen=True)
class ChannelRealization:
    h: complex
    seed: int


def awgn(symbols: np.ndarray, snr_db: float, seed: int) -> np.ndarray:
    symbols = np.asarray(symbols, dtype=complex)
    sigma2 = noise_power_for(snr_db)
    if sigma2 == 0.0:
        return symbols.copy()
    return symbols + complex_noise(symbols.shape, sigma2, make_rng(seed))


def rayleigh_fade(symbols: np.ndarray, snr_db: float, seed: int) -> tuple[np.ndarray, ChannelRealization]:
    """One complex gain h ~ CN(0, 1) for the whole block, then AWGN."""
    symbols = np.asarray(symbols, dtype=complex)
    rng = make_rng(seed)
    h = draw_gain(rng)
    out = h * symbols
    sigma2 = noise_power_for(snr_db)
    if sigma2 > 0.0:
        out = out + complex_noise(symbols.shape, sigma2, rng)
    return out, ChannelRealization(h, int(seed))


def equalize(symbols: np.ndarray, realization: ChannelRealization) -> np.ndarray:
    if abs(realization.h) <= DEEP_FADE:
        raise DeepFadeError(f"|h| = {abs(realization.h):.3e} below {DEEP_FADE:g}")
    return np.asarray(symbols, dtype=complex) / realization.h


def transmit(symbols: np.ndarray, channel: str, snr_db: float, seed: int):
    """Dispatch helper: returns (received, realization-or-None)."""
    if channel == "awgn":
        return awgn(symbols, snr_db, seed), None
    if channel == "rayleigh":
        return rayleigh_fade(symbols, snr_db, seed)
    raise ValueError(f"unknown channel {channel!r}")
