"""Stacked-autoencoder channel codec, complex packing and an InfoNCE MI bound."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .semcodec import DTYPE


@dataclass(frozen=True)
class ChanCodecConfig:
    d_model: int = 48
    hidden: int = 32
    k: int = 16

    def __post_init__(self):
        if self.k % 2:
            raise ValueError("k must be even to pair reals into complex symbols")

    @property
    def symbols_per_position(self) -> int:
        return self.k // 2


@dataclass(frozen=True)
class ChannelSymbols:
    symbols: np.ndarray  # complex, length n_positions * k / 2
    n_positions: int
    power: float = 1.0
    degenerate: bool = False

    def __len__(self):
        return len(self.symbols)


def init_params(cfg: ChanCodecConfig, seed: int = 0) -> dict[str, torch.Tensor]:
    gen = torch.Generator().manual_seed(int(seed) % (2**63))
    widths = [cfg.d_model, cfg.hidden, cfg.k]
    p = {}
    for side, ws in (("enc", widths), ("dec", widths[::-1])):
        for i, (a, b) in enumerate(zip(ws[:-1], ws[1:])):
            p[f"chan.{side}{i}_w"] = torch.randn(a, b, generator=gen, dtype=DTYPE) / math.sqrt(a)
            p[f"chan.{side}{i}_b"] = torch.zeros(b, dtype=DTYPE)
    return p


def critic_init(cfg: ChanCodecConfig, seed: int = 0) -> dict[str, torch.Tensor]:
    gen = torch.Generator().manual_seed(int(seed) % (2**63))
    return {"critic.w": torch.randn(cfg.d_model, cfg.k, generator=gen, dtype=DTYPE) * 0.01}


def _mlp(x, params, side):
    x = F.gelu(x @ params[f"chan.{side}0_w"] + params[f"chan.{side}0_b"])
    return x @ params[f"chan.{side}1_w"] + params[f"chan.{side}1_b"]


def encode_real(features, params):
    """(..., d) -> (..., k) real channel inputs before normalization."""
    if features.shape[-1] != params["chan.enc0_w"].shape[0]:
        raise ValueError(f"feature width {features.shape[-1]} != {params['chan.enc0_w'].shape[0]}")
    return _mlp(features, params, "enc")


def decode_real(z, params):
    if z.shape[-1] != params["chan.dec0_w"].shape[0]:
        raise ValueError(f"symbol width {z.shape[-1]} != {params['chan.dec0_w'].shape[0]}")
    return _mlp(z, params, "dec")


def pack_complex(v: np.ndarray) -> np.ndarray:
    """Consecutive real pairs (a, b) -> a + bj, row-major."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size % 2:
        raise ValueError("need an even number of reals")
    return v[0::2] + 1j * v[1::2]


def unpack_real(symbols: np.ndarray) -> np.ndarray:
    s = np.asarray(symbols, dtype=complex).reshape(-1)
    out = np.empty(2 * s.size)
    out[0::2] = s.real
    out[1::2] = s.imag
    return out


def power_normalize(symbols: np.ndarray) -> tuple[np.ndarray, bool]:
    """Scale to unit mean power. Returns (symbols, degenerate) for all-zero input."""
    s = np.asarray(symbols, dtype=complex)
    if s.size == 0:
        raise ValueError("cannot normalize an empty symbol block")
    power = float(np.mean(np.abs(s) ** 2))
    if power == 0.0:
        warnings.warn("all-zero symbol block left unnormalized", RuntimeWarning, stacklevel=2)
        return s.copy(), True
    return s / math.sqrt(power), False


def power_normalize_torch(z, mask=None):
    """Unit mean power per sentence for (B, T, k) real pairs (k/2 complex per row)."""
    sq = z.pow(2).sum(dim=-1)  # 2 * power per complex symbol, summed over the row
    if mask is None:
        mean_power = sq.mean(dim=-1) / (z.shape[-1] / 2)
    else:
        m = mask.to(z.dtype)
        mean_power = (sq * m).sum(dim=-1) / (m.sum(dim=-1) * z.shape[-1] / 2)
    return z / torch.sqrt(mean_power)[..., None, None]


def channel_encode(features, params) -> ChannelSymbols:
    with torch.no_grad():
        z = encode_real(torch.as_tensor(features, dtype=DTYPE), params)
    symbols, degenerate = power_normalize(pack_complex(z.numpy()))
    return ChannelSymbols(symbols, z.shape[0], float(np.mean(np.abs(symbols) ** 2)), degenerate)


def channel_decode(symbols, params, k: int | None = None) -> torch.Tensor:
    s = symbols.symbols if isinstance(symbols, ChannelSymbols) else np.asarray(symbols)
    k = k or params["chan.dec0_w"].shape[0]
    reals = unpack_real(s)
    if reals.size % k:
        raise ValueError(f"{s.size} complex symbols do not fill rows of {k // 2}")
    z = torch.as_tensor(reals.reshape(-1, k), dtype=DTYPE)
    if isinstance(symbols, ChannelSymbols) and z.shape[0] != symbols.n_positions:
        raise ValueError("symbol count inconsistent with the declared number of positions")
    with torch.no_grad():
        return decode_real(z, params)


def bilinear_critic(w):
    """Score x^T W y, expressed as the projection x -> x W used by the estimator."""
    return lambda x: x @ w


def mi_lower_bound(x, y, negatives_per_pair: int | None = None, critic=None):
    """InfoNCE estimate of I(X; Y) in nats.

    Pair i is scored against itself and ``negatives_per_pair`` other samples
    taken cyclically after it (all others when None). The critic score of
    (x, y) is ``critic(x) . y``; the default is a plain dot product. The
    estimate is bounded above by ln(K + 1).
    """
    x = torch.as_tensor(x, dtype=DTYPE)
    y = torch.as_tensor(y, dtype=DTYPE)
    n = x.shape[0]
    if n < 2 or y.shape[0] != n:
        raise ValueError("need at least 2 paired samples of equal count")
    K = n - 1 if negatives_per_pair is None else int(negatives_per_pair)
    if not 1 <= K <= n - 1:
        raise ValueError(f"negatives_per_pair must be in [1, {n - 1}]")
    gx = x if critic is None else critic(x)
    if gx.shape[-1] != y.shape[-1]:
        raise ValueError(f"critic maps x to width {gx.shape[-1]}, y has width {y.shape[-1]}")
    if K == n - 1:
        cand = gx @ y.T
        positive = cand.diagonal()
    else:
        # column j holds the score against the sample j places further on
        cand = torch.stack([(gx * torch.roll(y, -j, dims=0)).sum(-1) for j in range(K + 1)], dim=1)
        positive = cand[:, 0]
    return (positive - torch.logsumexp(cand, dim=1)).mean() + math.log(K + 1)
