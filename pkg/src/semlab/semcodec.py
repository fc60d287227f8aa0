"""Toy BERT-style semantic encoder and linear semantic decoder.

Parameters live in a flat ``dict[str, torch.Tensor]`` (float64) so they can be
checkpointed by name and differentiated with autograd. Layers are post-norm:

    M_msa = Norm(MSA(x) + x)
    M_ff  = Norm(GeLU(M_msa W + b) + M_msa)

and the stack ends with a parameter-free Norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

DTYPE = torch.float64
LN_EPS = 1e-12
PROB_EPS = 1e-12


@dataclass(frozen=True)
class SemCodecConfig:
    vocab_size: int
    d_model: int = 48
    n_layers: int = 2
    n_heads: int = 4
    max_len: int = 32

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.n_layers < 1:
            raise ValueError("need at least one encoder layer")


def _normal(gen, *shape, std):
    return torch.randn(*shape, generator=gen, dtype=DTYPE) * std


def init_params(cfg: SemCodecConfig, seed: int = 0) -> dict[str, torch.Tensor]:
    gen = torch.Generator().manual_seed(int(seed) % (2**63))
    d = cfg.d_model
    p = {
        "sem.embed": _normal(gen, cfg.vocab_size, d, std=1.0),
        "sem.pos": _normal(gen, cfg.max_len, d, std=0.1),
    }
    for i in range(cfg.n_layers):
        pre = f"sem.layer{i}."
        for name in ("q", "k", "v", "o"):
            p[pre + "w" + name] = _normal(gen, d, d, std=1.0 / math.sqrt(d))
            p[pre + "b" + name] = torch.zeros(d, dtype=DTYPE)
        p[pre + "ff_w"] = _normal(gen, d, d, std=1.0 / math.sqrt(d))
        p[pre + "ff_b"] = torch.zeros(d, dtype=DTYPE)
        for ln in ("ln1", "ln2"):
            p[pre + ln + "_g"] = torch.ones(d, dtype=DTYPE)
            p[pre + ln + "_b"] = torch.zeros(d, dtype=DTYPE)
    p["sem.out_w"] = _normal(gen, d, cfg.vocab_size, std=1.0 / math.sqrt(d))
    p["sem.out_b"] = torch.zeros(cfg.vocab_size, dtype=DTYPE)
    return p


def layer_norm(x, gain=None, bias=None, eps=LN_EPS):
    mean = x.mean(dim=-1, keepdim=True)
    var = ((x - mean) ** 2).mean(dim=-1, keepdim=True)
    y = (x - mean) / torch.sqrt(var + eps)
    if gain is not None:
        y = y * gain + bias
    return y


def layer_params(params, i):
    pre = f"sem.layer{i}."
    return {k[len(pre):]: v for k, v in params.items() if k.startswith(pre)}


def multi_head_attention(x, lp, n_heads, key_mask=None, return_probs=False):
    """Scaled dot-product self-attention over the second-to-last axis.

    ``x`` is (..., T, d); ``key_mask`` (..., T) marks valid key positions.
    """
    *lead, T, d = x.shape
    dh = d // n_heads

    def split(t):
        return t.reshape(*lead, T, n_heads, dh).transpose(-3, -2)

    q = split(x @ lp["wq"] + lp["bq"])
    k = split(x @ lp["wk"] + lp["bk"])
    v = split(x @ lp["wv"] + lp["bv"])
    scores = q @ k.transpose(-1, -2) / math.sqrt(dh)
    if key_mask is not None:
        scores = scores.masked_fill(~key_mask[..., None, None, :], float("-inf"))
    probs = torch.softmax(scores, dim=-1)
    ctx = (probs @ v).transpose(-3, -2).reshape(*lead, T, d)
    out = ctx @ lp["wo"] + lp["bo"]
    return (out, probs) if return_probs else out


def encoder_layer(features, lp, n_heads, key_mask=None):
    d = lp["ff_w"].shape[0]
    if features.shape[-1] != d:
        raise ValueError(f"feature width {features.shape[-1]} != d_model {d}")
    m_msa = layer_norm(multi_head_attention(features, lp, n_heads, key_mask) + features, lp["ln1_g"], lp["ln1_b"])
    return layer_norm(F.gelu(m_msa @ lp["ff_w"] + lp["ff_b"]) + m_msa, lp["ln2_g"], lp["ln2_b"])


def encode_batch(ids: torch.Tensor, mask: torch.Tensor, params, cfg: SemCodecConfig) -> torch.Tensor:
    """(B, T) padded ids -> (B, T, d) features; padded rows are meaningless."""
    T = ids.shape[-1]
    if T > cfg.max_len:
        raise ValueError(f"sequence length {T} exceeds max_len {cfg.max_len}")
    if int(ids.max()) >= cfg.vocab_size or int(ids.min()) < 0:
        raise IndexError("token id out of range")
    x = params["sem.embed"][ids] + params["sem.pos"][:T]
    for i in range(cfg.n_layers):
        x = encoder_layer(x, layer_params(params, i), cfg.n_heads, mask)
    return layer_norm(x)


def semantic_encode(tokens, params, cfg: SemCodecConfig) -> torch.Tensor:
    """Token ids of one sentence -> (L, d) semantic features."""
    ids = torch.as_tensor(list(getattr(tokens, "ids", tokens)), dtype=torch.long)
    if ids.numel() == 0:
        raise ValueError("empty token sequence")
    mask = torch.ones(1, ids.numel(), dtype=torch.bool)
    return encode_batch(ids[None], mask, params, cfg)[0]


def semantic_decode(features, params) -> torch.Tensor:
    w = params["sem.out_w"]
    if features.shape[-1] != w.shape[0]:
        raise ValueError(f"feature width {features.shape[-1]} != {w.shape[0]}")
    return features @ w + params["sem.out_b"]


def greedy_decode(logits) -> list[int]:
    # torch.argmax returns the first maximal index: lowest-id tie-break
    return [int(i) for i in torch.as_tensor(logits).argmax(dim=-1).reshape(-1)]


def ce_loss(p, q):
    """Per-word binary cross entropy summed over positions.

    ``p`` are predicted word probabilities, ``q`` the 0/1 reference
    indicators; ``p`` is clamped to [eps, 1 - eps] before the logs.
    """
    p = torch.as_tensor(p, dtype=DTYPE)
    q = torch.as_tensor(q, dtype=DTYPE)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {tuple(p.shape)} vs {tuple(q.shape)}")
    p = p.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -(q * torch.log(p) + (1.0 - q) * torch.log1p(-p)).sum()


def reference_token_ce(logits, targets, weights=None):
    """CE of the reference token at each position (q=1 there, p its softmax prob)."""
    probs = torch.softmax(logits, dim=-1)
    p_ref = probs.gather(-1, targets[..., None])[..., 0]
    if weights is None:
        return ce_loss(p_ref, torch.ones_like(p_ref))
    p_ref = p_ref.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -(weights * torch.log(p_ref)).sum()


def categorical_ce(logits, targets):
    """Mean categorical CE; diagnostic only."""
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1))
