"""Semantic + channel codec bundle shared by the pipeline and the trainer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from . import chancodec, semcodec
from .chancodec import ChanCodecConfig, ChannelSymbols
from .semcodec import SemCodecConfig
from .textcore import TokenSequence, Vocab, tokenize


@dataclass
class SemComModel:
    vocab: Vocab
    sem_cfg: SemCodecConfig
    chan_cfg: ChanCodecConfig
    params: dict[str, torch.Tensor] = field(repr=False)
    identity_channel_codec: bool = False

    @classmethod
    def create(cls, vocab: Vocab, seed: int = 0, d_model: int = 48, n_layers: int = 2, n_heads: int = 4,
               max_len: int = 32, hidden: int = 32, k: int = 16) -> "SemComModel":
        from .channel import derive_seed

        sem_cfg = SemCodecConfig(vocab.size, d_model, n_layers, n_heads, max_len)
        chan_cfg = ChanCodecConfig(d_model, hidden, k)
        params = {
            **semcodec.init_params(sem_cfg, derive_seed(seed, "init", "sem")),
            **chancodec.init_params(chan_cfg, derive_seed(seed, "init", "chan")),
            **chancodec.critic_init(chan_cfg, derive_seed(seed, "init", "critic")),
        }
        return cls(vocab, sem_cfg, chan_cfg, params)

    def tokenize(self, text: str) -> TokenSequence:
        return tokenize(text, self.vocab, self.sem_cfg.max_len)

    def encode(self, tokens: TokenSequence) -> torch.Tensor:
        with torch.no_grad():
            return semcodec.semantic_encode(tokens, self.params, self.sem_cfg)

    def channel_encode(self, features) -> ChannelSymbols:
        if self.identity_channel_codec:
            f = torch.as_tensor(features).numpy()
            symbols, degenerate = chancodec.power_normalize(chancodec.pack_complex(f))
            return ChannelSymbols(symbols, f.shape[0], 1.0, degenerate)
        return chancodec.channel_encode(features, self.params)

    def channel_decode(self, symbols: ChannelSymbols) -> torch.Tensor:
        if self.identity_channel_codec:
            reals = chancodec.unpack_real(symbols.symbols).reshape(symbols.n_positions, -1)
            # encoder output rows are layer-normalized, so re-normalizing undoes the power scaling
            return semcodec.layer_norm(torch.as_tensor(reals, dtype=semcodec.DTYPE))
        return chancodec.channel_decode(symbols, self.params, self.chan_cfg.k)

    def decode(self, features) -> list[int]:
        with torch.no_grad():
            return semcodec.greedy_decode(semcodec.semantic_decode(features, self.params))

    def named_tensors(self) -> dict[str, np.ndarray]:
        return {k: v.detach().numpy() for k, v in sorted(self.params.items())}
