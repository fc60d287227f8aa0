"""Joint training of the semantic and channel codecs through a noisy channel.

Each step samples one SNR for the batch, runs
semantic encoder -> channel encoder -> power normalization -> channel ->
channel decoder -> semantic decoder, and minimizes
``lambda_ce * CE - lambda_mi * MI_lb``. Channel noise is a constant sample
added to the signal, so gradients only flow through the signal path. The
knowledge base is never differentiated; it can rewrite the training text
(``kb`` argument) and its fuzzy controller is tuned separately.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import chancodec, semcodec
from .channel import DEEP_FADE, derive_seed, make_rng, noise_power_for
from .chancodec import ChanCodecConfig
from .fuzzyctl import FuzzyParams, directive_for
from .model import SemComModel
from .semcodec import DTYPE, SemCodecConfig
from .textcore import Corpus, Vocab, tokenize

log = logging.getLogger(__name__)

CHANNELS = ("awgn", "rayleigh")


class TrainingAborted(RuntimeError):
    def __init__(self, step: int, detail: str):
        super().__init__(f"training aborted at step {step}: {detail}")
        self.step = step
        self.detail = detail


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 160
    batch_size: int = 16
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    snr_lo_db: float = -5.0
    snr_hi_db: float = 20.0
    lambda_ce: float = 1.0
    lambda_mi: float = 0.1
    channel: str = "awgn"
    seed: int = 0
    kb_augment: bool = False
    resume_epochs: int = 20

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.epochs < 0 or self.resume_epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.snr_lo_db > self.snr_hi_db:
            raise ValueError(f"snr range [{self.snr_lo_db}, {self.snr_hi_db}] is empty")
        if self.lambda_ce < 0 or self.lambda_mi < 0:
            raise ValueError("loss weights must be >= 0")
        if self.channel not in CHANNELS:
            raise ValueError(f"channel must be one of {CHANNELS}")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ValueError("betas must be two values in [0, 1)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        return d


def baseline_config(cfg: TrainConfig, design_snr_db: float = 20.0) -> TrainConfig:
    """Same recipe, but every step sees the single design SNR."""
    return dataclasses.replace(cfg, snr_lo_db=design_snr_db, snr_hi_db=design_snr_db, kb_augment=False)


def sample_snr(config: TrainConfig, rng: np.random.Generator) -> float:
    return float(rng.uniform(config.snr_lo_db, config.snr_hi_db))


# ---------------------------------------------------------------- batching

def batchify(seqs: Sequence[Sequence[int]]) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-pad id sequences with PAD (0); returns (ids, mask)."""
    T = max(len(s) for s in seqs)
    ids = torch.zeros(len(seqs), T, dtype=torch.long)
    mask = torch.zeros(len(seqs), T, dtype=torch.bool)
    for b, s in enumerate(seqs):
        ids[b, : len(s)] = torch.as_tensor(list(s), dtype=torch.long)
        mask[b, : len(s)] = True
    return ids, mask


def channel_noise(shape, snr_db: float, channel: str, rng: np.random.Generator) -> torch.Tensor:
    """Post-equalization noise in real-pair layout for a (B, T, k) batch.

    Rayleigh: one gain per sentence, zero-forcing leaves n / h.
    """
    B, T, k = shape
    sigma2 = noise_power_for(snr_db)
    gains = None
    if channel == "rayleigh":
        gains = (rng.standard_normal(B) + 1j * rng.standard_normal(B)) * math.sqrt(0.5)
    std = math.sqrt(sigma2 / 2.0)
    n = std * (rng.standard_normal((B, T, k // 2)) + 1j * rng.standard_normal((B, T, k // 2)))
    if gains is not None:
        n = n / np.maximum(np.abs(gains), DEEP_FADE)[:, None, None] * np.exp(-1j * np.angle(gains))[:, None, None]
    out = np.empty((B, T, k))
    out[..., 0::2] = n.real
    out[..., 1::2] = n.imag
    return torch.as_tensor(out, dtype=DTYPE)


@dataclass
class LossTerms:
    total: torch.Tensor
    ce: torch.Tensor
    mi: torch.Tensor
    logits: torch.Tensor


def joint_loss(params, ids, mask, sem_cfg: SemCodecConfig, noise=None, lambda_ce: float = 1.0,
               lambda_mi: float = 0.1) -> LossTerms:
    f = semcodec.encode_batch(ids, mask, params, sem_cfg)
    z = chancodec.encode_real(f, params) * mask[..., None]
    z = chancodec.power_normalize_torch(z, mask)
    y = z if noise is None else z + noise
    logits = semcodec.semantic_decode(chancodec.decode_real(y, params), params)
    w = mask.to(DTYPE)
    ce = semcodec.reference_token_ce(logits, ids, w) / w.sum()
    if lambda_mi > 0 and int(mask.sum()) >= 2:
        mi = chancodec.mi_lower_bound(f[mask], y[mask], critic=chancodec.bilinear_critic(params["critic.w"]))
    else:
        mi = torch.zeros((), dtype=DTYPE)
    return LossTerms(lambda_ce * ce - lambda_mi * mi, ce, mi, logits)


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class LossRecord:
    step: int
    ce: float
    mi_lb: float
    total: float
    snr_db: float


@dataclass
class TrainResult:
    model: SemComModel
    history: list[LossRecord] = field(default_factory=list)
    fuzzy: FuzzyParams | None = None

    @property
    def steps(self) -> int:
        return len(self.history)


def write_loss_csv(history: Sequence[LossRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "ce", "mi_lb", "total"])
        for r in history:
            w.writerow([r.step, f"{r.ce:.17g}", f"{r.mi_lb:.17g}", f"{r.total:.17g}"])


def _check_finite(params, step):
    for name, t in params.items():
        if not torch.isfinite(t).all():
            raise TrainingAborted(step, f"parameter {name} is not finite")


def train_joint(corpus: Corpus | Sequence[str], model: SemComModel, config: TrainConfig, kb=None,
                fuzzy: FuzzyParams | None = None, epochs: int | None = None, stream: str = "train",
                progress: Callable[[LossRecord], None] | None = None) -> TrainResult:
    """Train a copy of ``model``'s parameters; the input model is not modified.

    With ``config.kb_augment`` and a ``kb``, each batch's text is first
    rewritten by the knowledge base under the directive for the batch SNR.
    ``stream`` names the random stream, so a resumed phase draws fresh
    batches and noise.
    """
    texts = corpus.texts if isinstance(corpus, Corpus) else list(corpus)
    if not texts:
        raise ValueError("empty training corpus")
    epochs = config.epochs if epochs is None else epochs
    fuzzy = fuzzy or FuzzyParams()
    params = {k: v.detach().clone().requires_grad_(True) for k, v in model.params.items()}
    out_model = dataclasses.replace(model, params=params)
    _check_finite(params, 0)
    base_ids = [tokenize(t, model.vocab, model.sem_cfg.max_len).ids for t in texts]
    opt = torch.optim.Adam(params.values(), lr=config.lr, betas=config.betas, eps=config.adam_eps)
    rng = make_rng(derive_seed(config.seed, stream))
    augment = config.kb_augment and kb is not None
    history: list[LossRecord] = []
    step = 0
    for _ in range(epochs):
        perm = rng.permutation(len(texts))
        for start in range(0, len(texts), config.batch_size):
            idx = perm[start: start + config.batch_size]
            snr = sample_snr(config, rng)
            if augment:
                directive = directive_for(snr, fuzzy)
                seqs = [tokenize(kb.kb_encode(texts[i], directive), model.vocab, model.sem_cfg.max_len).ids
                        for i in idx]
            else:
                seqs = [base_ids[i] for i in idx]
            ids, mask = batchify(seqs)
            noise = channel_noise((*ids.shape, model.chan_cfg.k), snr, config.channel, rng)
            step += 1
            terms = joint_loss(params, ids, mask, model.sem_cfg, noise, config.lambda_ce, config.lambda_mi)
            if not torch.isfinite(terms.total):
                raise TrainingAborted(step, f"non-finite loss (ce={float(terms.ce.detach())}, mi={float(terms.mi.detach())}, "
                                            f"snr={snr:.3f} dB, batch={list(map(int, idx))})")
            opt.zero_grad()
            terms.total.backward()
            opt.step()
            rec = LossRecord(step, float(terms.ce.detach()), float(terms.mi.detach()), float(terms.total.detach()), snr)
            history.append(rec)
            if progress is not None:
                progress(rec)
    _check_finite(params, step)
    for v in params.values():
        v.requires_grad_(False)
    return TrainResult(out_model, history)


def smoothed(values: Sequence[float], window: int = 10) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if len(v) < window:
        return v.copy()
    return np.convolve(v, np.ones(window) / window, mode="valid")


def pretrain_channel_ae(model: SemComModel, corpus: Corpus | Sequence[str], steps: int = 2000, lr: float = 1e-3,
                        seed: int = 0) -> tuple[SemComModel, list[float]]:
    """Fit only the channel codec to reconstruct frozen semantic features (no noise, MSE)."""
    texts = corpus.texts if isinstance(corpus, Corpus) else list(corpus)
    ids, mask = batchify([tokenize(t, model.vocab, model.sem_cfg.max_len).ids for t in texts])
    with torch.no_grad():
        feats = semcodec.encode_batch(ids, mask, model.params, model.sem_cfg)[mask]
    params = {k: v.detach().clone() for k, v in model.params.items()}
    chan = {k: v.requires_grad_(True) for k, v in params.items() if k.startswith("chan.")}
    opt = torch.optim.Adam(chan.values(), lr=lr)
    del seed  # full-batch: deterministic without sampling
    losses = []
    for _ in range(steps):
        z = chancodec.encode_real(feats, params)
        z = chancodec.power_normalize_torch(z[None])[0]
        mse = (chancodec.decode_real(z, params) - feats).pow(2).mean()
        opt.zero_grad()
        mse.backward()
        opt.step()
        losses.append(float(mse.detach()))
    for v in chan.values():
        v.requires_grad_(False)
    return dataclasses.replace(model, params=params), losses


def reconstruction_mse(model: SemComModel, corpus: Corpus | Sequence[str]) -> float:
    """Mean squared error of decode(encode(x)) over every training position, via the symbol path."""
    texts = corpus.texts if isinstance(corpus, Corpus) else list(corpus)
    total, count = 0.0, 0
    for t in texts:
        f = model.encode(model.tokenize(t))
        rec = model.channel_decode(model.channel_encode(f))
        total += float((rec - f).pow(2).sum())
        count += f.numel()
    return total / count


# ---------------------------------------------------------------- gradient check

def finite_diff_check(loss_fn: Callable[[dict], torch.Tensor], params: dict[str, torch.Tensor], step: float = 1e-5,
                      samples_per_tensor: int = 6, seed: int = 0, floor: float = 1e-5) -> float:
    """Worst relative error between autograd and central differences.

    For each tensor a few entries are sampled; the error of a tensor is
    ``|g_a - g_n| / max(|g_a|, |g_n|, floor)`` over those entries. The floor
    keeps structurally zero gradients (e.g. key biases under softmax shift
    invariance) from dividing round-off by round-off: with a 1e-5 step the
    central difference itself carries about 1e-10 of absolute noise.
    """
    p = {k: v.detach().clone().to(DTYPE).requires_grad_(True) for k, v in params.items()}
    loss = loss_fn(p)
    names = list(p)
    grads = torch.autograd.grad(loss, [p[n] for n in names], allow_unused=True)
    analytic = {n: (g if g is not None else torch.zeros_like(p[n])) for n, g in zip(names, grads)}
    rng = np.random.default_rng(seed)
    worst = 0.0
    with torch.no_grad():
        base = {k: v.detach() for k, v in p.items()}
        for n in names:
            flat = base[n].reshape(-1)
            picks = rng.choice(flat.numel(), size=min(samples_per_tensor, flat.numel()), replace=False)
            ga, gn = [], []
            for j in picks:
                orig = float(flat[j])
                flat[j] = orig + step
                up = float(loss_fn(base))
                flat[j] = orig - step
                down = float(loss_fn(base))
                flat[j] = orig
                gn.append((up - down) / (2 * step))
                ga.append(float(analytic[n].reshape(-1)[j]))
            ga_v, gn_v = np.array(ga), np.array(gn)
            denom = max(np.linalg.norm(ga_v), np.linalg.norm(gn_v), floor)
            worst = max(worst, float(np.linalg.norm(ga_v - gn_v) / denom))
    return worst


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_MAGIC = b"SEMLABCK"
CHECKPOINT_VERSION = 1
_HEAD = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    fuzzy: FuzzyParams
    vocab: tuple[str, ...]
    config: dict
    version: int = CHECKPOINT_VERSION
    content_hash: str = ""

    def to_model(self) -> SemComModel:
        m = self.config["model"]
        vocab = Vocab(self.vocab)
        sem_cfg = SemCodecConfig(len(vocab.tokens), m["d_model"], m["n_layers"], m["n_heads"], m["max_len"])
        chan_cfg = ChanCodecConfig(m["d_model"], m["hidden"], m["k"])
        params = {k: torch.as_tensor(v.copy(), dtype=DTYPE) for k, v in self.tensors.items()}
        return SemComModel(vocab, sem_cfg, chan_cfg, params)


def model_config(model: SemComModel) -> dict:
    s, c = model.sem_cfg, model.chan_cfg
    return {"d_model": s.d_model, "n_layers": s.n_layers, "n_heads": s.n_heads, "max_len": s.max_len,
            "hidden": c.hidden, "k": c.k}


def make_checkpoint(model: SemComModel, fuzzy: FuzzyParams, extra_config: dict | None = None) -> Checkpoint:
    config = {"model": model_config(model), **(extra_config or {})}
    return Checkpoint(model.named_tensors(), fuzzy, tuple(model.vocab.tokens), config)


def _serialize(ck: Checkpoint, version: int) -> bytes:
    names = sorted(ck.tensors)
    header = {
        "tensors": [{"name": n, "shape": list(np.shape(ck.tensors[n]))} for n in names],
        "fuzzy": ck.fuzzy.to_dict(),
        "vocab": list(ck.vocab),
        "config": ck.config,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = bytearray(_HEAD.pack(CHECKPOINT_MAGIC, version, len(hbytes)))
    body += hbytes
    for n in names:
        body += np.ascontiguousarray(ck.tensors[n], dtype="<f8").tobytes(order="C")
    return bytes(body) + hashlib.sha256(body).digest()


def save_checkpoint(path: str | Path, state: Checkpoint, version: int = CHECKPOINT_VERSION) -> str:
    """Write ``state``; returns the sha256 hex digest of the whole file."""
    data = _serialize(state, version)
    Path(path).write_bytes(data)
    state.content_hash = hashlib.sha256(data).hexdigest()
    return state.content_hash


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    magic, version, hlen = _HEAD.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
    body, digest = data[:-32], data[-32:]
    if len(data) < _HEAD.size + 32 or hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: content hash mismatch (corrupt or truncated)")
    header = json.loads(body[_HEAD.size: _HEAD.size + hlen].decode("utf-8"))
    offset = _HEAD.size + hlen
    tensors = {}
    for t in header["tensors"]:
        shape = tuple(t["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(body, dtype="<f8", count=n, offset=offset).reshape(shape)
        tensors[t["name"]] = arr.astype(np.float64)
        offset += 8 * n
    if offset != len(body):
        raise CheckpointError(f"{path}: tensor payload size does not match header")
    return Checkpoint(tensors, FuzzyParams.from_dict(header["fuzzy"]), tuple(header["vocab"]), header["config"],
                      version, hashlib.sha256(data).hexdigest())


# ---------------------------------------------------------------- fuzzy tuning

@dataclass(frozen=True)
class ChannelEvalConfig:
    """Codec and channel used to score fuzzy parameters end to end."""

    model: SemComModel
    channel: str = "awgn"
    seed: int = 0


def fuzzy_objective(params: FuzzyParams, corpus: Corpus | Sequence[str], kb, channel_config: ChannelEvalConfig | None,
                    snr_samples: Sequence[float], vocab: Vocab | None = None) -> float:
    """Mean bag-of-words cosine between each sentence and its reconstruction.

    Without a channel config the transport is knowledge base only:
    ``kb_decode(kb_encode(T))``. With one, the full pipeline round trip runs.
    """
    from .metrics import cosine_similarity
    from .pipeline import Stack, round_trip
    from .textcore import bow_vector, build_vocab

    texts = corpus.texts if isinstance(corpus, Corpus) else list(corpus)
    if not texts:
        raise ValueError("empty corpus")
    if not snr_samples:
        raise ValueError("need at least one snr sample")
    if vocab is None:
        vocab = channel_config.model.vocab if channel_config else build_vocab(texts)
    stack = Stack(channel_config.model, params, kb) if channel_config else None
    scores = []
    for s_i, snr in enumerate(snr_samples):
        directive = directive_for(snr, params)
        for t_i, text in enumerate(texts):
            if stack is None:
                rec = kb.kb_decode(kb.kb_encode(text, directive))
            else:
                seed = derive_seed(channel_config.seed, "tune", s_i, t_i)
                rec = round_trip(text, stack, channel_config.channel, snr, seed).text or ""
            scores.append(cosine_similarity(bow_vector(text, vocab), bow_vector(rec, vocab)))
    return float(np.mean(scores))


def tune_fuzzy(params0: FuzzyParams, corpus: Corpus | Sequence[str], kb, channel_config: ChannelEvalConfig | None,
               snr_samples: Sequence[float], **tune_kw) -> tuple[FuzzyParams, float, float]:
    """Grid search of the consequents against :func:`fuzzy_objective`."""
    from .fuzzyctl import tune
    from .textcore import build_vocab

    texts = corpus.texts if isinstance(corpus, Corpus) else list(corpus)
    if not texts:
        raise ValueError("empty corpus")
    vocab = channel_config.model.vocab if channel_config else build_vocab(texts)
    return tune(params0, lambda p: fuzzy_objective(p, texts, kb, channel_config, snr_samples, vocab), **tune_kw)


DEFAULT_TUNE_SNRS = (-5.0, 0.0, 5.0, 10.0)


def train_recipe(corpus: Corpus | Sequence[str], model: SemComModel, config: TrainConfig, kb=None,
                 fuzzy: FuzzyParams | None = None, tune_sentences: int = 50,
                 snr_samples: Sequence[float] = DEFAULT_TUNE_SNRS, progress=None, **tune_kw) -> TrainResult:
    """Joint training with one train / tune / resume alternation.

    The codecs are trained first; with a knowledge base and
    ``config.resume_epochs > 0`` the fuzzy consequents are then tuned on
    the knowledge-base round trip of the first ``tune_sentences`` sentences,
    and training resumes on text rewritten under the tuned directives.
    """
    texts = corpus.texts if isinstance(corpus, Corpus) else list(corpus)
    fuzzy = fuzzy or FuzzyParams()
    res = train_joint(texts, model, config, kb=kb, fuzzy=fuzzy, progress=progress)
    history = list(res.history)
    if kb is None or config.resume_epochs == 0:
        return TrainResult(res.model, history, fuzzy)
    fuzzy, before, after = tune_fuzzy(fuzzy, texts[:tune_sentences], kb, None, snr_samples, **tune_kw)
    log.info("fuzzy tuning objective %.6f -> %.6f", before, after)
    resumed = train_joint(texts, res.model, dataclasses.replace(config, kb_augment=True), kb=kb, fuzzy=fuzzy,
                          epochs=config.resume_epochs, stream="resume", progress=progress)
    offset = len(history)
    history += [dataclasses.replace(r, step=r.step + offset) for r in resumed.history]
    return TrainResult(resumed.model, history, fuzzy)
