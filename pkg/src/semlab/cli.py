"""Command line entry point: train | sweep | transmit | tune-fuzzy | ratio.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("semlab")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- builders

def build_kb(cfg: ExperimentConfig, corpus_texts):
    from .kb import DiskCache, IdentityKb, KbConfigError, LlmKb, MockKb

    k = cfg.kb
    cache = DiskCache(k.cache_path) if (cfg.toggles.caching and k.cache_path) else None
    audit = k.audit_path or None
    if k.backend == "none":
        return None
    if k.backend == "identity":
        return IdentityKb(audit_path=audit, cache=cache)
    if k.backend == "mock":
        return MockKb(corpus_texts, audit_path=audit, cache=cache)
    try:
        return LlmKb(k.llm, audit_path=audit, cache=cache)
    except KbConfigError as exc:
        if cache is not None and len(cache):
            # a populated cache can serve without credentials
            return LlmKb(_no_key(k.llm), audit_path=audit, cache=cache)
        raise UsageError(f"llm backend unusable: {exc}") from exc


def _no_key(llm_cfg):
    import dataclasses

    return dataclasses.replace(llm_cfg, require_api_key=False)


def background(cfg: ExperimentConfig):
    from .kb import Background

    return Background(cfg.kb.background.user_id, tuple(cfg.kb.background.facts))


def public_kb(cfg: ExperimentConfig):
    from .pipeline import PublicKb, PublicKbRecord

    if cfg.public_kb is None:
        return None
    reg = PublicKb()
    p = cfg.public_kb
    reg.register(PublicKbRecord(p.user_id, p.face_image_path, tuple(float(v) for v in p.vocal_feature_vector)))
    return reg


def load_corpus_for(cfg: ExperimentConfig):
    from .textcore import CorpusError, load_corpus

    path = cfg.paths.corpus_path()
    if not path.is_file():
        raise UsageError(f"corpus not found: {path}")
    try:
        return load_corpus(path)
    except CorpusError as exc:
        raise UsageError(str(exc)) from exc


def load_ckpt(path):
    from .trainer import CheckpointError, load_checkpoint

    if not Path(path).is_file():
        raise UsageError(f"checkpoint not found: {path}")
    try:
        return load_checkpoint(path)
    except CheckpointError as exc:
        raise UsageError(str(exc)) from exc


def make_stack(cfg: ExperimentConfig, ck, corpus, use_kb: bool = True):
    from .pipeline import Stack

    return Stack(ck.to_model(), ck.fuzzy, build_kb(cfg, corpus.texts) if use_kb else None, background(cfg),
                 public_kb(cfg))


# ---------------------------------------------------------------- commands

def run_training(cfg: ExperimentConfig, corpus, baseline: bool = False, progress=None):
    """Full recipe; returns (model, fuzzy params, loss history).

    Joint: train, tune the fuzzy consequents against the knowledge base,
    then resume on knowledge-base rewritten text (``train.resume_epochs``).
    Baseline: the same codecs trained at the single design SNR, without the KB.
    """
    from .model import SemComModel
    from .textcore import build_vocab
    from .trainer import baseline_config, train_recipe

    m = cfg.model
    vocab = build_vocab(corpus, m.min_count)
    model = SemComModel.create(vocab, cfg.seed, m.d_model, m.n_layers, m.n_heads, m.max_len, m.hidden, m.k)
    tcfg = baseline_config(cfg.train, cfg.sweep.design_snr_db) if baseline else cfg.train
    kb = None if baseline else build_kb(cfg, corpus.texts)
    res = train_recipe(corpus, model, tcfg, kb=kb, fuzzy=cfg.fuzzy.params(), tune_sentences=cfg.fuzzy.tune_sentences,
                       snr_samples=cfg.fuzzy.snr_samples, progress=progress, max_sweeps=cfg.fuzzy.max_sweeps,
                       tune_antecedents=cfg.fuzzy.tune_antecedents)
    return res.model, res.fuzzy, res.history


def cmd_train(args, cfg: ExperimentConfig) -> int:
    from .trainer import make_checkpoint, save_checkpoint, write_loss_csv

    corpus = load_corpus_for(cfg)
    if args.epochs is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, epochs=args.epochs))
    model, fuzzy, history = run_training(cfg, corpus, baseline=args.baseline)
    default = cfg.paths.baseline_checkpoint if args.baseline else cfg.paths.checkpoint
    ck_path = Path(args.checkpoint or default)
    ck_path.parent.mkdir(parents=True, exist_ok=True)
    ck = make_checkpoint(model, fuzzy, {"experiment": cfg.to_dict(), "baseline": bool(args.baseline)})
    digest = save_checkpoint(ck_path, ck)
    loss_path = ck_path.with_suffix(".loss.csv")
    write_loss_csv(history, loss_path)
    if history:
        last = history[-1]
        print(f"steps={last.step} ce={last.ce:.6f} mi_lb={last.mi_lb:.6f} total={last.total:.6f}")
    else:
        print("steps=0 (no training)")
    print(f"checkpoint {ck_path} sha256={digest}")
    print(f"loss history {loss_path}")
    return EXIT_OK


def _sweep_one(cfg, corpus, ck_path, channel, use_kb, clf):
    from .metrics import snr_sweep

    ck = load_ckpt(ck_path)
    stack = make_stack(cfg, ck, corpus, use_kb)
    return snr_sweep(corpus, stack, channel, cfg.sweep.snr_db, cfg.sweep.seeds, clf)


def cmd_sweep(args, cfg: ExperimentConfig) -> int:
    from .metrics import fit_classifier

    corpus = load_corpus_for(cfg)
    channel = args.channel or cfg.sweep.channel
    ck_path = args.checkpoint or cfg.paths.checkpoint
    load_ckpt(ck_path)
    if args.baseline:
        load_ckpt(args.baseline)
    clf = fit_classifier(corpus) if len(corpus.label_set) >= 2 else None
    result = _sweep_one(cfg, corpus, ck_path, channel, not args.no_kb, clf)
    out = Path(args.out or Path(cfg.paths.output_dir) / f"sweep_{channel}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    result.write_csv(out)
    print(f"wrote {out} ({len(result.records)} trials + {len(result.summary)} summary rows)")
    for r in result.summary:
        print(f"snr={r.snr_db:g} token_acc={r.token_accuracy:.4f} downstream={r.downstream_accuracy:.4f} "
              f"failed={r.failed_trials}")
    print(f"cliff={result.cliff:.4f}")
    if args.baseline:
        base = _sweep_one(cfg, corpus, args.baseline, channel, not args.no_kb, clf)
        bout = out.with_name(out.stem + "_baseline.csv")
        base.write_csv(bout)
        print(f"wrote {bout}")
        verdict = "joint <= baseline" if result.cliff <= base.cliff else "joint > baseline"
        print(f"cliff joint={result.cliff:.4f} baseline={base.cliff:.4f} ({verdict})")
    return EXIT_OK


def cmd_transmit(args, cfg: ExperimentConfig) -> int:
    from .pipeline import round_trip, write_manifest

    corpus = load_corpus_for(cfg)
    ck = load_ckpt(args.checkpoint or cfg.paths.checkpoint)
    stack = make_stack(cfg, ck, corpus)
    channel = args.channel or cfg.sweep.channel
    trip = round_trip(args.text, stack, channel, args.snr, args.seed)
    d = trip.directive
    print(f"T    : {trip.original}")
    print(f"directive: class={d.snr_class} range=[{d.length_ratio_range[0]:.2f}, {d.length_ratio_range[1]:.2f}] "
          f"ratio={d.recommended_ratio:.4f}")
    print(f"sent : {trip.channel_text}")
    print(f"T_hat: {trip.text if not trip.failed else '<failed trial>'}")
    if cfg.toggles.tracing:
        print(trip.trace.format())
    if trip.manifest is not None:
        path = Path(args.manifest or Path(cfg.paths.output_dir) / "manifest.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        write_manifest(trip.manifest, path)
        print(f"manifest {path}")
    return EXIT_OK if not trip.failed else EXIT_RUNTIME


def cmd_tune_fuzzy(args, cfg: ExperimentConfig) -> int:
    from .trainer import ChannelEvalConfig, save_checkpoint, tune_fuzzy

    corpus = load_corpus_for(cfg)
    ck_path = args.checkpoint or cfg.paths.checkpoint
    ck = load_ckpt(ck_path)
    kb = build_kb(cfg, corpus.texts)
    if kb is None:
        raise UsageError("tune-fuzzy needs a knowledge base (kb.backend is 'none')")
    chan = ChannelEvalConfig(ck.to_model(), cfg.sweep.channel, cfg.seed) if args.through_channel else None
    texts = corpus.texts[: cfg.fuzzy.tune_sentences]
    params, before, after = tune_fuzzy(ck.fuzzy, texts, kb, chan, cfg.fuzzy.snr_samples,
                                       max_sweeps=cfg.fuzzy.max_sweeps, tune_antecedents=cfg.fuzzy.tune_antecedents)
    print(f"objective before={before:.6f} after={after:.6f}")
    print(f"p={params.p} q={params.q}")
    ck.fuzzy = params
    out = args.out or ck_path
    digest = save_checkpoint(out, ck)
    print(f"checkpoint {out} sha256={digest}")
    return EXIT_OK


def cmd_ratio(args) -> int:
    from .metrics import compression_ratio

    media, transcript = Path(args.media), Path(args.transcript)
    for p in (media, transcript):
        if not p.is_file():
            raise UsageError(f"file not found: {p}")
    if args.raw_equivalent:
        try:
            dims = [int(v) for v in args.raw_equivalent.lower().split("x")]
        except ValueError as exc:
            raise UsageError("--raw-equivalent expects FRAMESxHEIGHTxWIDTHxCHANNELS") from exc
        if len(dims) != 4 or min(dims) < 1:
            raise UsageError("--raw-equivalent expects FRAMESxHEIGHTxWIDTHxCHANNELS")
        original = dims[0] * dims[1] * dims[2] * dims[3]
    else:
        original = media.stat().st_size
    compressed = transcript.stat().st_size
    try:
        ratio = compression_ratio(original, compressed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"original_bytes={original} compressed_bytes={compressed} ratio={ratio:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="semlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="joint training; writes a checkpoint and loss CSV")
    p.add_argument("config")
    p.add_argument("--checkpoint", help="output path (default from config)")
    p.add_argument("--epochs", type=int, help="override train.epochs")
    p.add_argument("--baseline", action="store_true", help="train the fixed-SNR separate-coding baseline instead")

    p = sub.add_parser("sweep", help="SNR sweep to a metrics CSV")
    p.add_argument("config")
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", help="baseline checkpoint for a paired cliff comparison")
    p.add_argument("--channel", choices=("awgn", "rayleigh"))
    p.add_argument("--out", help="CSV path")
    p.add_argument("--no-kb", action="store_true", help="disable the knowledge-base stages")

    p = sub.add_parser("transmit", help="send one sentence and print the stage trace")
    p.add_argument("config")
    p.add_argument("--checkpoint")
    p.add_argument("--text", required=True)
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--channel", choices=("awgn", "rayleigh"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", help="synthesis manifest path")

    p = sub.add_parser("tune-fuzzy", help="tune fuzzy consequents and update the checkpoint")
    p.add_argument("config")
    p.add_argument("--checkpoint")
    p.add_argument("--out", help="write to a new checkpoint instead of updating in place")
    p.add_argument("--through-channel", action="store_true", help="score through the codecs and channel")

    p = sub.add_parser("ratio", help="compression ratio of a transcript against its media")
    p.add_argument("media")
    p.add_argument("transcript")
    p.add_argument("--raw-equivalent", metavar="FxHxWxC",
                   help="use the size of uncompressed 8-bit video with these dimensions")
    return ap


def main(argv=None) -> int:
    from .trainer import TrainingAborted

    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "ratio":
            return cmd_ratio(args)
        cfg = load_config(args.config)
        handler = {"train": cmd_train, "sweep": cmd_sweep, "transmit": cmd_transmit,
                   "tune-fuzzy": cmd_tune_fuzzy}[args.command]
        return handler(args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - surface any failure as a runtime error
        log.exception("command failed")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
