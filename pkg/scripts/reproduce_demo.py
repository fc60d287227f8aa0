#!/usr/bin/env python3
"""Train the joint and baseline systems on the demo corpus and run every sweep.

Writes checkpoints, loss CSVs and sweep CSVs (AWGN, Rayleigh, and the
no-knowledge-base ablation) under the config's output directory.

Usage:
    python scripts/reproduce_demo.py [--config configs/demo.toml] [--epochs N]
"""
import argparse
import sys
from pathlib import Path

from semlab.cli import main as semlab
from semlab.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def run(args):
    code = semlab(args)
    if code != 0:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "demo.toml"))
    ap.add_argument("--epochs", type=int, help="override train.epochs for a quick run")
    a = ap.parse_args()
    cfg = load_config(a.config)
    extra = ["--epochs", str(a.epochs)] if a.epochs is not None else []
    joint, base = cfg.paths.checkpoint, cfg.paths.baseline_checkpoint
    out = Path(cfg.paths.output_dir)

    run(["train", a.config, "--checkpoint", joint, *extra])
    run(["train", a.config, "--baseline", "--checkpoint", base, *extra])
    for channel in ("awgn", "rayleigh"):
        run(["sweep", a.config, "--checkpoint", joint, "--baseline", base, "--channel", channel])
    run(["sweep", a.config, "--checkpoint", joint, "--channel", "awgn", "--no-kb",
         "--out", str(out / "sweep_awgn_no_kb.csv")])
    print(f"artifacts in {out}")


if __name__ == "__main__":
    main()
