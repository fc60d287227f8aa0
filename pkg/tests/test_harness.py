from pathlib import Path

import pytest

from semlab.cli import main
from semlab.config import ConfigError, load_config, parse_config
from semlab.fuzzyctl import FuzzyParams
from semlab.trainer import file_hash, load_checkpoint, make_checkpoint, save_checkpoint

DEMO = Path(__file__).resolve().parents[1] / "configs" / "demo.toml"
TABLE_SENTENCE = "A young child, with a beaming smile, eagerly slides down the slide."

SMALL = """
seed = 3
[paths]
corpus = "{corpus}"
checkpoint = "{out}/m.ckpt"
output_dir = "{out}"
[model]
d_model = 8
n_layers = 1
n_heads = 2
max_len = 24
hidden = 8
k = 4
[train]
epochs = 2
batch_size = 4
[kb]
backend = "{kb}"
[fuzzy]
snr_samples = [0.0]
tune_sentences = 4
max_sweeps = 1
[sweep]
snr_db = [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
seeds = [0, 1, 2, 3, 4]
"""


@pytest.fixture()
def small_cfg(tmp_path):
    corpus = tmp_path / "c.tsv"
    corpus.write_text("spam\twin cash now\nham\tsee you soon\nspam\tfree prize today\nham\tlunch at noon\n",
                      encoding="utf-8")

    def make(kb="mock"):
        path = tmp_path / f"cfg_{kb}.toml"
        path.write_text(SMALL.format(corpus=corpus, out=tmp_path / "out", kb=kb), encoding="utf-8")
        return path

    return make


# ---------------------------------------------------------------- config

def test_demo_config_loads():
    cfg = load_config(DEMO)
    assert cfg.train.epochs == 160 and cfg.sweep.seeds == [0, 1, 2, 3, 4] or tuple(cfg.sweep.seeds) == (0, 1, 2, 3, 4)
    assert cfg.public_kb.user_id == "alice" and cfg.kb.backend == "mock"


def test_unknown_key_rejected_with_name():
    with pytest.raises(ConfigError, match="train.epochz"):
        parse_config({"train": {"epochz": 3}})


def test_bad_value_type_rejected():
    with pytest.raises(ConfigError):
        parse_config({"train": {"epochs": "many"}})


def test_master_seed_flows_to_training():
    assert parse_config({"seed": 7}).train.seed == 7
    assert parse_config({"seed": 7, "train": {"seed": 1}}).train.seed == 1


# ---------------------------------------------------------------- exit codes

def test_unknown_key_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[train]\nepochz = 3\n", encoding="utf-8")
    assert main(["train", str(bad)]) == 2
    assert "train.epochz" in capsys.readouterr().err


def test_argparse_error_exit_2():
    assert main(["transmit"]) == 2
    assert main(["nonsense"]) == 2


def test_missing_checkpoint_exit_2(small_cfg, tmp_path):
    cfg = str(small_cfg())
    missing = str(tmp_path / "nope.ckpt")
    assert main(["sweep", cfg, "--checkpoint", missing]) == 2
    assert main(["transmit", cfg, "--checkpoint", missing, "--text", "hi", "--snr", "5"]) == 2
    assert main(["tune-fuzzy", cfg, "--checkpoint", missing]) == 2


def test_corrupt_checkpoint_exit_2(small_cfg, tmp_path):
    ck = tmp_path / "bad.ckpt"
    ck.write_bytes(b"SEMLABCK" + bytes(40))
    assert main(["sweep", str(small_cfg()), "--checkpoint", str(ck)]) == 2


def test_training_abort_exit_3(small_cfg, tmp_path):
    cfg = small_cfg()
    cfg.write_text(cfg.read_text().replace("batch_size = 4", "batch_size = 4\nlr = 1e300"), encoding="utf-8")
    assert main(["train", str(cfg)]) == 3


def test_llm_without_key_exit_2(small_cfg, monkeypatch, tmp_path):
    monkeypatch.delenv("SEMLAB_LLM_API_KEY", raising=False)
    cfg = small_cfg("llm")
    cfg.write_text(cfg.read_text() + '[kb.llm]\napi_key_env = "SEMLAB_LLM_API_KEY"\n', encoding="utf-8")
    ck = tmp_path / "m.ckpt"
    assert main(["train", str(small_cfg()), "--checkpoint", str(ck)]) == 0
    assert main(["tune-fuzzy", str(cfg), "--checkpoint", str(ck)]) == 2


# ---------------------------------------------------------------- ratio

def test_ratio_raw_equivalent(tmp_path, capsys):
    media, transcript = tmp_path / "v.mp4", tmp_path / "v.txt"
    media.write_bytes(b"\x00" * 10)
    transcript.write_bytes(b"x" * 400)
    assert main(["ratio", str(media), str(transcript), "--raw-equivalent", "300x480x640x3"]) == 0
    out = capsys.readouterr().out
    assert "original_bytes=276480000" in out
    assert float(out.split("ratio=")[1]) >= 0.9999


def test_ratio_equal_sizes_and_missing(tmp_path, capsys):
    a, b = tmp_path / "a.bin", tmp_path / "b.txt"
    a.write_bytes(b"abcd")
    b.write_bytes(b"wxyz")
    assert main(["ratio", str(a), str(b)]) == 0
    assert "ratio=0.000000" in capsys.readouterr().out
    assert main(["ratio", str(a), str(tmp_path / "missing.txt")]) == 2


# ---------------------------------------------------------------- commands on a tiny config

def test_train_sweep_transmit_end_to_end(small_cfg, tmp_path, capsys):
    cfg = str(small_cfg())
    assert main(["train", cfg]) == 0
    out_dir = tmp_path / "out"
    ck = out_dir / "m.ckpt"
    first = file_hash(ck)
    assert (out_dir / "m.loss.csv").read_text().startswith("step,ce,mi_lb,total\n")
    assert main(["train", cfg]) == 0
    assert file_hash(ck) == first
    assert f"sha256={first}" in capsys.readouterr().out

    assert main(["train", cfg, "--baseline", "--checkpoint", str(out_dir / "b.ckpt")]) == 0
    assert main(["sweep", cfg, "--channel", "rayleigh", "--baseline", str(out_dir / "b.ckpt")]) == 0
    lines = (out_dir / "sweep_rayleigh.csv").read_text().splitlines()
    assert len(lines) == 1 + 30 + 6 and ",rayleigh," in lines[1]
    assert (out_dir / "sweep_rayleigh_baseline.csv").is_file()
    assert "cliff joint=" in capsys.readouterr().out

    args = ["transmit", cfg, "--text", TABLE_SENTENCE, "--snr", "0", "--seed", "4"]
    assert main(args) == 0
    a = capsys.readouterr().out
    assert "class=Low" in a and "sent : A young child, smiling, slides down the slide." in a
    assert "[kb_encode]" in a and "[channel_decode]" in a
    assert main(args) == 0
    assert capsys.readouterr().out == a


def test_transmit_writes_manifest(tmp_path, monkeypatch, joint_run, capsys):
    ck = tmp_path / "joint.ckpt"
    save_checkpoint(ck, make_checkpoint(joint_run[0].model, FuzzyParams()))
    monkeypatch.chdir(tmp_path)
    manifest = tmp_path / "m.json"
    text = "See you at the station at noon."
    assert main(["transmit", str(DEMO), "--checkpoint", str(ck), "--text", text, "--snr", "200",
                 "--manifest", str(manifest)]) == 0
    out = capsys.readouterr().out
    assert f"T_hat: {text}" in out
    assert '"user_id": "alice"' in manifest.read_text()


def test_tune_fuzzy_identity_kb_keeps_params(small_cfg, tmp_path, capsys):
    cfg = str(small_cfg("identity"))
    ck = tmp_path / "m.ckpt"
    assert main(["train", cfg, "--checkpoint", str(ck)]) == 0
    before = load_checkpoint(ck).fuzzy
    assert main(["tune-fuzzy", cfg, "--checkpoint", str(ck)]) == 0
    out = capsys.readouterr().out
    assert "objective before=1.000000 after=1.000000" in out
    assert load_checkpoint(ck).fuzzy == before


def test_tune_fuzzy_mock_kb_does_not_get_worse(small_cfg, tmp_path, capsys):
    cfg = str(small_cfg())
    ck = tmp_path / "m.ckpt"
    assert main(["train", cfg, "--checkpoint", str(ck)]) == 0
    assert main(["tune-fuzzy", cfg, "--checkpoint", str(ck), "--out", str(tmp_path / "t.ckpt")]) == 0
    line = [x for x in capsys.readouterr().out.splitlines() if x.startswith("objective")][0]
    before, after = (float(part.split("=")[1]) for part in line.split()[1:])
    assert after >= before
