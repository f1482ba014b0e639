"""Command line behavior: subcommands, artifacts, exit codes."""

import json
import os

import pytest

from sedcl.cli import main

CFG_TEMPLATE = """
corpus = {corpus}
out = {out}
objective = curriculum
epochs = 2
batch_size = 2
seeds = 0,1

model.n_mels = 16
model.conv_channels = 3,3
model.pools = 4x1,2x1
model.gru_units = 3
model.fc_units = 8

synth.n_scenes = 2
synth.events_per_scene = 2
synth.shared_events = 1
synth.clips_per_scene = 2
synth.eval_clips_per_scene = 1
synth.clip_seconds = 3.0
synth.sample_rate = 8000
synth.event_rate = 2.0

compare.variants = bce,curriculum
compare.aux_seeds = 0
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A config file plus the corpus it points at, built via the CLI."""
    base = tmp_path_factory.mktemp("cli")
    corpus = base / "corpus"
    out = base / "run"
    cfg_path = base / "exp.cfg"
    cfg_path.write_text(CFG_TEMPLATE.format(corpus=corpus, out=out), encoding="utf-8")
    assert main(["synth", "--config", str(cfg_path)]) == 0
    return base, str(cfg_path)


def test_synth_writes_corpus(workspace):
    base, _ = workspace
    assert (base / "corpus" / "vocabulary.txt").is_file()
    assert (base / "corpus" / "train" / "meta.txt").is_file()
    assert (base / "corpus" / "eval" / "meta.txt").is_file()


def test_synth_needs_destination():
    assert main(["synth"]) == 1


def test_featurize(workspace, capsys):
    base, cfg = workspace
    assert main(["featurize", "--config", cfg, "--out", str(base / "feats")]) == 0
    assert "6 feature files" in capsys.readouterr().out
    assert (base / "feats" / "features" / "train").is_dir()


def test_train_writes_artifacts(workspace, capsys):
    base, cfg = workspace
    assert main(["train", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "objective curriculum, seed 0" in out
    for name in ("checkpoint.bin", "trainlog.csv", "timings.csv", "metrics.json"):
        assert (base / "run" / name).is_file(), name


def test_train_seed_flag_changes_run(workspace):
    base, cfg = workspace
    assert main(["train", "--config", cfg, "--out", str(base / "s0")]) == 0
    assert main(["train", "--config", cfg, "--seed", "1", "--out", str(base / "s1")]) == 0
    a = (base / "s0" / "checkpoint.bin").read_bytes()
    b = (base / "s1" / "checkpoint.bin").read_bytes()
    assert a != b


def test_evaluate_default_checkpoint(workspace, capsys):
    base, cfg = workspace
    main(["train", "--config", cfg])
    capsys.readouterr()
    assert main(["evaluate", "--config", cfg]) == 0
    assert "micro F" in capsys.readouterr().out
    doc = json.loads((base / "run" / "metrics.json").read_text())
    assert "micro_f" in doc  # evaluate owns metrics.json afterwards


def test_evaluate_threshold_one(workspace, capsys):
    base, cfg = workspace
    main(["train", "--config", cfg])
    capsys.readouterr()
    assert main(["evaluate", "--config", cfg, "--threshold", "1.0"]) == 0
    out = capsys.readouterr().out
    assert "micro F 0.0000" in out
    assert "micro ER 1.0000" in out


def test_evaluate_missing_checkpoint(workspace):
    _, cfg = workspace
    assert main(["evaluate", "--config", cfg, "--checkpoint", "/nonexistent.bin"]) == 2


def test_compare_and_report(workspace, capsys):
    base, cfg = workspace
    assert main(["compare", "--config", cfg, "--out", str(base / "cmp")]) == 0
    table = (base / "cmp" / "compare.csv").read_text().splitlines()
    assert len(table) == 3  # header + 2 variants
    capsys.readouterr()
    assert main(["report", "--out", str(base / "cmp")]) == 0
    out = capsys.readouterr().out
    assert "bce" in out and "curriculum" in out


def test_report_on_metrics_json(workspace, capsys):
    base, cfg = workspace
    main(["train", "--config", cfg])
    capsys.readouterr()
    assert main(["report", "--out", str(base / "run")]) == 0
    assert "micro F" in capsys.readouterr().out


def test_report_empty_dir(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 2


def test_usage_errors_exit_one():
    assert main([]) == 1
    assert main(["bogus"]) == 1
    assert main(["train", "--config", "/nonexistent.cfg"]) == 1


def test_unknown_config_key_exits_one(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("epoch = 3\n", encoding="utf-8")
    assert main(["train", "--config", str(bad)]) == 1


def test_missing_corpus_exits_two(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"corpus = {tmp_path/'nowhere'}\nout = {tmp_path/'o'}\n", encoding="utf-8")
    assert main(["train", "--config", str(cfg)]) == 2


def test_divergence_exits_three(workspace, tmp_path):
    base, _ = workspace
    cfg = tmp_path / "diverge.cfg"
    cfg.write_text(
        CFG_TEMPLATE.format(corpus=base / "corpus", out=tmp_path / "run")
        + "optimizer.lr = 1e150\n",
        encoding="utf-8",
    )
    assert main(["train", "--config", str(cfg)]) == 3


def test_help_exits_zero():
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
