"""Config file parsing and experiment-level validation."""

import pytest

from sedcl.config import (
    VARIANTS,
    ExperimentConfig,
    load_config,
    objective_parts,
    parse_config,
    resolve_model,
)
from sedcl.errors import ConfigError


FULL = """
# experiment
corpus = /data/corpus
out = /data/run
objective = curriculum+asc
epochs = 12
batch_size = 4
lambda = 1.5
beta = 0.25
threshold = 0.4
seeds = 3,1,2

optimizer.lr = 0.002
optimizer.beta1 = 0.8
optimizer.beta2 = 0.95
optimizer.eps = 1e-7

model.n_mels = 32
model.conv_channels = 8,8
model.pools = 8x1,2x1
model.gru_units = 12
model.fc_units = 24

synth.n_scenes = 3
synth.clips_per_scene = 7
synth.snr_db = 0.0

compare.variants = bce,curriculum
compare.aux_seeds = 9
"""


def test_defaults():
    cfg = parse_config("")
    assert cfg.objective == "bce"
    assert cfg.epochs == 30
    assert cfg.batch_size == 8
    assert cfg.lam == 2.0
    assert cfg.seeds == (0,)
    assert cfg.aux_seeds is None
    assert cfg.variants == VARIANTS
    assert cfg.optimizer.lr == 1e-3
    assert cfg.optimizer.beta1 == 0.9
    assert cfg.optimizer.beta2 == 0.999
    assert cfg.optimizer.eps == 1e-8
    assert cfg.model.n_mels == 64
    assert cfg.synth.n_scenes == 4


def test_full_file_round_trip():
    cfg = parse_config(FULL, source="full.cfg")
    assert cfg.corpus == "/data/corpus"
    assert cfg.objective == "curriculum+asc"
    assert cfg.epochs == 12
    assert cfg.lam == 1.5
    assert cfg.beta == 0.25
    assert cfg.threshold == 0.4
    assert cfg.seeds == (3, 1, 2)
    assert cfg.aux_seeds == (9,)
    assert cfg.variants == ("bce", "curriculum")
    assert cfg.optimizer.lr == 0.002
    assert cfg.model.conv_channels == (8, 8)
    assert cfg.model.pools == ((8, 1), (2, 1))
    assert cfg.synth.n_scenes == 3
    assert cfg.synth.clips_per_scene == 7
    assert cfg.synth.snr_db == 0.0


def test_comments_and_blank_lines_ignored():
    cfg = parse_config("# only comments\n\n   \n# epochs = 9\n")
    assert cfg.epochs == 30


def test_unknown_key_rejected_with_location():
    with pytest.raises(ConfigError, match=r"exp\.cfg:2.*epoch"):
        parse_config("objective = bce\nepoch = 3\n", source="exp.cfg")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="twice"):
        parse_config("epochs = 3\nepochs = 4\n")


def test_missing_equals_rejected():
    with pytest.raises(ConfigError, match="key = value"):
        parse_config("epochs 3\n")


def test_derived_model_sizes_are_not_config_keys():
    # event/scene counts always come from the corpus
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("model.n_events = 10\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("model.n_scenes = 4\n")


@pytest.mark.parametrize(
    "line,fragment",
    [
        ("objective = focal", "focal"),
        ("epochs = 0", "epochs"),
        ("epochs = 2.5", "bad value"),
        ("batch_size = 0", "batch_size"),
        ("lambda = 0", "lambda"),
        ("lambda = nan", "bad value"),
        ("beta = -0.5", "beta"),
        ("seeds = ", "bad value"),
        ("compare.variants = bce,bogus", "bogus"),
        ("compare.variants = bce,bce", "twice"),
        ("model.pools = 4,2", "FREQxTIME"),
        ("model.enable_sad_head = maybe", "true/false"),
        ("optimizer.kind = sgd", "sgd"),
        ("optimizer.lr = 0", "lr"),
    ],
)
def test_bad_values_rejected(line, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(line + "\n")


def test_value_may_contain_equals_sign():
    cfg = parse_config("corpus = /data/x=y\n")
    assert cfg.corpus == "/data/x=y"


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/exp.cfg")


def test_load_config_reads_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("epochs = 5\n", encoding="utf-8")
    assert load_config(str(path)).epochs == 5


@pytest.mark.parametrize(
    "objective,primary,aux",
    [
        ("bce", "bce", None),
        ("curriculum", "curriculum", None),
        ("bce+sad", "bce", "sad"),
        ("curriculum+asc", "curriculum", "asc"),
    ],
)
def test_objective_parts(objective, primary, aux):
    assert objective_parts(objective) == (primary, aux)


def test_resolve_model_fills_corpus_sizes_and_heads():
    cfg = parse_config("model.n_mels = 16\nmodel.conv_channels = 4,4\nmodel.pools = 4x1,2x1\n")
    plain = resolve_model(cfg, "bce", n_events=7, n_scenes=3)
    assert plain.n_events == 7
    assert plain.n_scenes == 3
    assert not plain.enable_sad_head and not plain.enable_asc_head
    with_asc = resolve_model(cfg, "curriculum+asc", n_events=7, n_scenes=3)
    assert with_asc.enable_asc_head and not with_asc.enable_sad_head
    with_sad = resolve_model(cfg, "bce+sad", n_events=7, n_scenes=3)
    assert with_sad.enable_sad_head and not with_sad.enable_asc_head


def test_resolve_model_conflicting_explicit_head():
    cfg = parse_config("model.enable_asc_head = false\n")
    with pytest.raises(ConfigError, match="scene head"):
        resolve_model(cfg, "bce+asc", n_events=5, n_scenes=4)
    cfg = parse_config("model.enable_sad_head = false\n")
    with pytest.raises(ConfigError, match="activity head"):
        resolve_model(cfg, "bce+sad", n_events=5, n_scenes=4)


def test_resolve_model_extra_head_allowed():
    # an explicitly enabled head the objective does not use is just dead weight
    cfg = parse_config("model.enable_sad_head = true\n")
    assert resolve_model(cfg, "bce", n_events=5, n_scenes=2).enable_sad_head


def test_asc_objective_needs_enough_scenes():
    cfg = ExperimentConfig()
    with pytest.raises(ConfigError, match="n_scenes"):
        resolve_model(cfg, "bce+asc", n_events=5, n_scenes=1)
