"""Experiment configuration files.

Configs are flat UTF-8 text, one ``key = value`` per line, with dotted
keys for the nested sections (``model.gru_units = 32``).  Blank lines and
``#`` comments are ignored.  Unknown and duplicated keys are errors so
that typos fail loudly instead of silently training the wrong thing.
"""

from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .model import ModelConfig
from .synth import CorpusSpec

# Objective variants, in comparison-table order: the two single-task
# objectives first, then each combined with an auxiliary head.
VARIANTS = (
    "bce",
    "curriculum",
    "bce+sad",
    "bce+asc",
    "curriculum+sad",
    "curriculum+asc",
)


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self) -> "OptimizerConfig":
        if self.kind != "adam":
            raise ConfigError(f"unsupported optimizer kind {self.kind!r} (only adam)")
        if self.lr <= 0 or not (0 <= self.beta1 < 1) or not (0 <= self.beta2 < 1) or self.eps <= 0:
            raise ConfigError(
                f"bad optimizer hyperparameters lr={self.lr} beta1={self.beta1} "
                f"beta2={self.beta2} eps={self.eps}"
            )
        return self


@dataclass
class ExperimentConfig:
    """One experiment: corpus paths, objective, model and training knobs."""

    corpus: str = ""
    out: str = ""
    objective: str = "bce"
    epochs: int = 30
    batch_size: int = 8
    lam: float = 2.0  # config key "lambda"; curriculum ramp exponent
    beta: float = 0.5  # weight on the auxiliary objective
    threshold: float = 0.5
    seeds: tuple = (0,)
    # Seeds for the auxiliary-head variants in `compare`; None = same as seeds.
    aux_seeds: tuple | None = None
    variants: tuple = VARIANTS
    # None = enable automatically when the objective needs the head.
    sad_head: bool | None = None
    asc_head: bool | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    synth: CorpusSpec = field(default_factory=CorpusSpec)

    def validate(self) -> "ExperimentConfig":
        if self.objective not in VARIANTS:
            raise ConfigError(
                f"unknown objective {self.objective!r}; choose one of {', '.join(VARIANTS)}"
            )
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lam <= 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if self.aux_seeds is not None and not self.aux_seeds:
            raise ConfigError("compare.aux_seeds must not be empty when set")
        if not self.variants:
            raise ConfigError("compare.variants must not be empty")
        self.optimizer.validate()
        return self


def objective_parts(objective: str) -> tuple:
    """Split an objective into (primary, auxiliary-or-None)."""
    primary, _, aux = objective.partition("+")
    return primary, aux or None


def resolve_model(cfg: ExperimentConfig, objective: str, n_events: int,
                  n_scenes: int) -> ModelConfig:
    """Corpus-derived model configuration for one training run.

    Event and scene counts always come from the corpus.  Auxiliary heads
    are switched on when the objective needs them; an explicit
    ``model.enable_*_head = false`` conflicting with the objective is an
    error rather than a silently ignored setting.
    """
    _, aux = objective_parts(objective)
    need_sad, need_asc = aux == "sad", aux == "asc"
    if cfg.sad_head is False and need_sad:
        raise ConfigError(f"objective {objective!r} requires the activity head")
    if cfg.asc_head is False and need_asc:
        raise ConfigError(f"objective {objective!r} requires the scene head")
    return replace(
        cfg.model,
        n_events=n_events,
        n_scenes=n_scenes,
        enable_sad_head=need_sad or bool(cfg.sad_head),
        enable_asc_head=need_asc or bool(cfg.asc_head),
    ).validate()


def _to_int(value: str) -> int:
    return int(value, 10)


def _to_float(value: str) -> float:
    out = float(value)
    if out != out:
        raise ValueError("nan is not a valid config value")
    return out


_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _to_bool(value: str) -> bool:
    try:
        return _BOOL_WORDS[value.lower()]
    except KeyError:
        raise ValueError(f"expected true/false, got {value!r}") from None


def _to_ints(value: str) -> tuple:
    items = tuple(int(part.strip(), 10) for part in value.split(",") if part.strip())
    if not items:
        raise ValueError("expected a comma-separated list of integers")
    return items


def _to_pools(value: str) -> tuple:
    # "8x1,2x1,2x1" -> ((8, 1), (2, 1), (2, 1))
    pools = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        freq, sep, time = part.partition("x")
        if not sep:
            raise ValueError(f"pool {part!r} is not of the form FREQxTIME")
        pools.append((int(freq, 10), int(time, 10)))
    if not pools:
        raise ValueError("expected a comma-separated list of FREQxTIME pools")
    return tuple(pools)


def _to_variants(value: str) -> tuple:
    items = tuple(part.strip() for part in value.split(",") if part.strip())
    if not items:
        raise ValueError("expected a comma-separated list of objectives")
    for item in items:
        if item not in VARIANTS:
            raise ValueError(f"unknown objective {item!r}")
    if len(set(items)) != len(items):
        raise ValueError("objective listed twice")
    return items


# key -> (section attribute or "", field name, converter).  n_events and
# n_scenes are deliberately absent: they always come from the corpus.
_KEYS = {
    "corpus": ("", "corpus", str),
    "out": ("", "out", str),
    "objective": ("", "objective", str),
    "epochs": ("", "epochs", _to_int),
    "batch_size": ("", "batch_size", _to_int),
    "lambda": ("", "lam", _to_float),
    "beta": ("", "beta", _to_float),
    "threshold": ("", "threshold", _to_float),
    "seeds": ("", "seeds", _to_ints),
    "compare.aux_seeds": ("", "aux_seeds", _to_ints),
    "compare.variants": ("", "variants", _to_variants),
    "model.enable_sad_head": ("", "sad_head", _to_bool),
    "model.enable_asc_head": ("", "asc_head", _to_bool),
    "optimizer.kind": ("optimizer", "kind", str),
    "optimizer.lr": ("optimizer", "lr", _to_float),
    "optimizer.beta1": ("optimizer", "beta1", _to_float),
    "optimizer.beta2": ("optimizer", "beta2", _to_float),
    "optimizer.eps": ("optimizer", "eps", _to_float),
    "model.n_mels": ("model", "n_mels", _to_int),
    "model.conv_channels": ("model", "conv_channels", _to_ints),
    "model.pools": ("model", "pools", _to_pools),
    "model.gru_units": ("model", "gru_units", _to_int),
    "model.fc_units": ("model", "fc_units", _to_int),
    "synth.n_scenes": ("synth", "n_scenes", _to_int),
    "synth.events_per_scene": ("synth", "events_per_scene", _to_int),
    "synth.shared_events": ("synth", "shared_events", _to_int),
    "synth.clips_per_scene": ("synth", "clips_per_scene", _to_int),
    "synth.eval_clips_per_scene": ("synth", "eval_clips_per_scene", _to_int),
    "synth.clip_seconds": ("synth", "clip_seconds", _to_float),
    "synth.sample_rate": ("synth", "sample_rate", _to_int),
    "synth.event_rate": ("synth", "event_rate", _to_float),
    "synth.snr_db": ("synth", "snr_db", _to_float),
    "synth.seed": ("synth", "seed", _to_int),
}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate one configuration file's text."""
    cfg = ExperimentConfig()
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: key {key!r} set twice")
        seen.add(key)
        section, name, convert = _KEYS[key]
        try:
            converted = convert(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
        target = getattr(cfg, section) if section else cfg
        setattr(target, name, converted)
    return cfg.validate()


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=path)
