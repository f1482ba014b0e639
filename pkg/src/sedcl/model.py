"""CNN-BiGRU frame classifier with optional activity and scene heads.

The trunk is three 3x3 conv layers (ReLU, frequency-only max pooling
after each), a bidirectional GRU over time, and a shared ReLU FC layer.
The event head scores every class per frame; the optional SAD head
scores overall activity per frame and the optional ASC head scores the
clip's scene from the time-averaged FC output.

Pooling never touches the time axis, so a [T x n_mels] input always
yields [n_events x T] logits.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DataError, ShapeError

CHECKPOINT_MAGIC = b"SEDM"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    n_mels: int = 64
    conv_channels: tuple = (128, 128, 128)
    pools: tuple = ((8, 1), (2, 1), (2, 1))
    gru_units: int = 32  # per direction; 0 disables the recurrent layer
    fc_units: int = 32
    n_events: int = 25
    enable_sad_head: bool = False
    enable_asc_head: bool = False
    n_scenes: int = 0

    def validate(self) -> "ModelConfig":
        if self.n_mels < 1 or self.fc_units < 1 or self.n_events < 1:
            raise ConfigError(f"all sizes must be >= 1: {self}")
        if self.gru_units < 0:
            raise ConfigError(f"gru_units must be >= 0, got {self.gru_units}")
        if len(self.conv_channels) != len(self.pools) or not self.conv_channels:
            raise ConfigError("conv_channels and pools must be equal-length and non-empty")
        if any(c < 1 for c in self.conv_channels):
            raise ConfigError(f"conv channel counts must be >= 1: {self.conv_channels}")
        freq = self.n_mels
        for pf, pt in self.pools:
            if pt != 1:
                raise ConfigError(f"pooling must leave the time axis alone, got {(pf, pt)}")
            if pf < 1 or freq % pf:
                raise ConfigError(
                    f"pool frequency factors {[p[0] for p in self.pools]} "
                    f"do not divide n_mels={self.n_mels}"
                )
            freq //= pf
        if self.enable_asc_head and self.n_scenes < 2:
            raise ConfigError("the scene head needs n_scenes >= 2")
        return self

    @property
    def freq_out(self) -> int:
        f = self.n_mels
        for pf, _ in self.pools:
            f //= pf
        return f

    @property
    def flatten_width(self) -> int:
        return self.freq_out * self.conv_channels[-1]

    @property
    def trunk_width(self) -> int:
        return 2 * self.gru_units if self.gru_units else self.flatten_width


@dataclass
class ModelParams:
    cfg: ModelConfig
    seed: int
    tensors: dict = field(default_factory=dict)  # name -> Tensor, creation order

    def data(self) -> dict:
        return {name: t.data for name, t in self.tensors.items()}


@dataclass
class FrameLogits:
    y: ad.Tensor  # [B, n_events, T]
    sad: ad.Tensor | None = None  # [B, 1, T]
    asc: ad.Tensor | None = None  # [B, n_scenes]


def _glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, reproducible per seed."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    mp = ModelParams(cfg, seed)

    def param(name, values):
        mp.tensors[name] = ad.parameter(values)

    cin = 1
    for k, cout in enumerate(cfg.conv_channels):
        param(f"conv{k}_w", _glorot(rng, (cout, cin, 3, 3), cin * 9, cout * 9))
        param(f"conv{k}_b", np.zeros(cout))
        cin = cout
    if cfg.gru_units:
        d, h = cfg.flatten_width, cfg.gru_units
        for direction in ("fw", "bw"):
            param(f"gru_{direction}_wx", _glorot(rng, (d, 3 * h), d, 3 * h))
            param(f"gru_{direction}_wh", _glorot(rng, (h, 3 * h), h, 3 * h))
            param(f"gru_{direction}_b", np.zeros(3 * h))
    param("fc_w", _glorot(rng, (cfg.trunk_width, cfg.fc_units), cfg.trunk_width, cfg.fc_units))
    param("fc_b", np.zeros(cfg.fc_units))
    param("out_w", _glorot(rng, (cfg.fc_units, cfg.n_events), cfg.fc_units, cfg.n_events))
    param("out_b", np.zeros(cfg.n_events))
    if cfg.enable_sad_head:
        param("sad_w", _glorot(rng, (cfg.fc_units, 1), cfg.fc_units, 1))
        param("sad_b", np.zeros(1))
    if cfg.enable_asc_head:
        param("asc_w", _glorot(rng, (cfg.fc_units, cfg.n_scenes), cfg.fc_units, cfg.n_scenes))
        param("asc_b", np.zeros(cfg.n_scenes))
    return mp


def forward(mp: ModelParams, x) -> FrameLogits:
    """Batched forward pass: x is [B, T, n_mels] (array or tensor)."""
    cfg = mp.cfg
    x = x if isinstance(x, ad.Tensor) else ad.Tensor(x)
    if x.data.ndim != 3 or x.shape[2] != cfg.n_mels:
        raise ShapeError(
            f"forward: expected [batch, frames, {cfg.n_mels}] features, got {x.shape}"
        )
    p = mp.tensors
    bsz, frames, _ = x.shape

    h = ad.reshape(ad.transpose(x, (0, 2, 1)), (bsz, 1, cfg.n_mels, frames))
    for k in range(len(cfg.conv_channels)):
        h = ad.relu(ad.conv2d(h, p[f"conv{k}_w"], p[f"conv{k}_b"]))
        h = ad.maxpool2d(h, cfg.pools[k])
    # [B, C, F', T] -> per-frame feature vectors [B, T, C*F']
    h = ad.reshape(ad.transpose(h, (0, 3, 1, 2)), (bsz, frames, cfg.flatten_width))
    if cfg.gru_units:
        fwd = ad.gru(h, p["gru_fw_wx"], p["gru_fw_wh"], p["gru_fw_b"])
        bwd = ad.gru(h, p["gru_bw_wx"], p["gru_bw_wh"], p["gru_bw_b"], reverse=True)
        h = ad.concat([fwd, bwd], axis=2)
    trunk = ad.relu(ad.matmul(h, p["fc_w"]) + p["fc_b"])
    y = ad.transpose(ad.matmul(trunk, p["out_w"]) + p["out_b"], (0, 2, 1))
    sad = asc = None
    if cfg.enable_sad_head:
        sad = ad.transpose(ad.matmul(trunk, p["sad_w"]) + p["sad_b"], (0, 2, 1))
    if cfg.enable_asc_head:
        asc = ad.matmul(trunk.mean(axis=1), p["asc_w"]) + p["asc_b"]
    return FrameLogits(y=y, sad=sad, asc=asc)


def forward_clip(mp: ModelParams, feats: np.ndarray) -> FrameLogits:
    """Single-clip convenience: [T, n_mels] in, [n_events, T] logits out."""
    out = forward(mp, feats[None, :, :])
    return FrameLogits(
        y=out.y[0],
        sad=None if out.sad is None else out.sad[0],
        asc=None if out.asc is None else out.asc[0],
    )


def predict(y, threshold: float = 0.5) -> np.ndarray:
    """Binary activity: active iff sigmoid(logit) strictly exceeds threshold."""
    values = y.data if isinstance(y, ad.Tensor) else np.asarray(y)
    if threshold <= 0.0:
        return np.ones(values.shape, dtype=np.uint8)
    if threshold >= 1.0:
        return np.zeros(values.shape, dtype=np.uint8)
    cut = np.log(threshold / (1.0 - threshold))
    return (values > cut).astype(np.uint8)


def _config_items(cfg: ModelConfig, seed: int) -> dict:
    return {
        "n_mels": str(cfg.n_mels),
        "conv_channels": ",".join(map(str, cfg.conv_channels)),
        "pools": ",".join(f"{pf}x{pt}" for pf, pt in cfg.pools),
        "gru_units": str(cfg.gru_units),
        "fc_units": str(cfg.fc_units),
        "n_events": str(cfg.n_events),
        "enable_sad_head": str(int(cfg.enable_sad_head)),
        "enable_asc_head": str(int(cfg.enable_asc_head)),
        "n_scenes": str(cfg.n_scenes),
        "seed": str(seed),
    }


def _config_from_items(items: dict) -> tuple[ModelConfig, int]:
    try:
        cfg = ModelConfig(
            n_mels=int(items["n_mels"]),
            conv_channels=tuple(int(v) for v in items["conv_channels"].split(",")),
            pools=tuple(
                tuple(int(v) for v in p.split("x")) for p in items["pools"].split(",")
            ),
            gru_units=int(items["gru_units"]),
            fc_units=int(items["fc_units"]),
            n_events=int(items["n_events"]),
            enable_sad_head=bool(int(items["enable_sad_head"])),
            enable_asc_head=bool(int(items["enable_asc_head"])),
            n_scenes=int(items["n_scenes"]),
        )
        return cfg, int(items["seed"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"checkpoint config block is incomplete or malformed: {exc}") from None


def save_checkpoint(path: str, mp: ModelParams, extra_config: dict | None = None,
                    extra_tensors: dict | None = None):
    """Versioned binary: config text block, then named float64 tensors."""
    items = _config_items(mp.cfg, mp.seed)
    for key, value in (extra_config or {}).items():
        if key in items:
            raise DataError(f"extra config key {key!r} collides with a model field")
        items[key] = str(value)
    config_blob = "".join(f"{k}={items[k]}\n" for k in sorted(items)).encode("utf-8")
    tensors = dict(mp.tensors)
    named = [(name, t.data) for name, t in tensors.items()]
    named += [(name, np.asarray(v, dtype=np.float64)) for name, v in (extra_tensors or {}).items()]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(config_blob)))
        fh.write(config_blob)
        fh.write(struct.pack("<I", len(named)))
        for name, values in named:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", values.ndim))
            fh.write(struct.pack(f"<{values.ndim}I", *values.shape))
            fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def load_checkpoint(path: str, expect_cfg: ModelConfig | None = None):
    """Read a checkpoint; returns (ModelParams, extra config, extra tensors).

    If ``expect_cfg`` is given, any difference from the stored model
    configuration is an error.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a model checkpoint")
    version, config_len = struct.unpack_from("<HI", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    pos = 10
    items = {}
    for line in blob[pos : pos + config_len].decode("utf-8").splitlines():
        key, _, value = line.partition("=")
        items[key] = value
    pos += config_len
    cfg, seed = _config_from_items(items)
    if expect_cfg is not None and cfg != expect_cfg:
        raise DataError(f"{path}: checkpoint config {cfg} does not match expected {expect_cfg}")
    (n_tensors,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    tensors = {}
    try:
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            values = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)
            pos += 8 * count
            tensors[name] = values.astype(np.float64)
    except (struct.error, ValueError):
        raise DataError(f"{path}: truncated or corrupt checkpoint") from None

    reference = init_params(cfg, seed)
    mp = ModelParams(cfg, seed)
    for name, ref in reference.tensors.items():
        if name not in tensors:
            raise DataError(f"{path}: checkpoint is missing tensor {name!r}")
        values = tensors.pop(name)
        if values.shape != ref.data.shape:
            raise DataError(
                f"{path}: tensor {name!r} has shape {values.shape}, "
                f"config implies {ref.data.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DataError(f"{path}: tensor {name!r} contains non-finite values")
        mp.tensors[name] = ad.parameter(values)
    extra_config = {k: v for k, v in items.items() if k not in _config_items(cfg, seed)}
    return mp, extra_config, tensors
