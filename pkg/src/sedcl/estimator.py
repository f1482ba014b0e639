"""Scikit-learn style wrappers: a feature transformer and a detector.

These follow the fit/transform/predict conventions so the pieces compose
with sklearn pipelines and parameter search, while all of the actual
signal processing and training lives in the plain-function modules.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import features as feat
from . import metrics
from . import model as mdl
from .config import OptimizerConfig, objective_parts, VARIANTS
from .errors import ConfigError, DataError, ShapeError
from .runner import fit_arrays, frozen_forward


def as_waveform_list(X, name: str = "X") -> list:
    """Validate a batch of mono waveforms (sequence of 1-D float arrays)."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = list(X)
    if not hasattr(X, "__len__") or len(X) == 0:
        raise DataError(f"{name} must be a non-empty sequence of waveforms")
    out = []
    for i, wave in enumerate(X):
        arr = np.asarray(wave, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ShapeError(f"{name}[{i}] must be a non-empty 1-D waveform, got shape {arr.shape}")
        out.append(arr)
    return out


def as_matrix_list(X, name: str = "X", width: int | None = None) -> list:
    """Validate a batch of 2-D matrices, optionally with a fixed column count."""
    if isinstance(X, np.ndarray) and X.ndim == 3:
        X = list(X)
    if not hasattr(X, "__len__") or len(X) == 0:
        raise DataError(f"{name} must be a non-empty sequence of matrices")
    out = []
    for i, m in enumerate(X):
        arr = np.asarray(m, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"{name}[{i}] must be 2-D, got shape {arr.shape}")
        if width is not None and arr.shape[1] != width:
            raise ShapeError(f"{name}[{i}] has {arr.shape[1]} columns, expected {width}")
        out.append(arr)
    return out


class LogMelTransformer(TransformerMixin, BaseEstimator):
    """Mono waveforms to log-mel matrices, with per-band normalization.

    ``fit`` learns each band's mean and scale from the training
    waveforms; ``transform`` returns one [frames, n_mels] matrix per
    waveform.  With ``normalize=False`` the stats stay identity and the
    transform output is the raw log-mel energies.
    """

    def __init__(self, sample_rate: int = 16000, frame_len: float = 0.040,
                 frame_hop: float = 0.020, n_mels: int = 64, normalize: bool = True):
        self.sample_rate = sample_rate
        self.frame_len = frame_len
        self.frame_hop = frame_hop
        self.n_mels = n_mels
        self.normalize = normalize

    def _features(self, X) -> list:
        waves = as_waveform_list(X)
        return [
            feat.logmel(w, self.sample_rate, self.frame_len, self.frame_hop, self.n_mels)
            for w in waves
        ]

    def fit(self, X, y=None):
        mats = self._features(X)
        if self.normalize:
            self.mean_, self.scale_ = feat.feature_stats(mats)
        else:
            self.mean_ = np.zeros(self.n_mels)
            self.scale_ = np.ones(self.n_mels)
        return self

    def transform(self, X) -> list:
        check_is_fitted(self, "mean_")
        return [(m - self.mean_) / self.scale_ for m in self._features(X)]


class SEDClassifier(BaseEstimator):
    """Frame-wise sound event detector over log-mel inputs.

    ``X`` is a sequence of [frames, bands] feature matrices and ``y`` a
    sequence of [events, frames] binary activity matrices.  The band
    count and event count come from the data; everything else is a
    constructor parameter, so ``get_params``/``set_params`` cover the
    whole training recipe.  Curriculum objectives additionally need
    ``flags`` (per-clip binary class vectors) and scene-classification
    objectives need ``scenes`` (per-clip integer labels) passed to
    ``fit``.
    """

    def __init__(self, conv_channels=(128, 128, 128), pools=((8, 1), (2, 1), (2, 1)),
                 gru_units: int = 32, fc_units: int = 32, objective: str = "bce",
                 epochs: int = 30, batch_size: int = 8, lr: float = 1e-3,
                 lam: float = 2.0, beta: float = 0.5, threshold: float = 0.5,
                 seed: int = 0):
        self.conv_channels = conv_channels
        self.pools = pools
        self.gru_units = gru_units
        self.fc_units = fc_units
        self.objective = objective
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lam = lam
        self.beta = beta
        self.threshold = threshold
        self.seed = seed

    def fit(self, X, y, flags=None, scenes=None):
        if self.objective not in VARIANTS:
            raise ConfigError(
                f"unknown objective {self.objective!r}; choose one of {', '.join(VARIANTS)}"
            )
        feats = as_matrix_list(X, "X")
        targets = as_matrix_list(y, "y")
        if len(feats) != len(targets):
            raise DataError(f"{len(feats)} feature matrices but {len(targets)} targets")
        n_events = targets[0].shape[0]
        for i, (m, z) in enumerate(zip(feats, targets)):
            if z.shape != (n_events, m.shape[0]):
                raise ShapeError(
                    f"y[{i}] has shape {z.shape}, expected ({n_events}, {m.shape[0]})"
                )
        _, aux = objective_parts(self.objective)
        n_scenes = 0
        scene_ids = None
        if scenes is not None:
            scene_ids = [int(s) for s in scenes]
            if len(scene_ids) != len(feats) or min(scene_ids) < 0:
                raise DataError("scenes must give one non-negative index per clip")
            n_scenes = max(scene_ids) + 1
        flag_rows = None
        if flags is not None:
            flag_rows = [np.asarray(f, dtype=np.float64) for f in flags]
            if len(flag_rows) != len(feats) or any(f.shape != (n_events,) for f in flag_rows):
                raise ShapeError(f"flags must give one length-{n_events} vector per clip")

        cfg = mdl.ModelConfig(
            n_mels=feats[0].shape[1],
            conv_channels=tuple(self.conv_channels),
            pools=tuple(tuple(p) for p in self.pools),
            gru_units=self.gru_units,
            fc_units=self.fc_units,
            n_events=n_events,
            enable_sad_head=aux == "sad",
            enable_asc_head=aux == "asc",
            n_scenes=n_scenes,
        ).validate()
        result = fit_arrays(
            cfg,
            self.objective,
            feats,
            targets,
            flag_rows,
            scene_ids,
            epochs=self.epochs,
            batch_size=self.batch_size,
            lam=self.lam,
            beta=self.beta,
            optimizer=OptimizerConfig(lr=self.lr),
            seed=self.seed,
        )
        self.params_ = result.params
        self.config_ = cfg
        self.n_events_ = n_events
        self.train_loss_ = [loss for _, _, loss in result.epochs]
        return self

    def decision_function(self, X) -> list:
        """Per-clip frame logits, shape [events, frames] each."""
        check_is_fitted(self, "params_")
        feats = as_matrix_list(X, "X", width=self.config_.n_mels)
        out = [None] * len(feats)
        i = 0
        while i < len(feats):  # batch runs of equally-shaped clips
            j = i + 1
            while j < len(feats) and j - i < 8 and feats[j].shape == feats[i].shape:
                j += 1
            logits = frozen_forward(self.params_, np.stack(feats[i:j])).y.data
            for k in range(i, j):
                out[k] = logits[k - i]
            i = j
        return out

    def predict_proba(self, X) -> list:
        """Per-clip frame-wise event probabilities."""
        probs = []
        for logits in self.decision_function(X):
            with np.errstate(over="ignore"):
                probs.append(np.where(logits >= 0, 1.0 / (1.0 + np.exp(-logits)),
                                      np.exp(logits) / (1.0 + np.exp(logits))))
        return probs

    def predict(self, X) -> list:
        """Per-clip binary activity at the configured threshold."""
        return [mdl.predict(y, self.threshold) for y in self.decision_function(X)]

    def score(self, X, y) -> float:
        """Micro-averaged F-score over the given clips."""
        targets = as_matrix_list(y, "y")
        preds = self.predict(X)
        refs = {str(i): t.astype(np.uint8) for i, t in enumerate(targets)}
        hyps = {str(i): p for i, p in enumerate(preds)}
        labels = [f"class{n:02d}" for n in range(self.n_events_)]
        return metrics.evaluate_corpus(refs, hyps, labels).micro_f
