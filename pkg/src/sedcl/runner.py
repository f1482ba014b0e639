"""Experiment orchestration: featurize, train, evaluate, compare.

File layout of a run directory:
  checkpoint.bin   model weights plus feature normalization stats
  trainlog.csv     epoch, alpha, loss  (fully reproducible columns)
  timings.csv      epoch, seconds      (wall time, excluded from the
                   determinism contract on purpose)
  metrics.json     final report per split

Reproducibility contract: (config, seed) determines checkpoint.bin,
trainlog.csv and metrics.json byte for byte.  Wall-clock goes to its own
file so the promise stays checkable with a plain byte comparison.
"""

import dataclasses
import json
import math
import os
import time

import numpy as np

from . import annotations as ann
from . import features as feat
from . import losses
from . import metrics
from . import model as mdl
from .config import ExperimentConfig, OptimizerConfig, objective_parts, resolve_model
from .errors import ConfigError, DataError, NumericalError
from .optim import Adam

# Analysis framing; fixed for every experiment (40 ms windows, 20 ms hop).
FRAME_LEN = 0.040
FRAME_HOP = 0.020


@dataclasses.dataclass
class SplitData:
    """One split held in memory: parallel lists in meta-file order."""

    records: list
    feats: dict  # clip_id -> [T, n_mels] raw log-mel
    targets: dict  # clip_id -> [n_events, T] uint8


@dataclasses.dataclass
class CorpusData:
    vocab: list
    splits: dict  # split name -> SplitData

    def split(self, name: str) -> SplitData:
        if name not in self.splits:
            raise DataError(f"split {name!r} not loaded; have {sorted(self.splits)}")
        return self.splits[name]


def load_split_data(corpus: str, split: str, vocab: list, n_mels: int) -> SplitData:
    vocab_set = set(vocab)
    records = ann.load_corpus_split(corpus, split)
    feats, targets = {}, {}
    for rec in records:
        rec.validate(vocab_set)
        wave, sr = feat.read_wav(rec.audio_path)
        m = feat.logmel(wave, sr, FRAME_LEN, FRAME_HOP, n_mels)
        feats[rec.clip_id] = m
        targets[rec.clip_id] = ann.make_target_matrix(rec, vocab, m.shape[0], FRAME_HOP)
    return SplitData(records, feats, targets)


def load_corpus_data(corpus: str, n_mels: int, splits=("train", "eval")) -> CorpusData:
    if not corpus:
        raise ConfigError("no corpus path configured")
    vocab = ann.load_vocabulary(corpus)
    return CorpusData(
        vocab, {split: load_split_data(corpus, split, vocab, n_mels) for split in splits}
    )


def featurize(corpus: str, out_dir: str, n_mels: int, splits=("train", "eval")) -> int:
    """Write per-clip feature files; returns the number of clips done."""
    data = load_corpus_data(corpus, n_mels, splits)
    written = 0
    for split in splits:
        split_dir = os.path.join(out_dir, "features", split)
        os.makedirs(split_dir, exist_ok=True)
        for clip_id, m in sorted(data.split(split).feats.items()):
            feat.save_features(os.path.join(split_dir, clip_id + ".feat"), m)
            written += 1
    return written


@dataclasses.dataclass
class FitResult:
    params: mdl.ModelParams
    epochs: list  # (epoch, alpha, mean train loss) triples
    seconds: list  # wall time per epoch, same order


def epoch_alpha(epoch: int, epochs: int, lam: float) -> float:
    # Single-epoch runs sit at the top of the ramp; otherwise the ramp
    # spans epochs 0..epochs-1 and hits exactly 0 and 1 at the ends.
    if epochs == 1:
        return 1.0
    return losses.alpha_schedule(epoch, epochs - 1, lam)


def fit_arrays(
    model_cfg: mdl.ModelConfig,
    objective: str,
    feats: list,
    targets: list,
    flags: list | None = None,
    scene_ids=None,
    *,
    epochs: int,
    batch_size: int,
    lam: float = 2.0,
    beta: float = 0.5,
    optimizer: OptimizerConfig | None = None,
    seed: int = 0,
) -> FitResult:
    """Train a model on in-memory arrays; the core shared by every entry point.

    feats[i] is [T, n_mels]; targets[i] is [n_events, T]; flags[i] (needed
    by curriculum objectives) is the per-clip scene-event vector; scene_ids[i]
    (needed by the scene-classification auxiliary) is an integer.
    """
    primary, aux = objective_parts(objective)
    n_clips = len(feats)
    if n_clips == 0:
        raise DataError("no training clips")
    if len(targets) != n_clips:
        raise DataError(f"{n_clips} feature matrices but {len(targets)} target matrices")
    if primary == "curriculum" and flags is None:
        raise ConfigError("curriculum objectives need per-clip event flags")
    if aux == "asc" and scene_ids is None:
        raise ConfigError("scene-classification objectives need per-clip scene indices")
    if epochs < 1 or batch_size < 1:
        raise ConfigError(f"epochs={epochs} and batch_size={batch_size} must be >= 1")

    opt_cfg = (optimizer or OptimizerConfig()).validate()
    mp = mdl.init_params(model_cfg, seed)
    opt = Adam(mp.tensors, opt_cfg.lr, opt_cfg.beta1, opt_cfg.beta2, opt_cfg.eps)
    epoch_rows, epoch_seconds = [], []
    for s in range(epochs):
        alpha = epoch_alpha(s, epochs, lam)
        order = np.random.default_rng([seed, s]).permutation(n_clips)
        start_time = time.perf_counter()
        batch_terms = []
        for start in range(0, n_clips, batch_size):
            idx = order[start : start + batch_size]
            x = np.stack([feats[i] for i in idx])
            z = np.stack([targets[i] for i in idx]).astype(np.float64)
            try:
                # divergence surfaces as the ops' finiteness errors, so the
                # underlying overflow warnings are just noise
                with np.errstate(over="ignore", invalid="ignore"):
                    out = mdl.forward(mp, x)
                    if primary == "curriculum":
                        f = np.stack([flags[i] for i in idx])
                        loss = losses.curriculum_loss(out.y, z, f, alpha)
                    else:
                        loss = losses.bce(out.y, z)
                    if aux == "sad":
                        loss = losses.combined_loss(loss, losses.sad_loss(out.sad, z), beta)
                    elif aux == "asc":
                        scenes = np.asarray([scene_ids[i] for i in idx], dtype=np.int64)
                        loss = losses.combined_loss(loss, losses.asc_loss(out.asc, scenes), beta)
                    opt.zero_grad()
                    loss.scalar.backward()
                    opt.step()
            except NumericalError as exc:
                raise NumericalError(
                    f"non-finite value at epoch {s}, batch {start // batch_size}: {exc}"
                ) from exc
            batch_terms.append(loss.item() * len(idx))
        epoch_rows.append((s, alpha, math.fsum(batch_terms) / n_clips))
        epoch_seconds.append(time.perf_counter() - start_time)
    return FitResult(mp, epoch_rows, epoch_seconds)


def frozen_forward(mp: mdl.ModelParams, x: np.ndarray) -> mdl.FrameLogits:
    # Inference: freezing parameters stops the tape from recording, which
    # skips closure bookkeeping and frees memory as soon as values die.
    saved = [(t, t.requires_grad) for t in mp.tensors.values()]
    try:
        for t, _ in saved:
            t.requires_grad = False
        return mdl.forward(mp, x)
    finally:
        for t, was in saved:
            t.requires_grad = was


def predict_split(mp: mdl.ModelParams, split: SplitData, threshold: float,
                  batch_size: int = 8) -> dict:
    """Thresholded event activity per clip, keyed like the split's targets."""
    groups = []  # runs of consecutive clips with equal frame counts
    for clip_id in sorted(split.feats):
        shape = split.feats[clip_id].shape
        if groups and groups[-1][0] == shape:
            groups[-1][1].append(clip_id)
        else:
            groups.append((shape, [clip_id]))
    preds = {}
    for _, ids in groups:
        for start in range(0, len(ids), batch_size):
            block = ids[start : start + batch_size]
            logits = frozen_forward(mp, np.stack([split.feats[c] for c in block])).y.data
            for row, clip_id in enumerate(block):
                preds[clip_id] = mdl.predict(logits[row], threshold)
    return preds


def _stats_from(split: SplitData):
    ordered = [split.feats[c] for c in sorted(split.feats)]
    return feat.feature_stats(ordered)


def _normalized(split: SplitData, mean: np.ndarray, std: np.ndarray) -> SplitData:
    feats = {c: (m - mean) / std for c, m in split.feats.items()}
    return SplitData(split.records, feats, split.targets)


def _csv_text(header: str, rows: list) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _write(path: str, text: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _report_payload(report: metrics.MetricsReport) -> dict:
    return {
        "micro_f": report.micro_f,
        "macro_f": report.macro_f,
        "micro_er": report.micro_er,
        "macro_er": report.macro_er,
        "per_class": report.per_class,
    }


def run_train(cfg: ExperimentConfig, seed: int, out_dir: str,
              data: CorpusData | None = None):
    """One training run; writes artifacts and returns (FitResult, reports)."""
    cfg.validate()
    if data is None:
        data = load_corpus_data(cfg.corpus, cfg.model.n_mels)
    train = data.split("train")
    scene_map = ann.build_scene_event_map(train.records)
    scene_names = sorted(scene_map)
    model_cfg = resolve_model(cfg, cfg.objective, len(data.vocab), len(scene_names))

    mean, std = _stats_from(train)
    norm_train = _normalized(train, mean, std)
    order = [rec.clip_id for rec in train.records]
    flags = [
        ann.make_event_flags(rec.scene, scene_map, data.vocab).astype(np.float64)
        for rec in train.records
    ]
    scene_ids = [scene_names.index(rec.scene) for rec in train.records]
    fit = fit_arrays(
        model_cfg,
        cfg.objective,
        [norm_train.feats[c] for c in order],
        [norm_train.targets[c] for c in order],
        flags,
        scene_ids,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        lam=cfg.lam,
        beta=cfg.beta,
        optimizer=cfg.optimizer,
        seed=seed,
    )

    os.makedirs(out_dir, exist_ok=True)
    mdl.save_checkpoint(
        os.path.join(out_dir, "checkpoint.bin"),
        fit.params,
        extra_config={"objective": cfg.objective},
        extra_tensors={"feat_mean": mean, "feat_std": std},
    )
    _write(os.path.join(out_dir, "trainlog.csv"), _csv_text("epoch,alpha,loss", fit.epochs))
    _write(
        os.path.join(out_dir, "timings.csv"),
        _csv_text("epoch,seconds", list(enumerate(fit.seconds))),
    )

    reports = {}
    for split_name in sorted(data.splits):
        split = _normalized(data.split(split_name), mean, std)
        preds = predict_split(fit.params, split, cfg.threshold, cfg.batch_size)
        reports[split_name] = metrics.evaluate_corpus(split.targets, preds, data.vocab)
    payload = {name: _report_payload(rep) for name, rep in reports.items()}
    _write(
        os.path.join(out_dir, "metrics.json"),
        json.dumps(payload, indent=2, sort_keys=True) + "\n",
    )
    return fit, reports


def run_evaluate(checkpoint_path: str, corpus: str, split: str = "eval",
                 threshold: float = 0.5, out_dir: str | None = None,
                 data: CorpusData | None = None) -> metrics.MetricsReport:
    """Score a saved checkpoint on one split; optionally write reports."""
    mp, _, extra = mdl.load_checkpoint(checkpoint_path)
    if "feat_mean" not in extra or "feat_std" not in extra:
        raise DataError(f"{checkpoint_path}: checkpoint lacks feature normalization stats")
    if data is None:
        vocab = ann.load_vocabulary(corpus)
        data = CorpusData(vocab, {split: load_split_data(corpus, split, vocab, mp.cfg.n_mels)})
    if len(data.vocab) != mp.cfg.n_events:
        raise DataError(
            f"checkpoint expects {mp.cfg.n_events} event classes, "
            f"corpus vocabulary has {len(data.vocab)}"
        )
    part = _normalized(data.split(split), extra["feat_mean"], extra["feat_std"])
    preds = predict_split(mp, part, threshold)
    report = metrics.evaluate_corpus(part.targets, preds, data.vocab)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write(os.path.join(out_dir, "metrics.json"), metrics.report_to_json(report))
        _write(os.path.join(out_dir, "metrics.csv"), metrics.report_to_csv(report))
    return report


COMPARE_HEADER = (
    "variant,runs,micro_f_mean,micro_f_std,macro_f_mean,macro_f_std,"
    "micro_er_mean,micro_er_std,macro_er_mean,macro_er_std,status"
)


def run_compare(cfg: ExperimentConfig, out_dir: str,
                data: CorpusData | None = None):
    """Train/evaluate every configured variant per seed; write compare.csv.

    Returns (rows, ok).  A failed run marks its variant's row and flips
    ok to False instead of aborting the remaining runs.
    """
    cfg.validate()
    if data is None:
        data = load_corpus_data(cfg.corpus, cfg.model.n_mels)
    rows = []
    ok = True
    for variant in cfg.variants:
        _, aux = objective_parts(variant)
        seeds = cfg.aux_seeds if (aux and cfg.aux_seeds is not None) else cfg.seeds
        scores = []
        failures = []
        for seed in seeds:
            run_dir = os.path.join(out_dir, "runs", f"{variant.replace('+', '_')}_seed{seed}")
            try:
                vcfg = dataclasses.replace(cfg, objective=variant)
                _, reports = run_train(vcfg, seed, run_dir, data=data)
                rep = reports["eval"]
                scores.append((rep.micro_f, rep.macro_f, rep.micro_er, rep.macro_er))
            except Exception as exc:  # a run failure must not sink the table
                ok = False
                failures.append(f"seed {seed}: {exc}")
        if scores:
            values = np.array(scores)
            cells = []
            for col in range(4):
                cells += [float(values[:, col].mean()), float(values[:, col].std())]
        else:
            cells = [""] * 8
        status = "ok" if not failures else "failed " + "; ".join(failures)
        rows.append([variant, len(scores)] + cells + [status.replace(",", ";")])
    _write(os.path.join(out_dir, "compare.csv"), _csv_text(COMPARE_HEADER, rows))
    return rows, ok
