"""Segment-based detection metrics on the frame grid.

A segment is one hop-grid frame.  Counts pool over all evaluated clips
before any ratio is formed; micro scores come from the pooled totals and
macro scores from unweighted class means.  Per-class error rates are
undefined for classes absent from the reference and such classes are
skipped by the macro error rate (but still count toward macro F with
their zero score).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError

__all__ = [
    "SegmentCounts",
    "segment_counts",
    "f_scores",
    "error_rates",
    "evaluate_corpus",
    "MetricsReport",
    "report_to_json",
    "report_to_csv",
]


@dataclass
class SegmentCounts:
    """Per-class TP/FP/FN plus segment-level substitution decomposition."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    n_ref_class: np.ndarray
    subs: int = 0
    dels: int = 0
    ins: int = 0
    n_ref: int = 0

    def merge(self, other: "SegmentCounts") -> "SegmentCounts":
        if self.tp.shape != other.tp.shape:
            raise ShapeError(
                f"cannot merge counts over {self.tp.size} and {other.tp.size} classes"
            )
        return SegmentCounts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.n_ref_class + other.n_ref_class,
            self.subs + other.subs,
            self.dels + other.dels,
            self.ins + other.ins,
            self.n_ref + other.n_ref,
        )


def segment_counts(ref: np.ndarray, sys: np.ndarray) -> SegmentCounts:
    """Count one clip: ref and sys are binary [n_events, n_frames]."""
    ref = np.asarray(ref)
    sys = np.asarray(sys)
    if ref.shape != sys.shape or ref.ndim != 2:
        raise ShapeError(f"reference {ref.shape} and system {sys.shape} must match, 2-D")
    ref = ref.astype(bool)
    sys = sys.astype(bool)
    tp = (ref & sys).sum(axis=1)
    fp = (~ref & sys).sum(axis=1)
    fn = (ref & ~sys).sum(axis=1)
    fn_t = (ref & ~sys).sum(axis=0)  # per segment, summed over classes
    fp_t = (~ref & sys).sum(axis=0)
    s_t = np.minimum(fn_t, fp_t)
    return SegmentCounts(
        tp=tp.astype(np.int64),
        fp=fp.astype(np.int64),
        fn=fn.astype(np.int64),
        n_ref_class=ref.sum(axis=1).astype(np.int64),
        subs=int(s_t.sum()),
        dels=int((fn_t - s_t).sum()),
        ins=int((fp_t - s_t).sum()),
        n_ref=int(ref.sum()),
    )


def f_scores(c: SegmentCounts):
    """(micro_f, macro_f, per-class F); F = 0 whenever its denominator is."""

    def f_of(tp, fp, fn):
        denom = 2 * tp + fp + fn
        return 2 * tp / denom if denom else 0.0

    per_class = np.array(
        [f_of(tp, fp, fn) for tp, fp, fn in zip(c.tp, c.fp, c.fn)], dtype=np.float64
    )
    micro = f_of(int(c.tp.sum()), int(c.fp.sum()), int(c.fn.sum()))
    # fsum is correctly rounded, so the macro mean is order-independent
    return micro, math.fsum(per_class) / per_class.size, per_class


def error_rates(c: SegmentCounts):
    """(micro_er, macro_er, per-class ER); absent classes get NaN."""
    if c.n_ref == 0:
        raise DataError("error rate undefined: reference contains no active segments")
    micro = (c.subs + c.dels + c.ins) / c.n_ref
    per_class = np.full(c.tp.size, np.nan)
    present = c.n_ref_class > 0
    per_class[present] = (c.fn[present] + c.fp[present]) / c.n_ref_class[present]
    macro = math.fsum(per_class[present]) / int(present.sum())
    return micro, macro, per_class


@dataclass
class MetricsReport:
    micro_f: float
    macro_f: float
    micro_er: float
    macro_er: float
    per_class: list = field(default_factory=list)  # dicts: label, f, er, n_ref


def evaluate_corpus(references: dict, predictions: dict, vocab: list[str]) -> MetricsReport:
    """Pool counts over all clips, then compute every score once."""
    missing = sorted(set(references) - set(predictions))
    if missing:
        raise DataError(f"predictions missing for clips: {', '.join(missing)}")
    if not references:
        raise DataError("no clips to evaluate")
    total = None
    for clip_id in sorted(references):
        counts = segment_counts(references[clip_id], predictions[clip_id])
        total = counts if total is None else total.merge(counts)
    if total.tp.size != len(vocab):
        raise ShapeError(f"{total.tp.size} classes counted but vocabulary has {len(vocab)}")
    micro_f, macro_f, class_f = f_scores(total)
    micro_er, macro_er, class_er = error_rates(total)
    table = [
        {
            "label": label,
            "f": float(class_f[n]),
            "er": None if np.isnan(class_er[n]) else float(class_er[n]),
            "n_ref": int(total.n_ref_class[n]),
        }
        for n, label in enumerate(vocab)
    ]
    return MetricsReport(micro_f, macro_f, micro_er, macro_er, table)


def report_to_json(report: MetricsReport) -> str:
    doc = {
        "micro_f": report.micro_f,
        "macro_f": report.macro_f,
        "micro_er": report.micro_er,
        "macro_er": report.macro_er,
        "per_class": report.per_class,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_to_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "f", "er", "n_ref"])
    for row in report.per_class:
        er = "" if row["er"] is None else repr(row["er"])
        writer.writerow([row["label"], repr(row["f"]), er, row["n_ref"]])
    return buf.getvalue()
