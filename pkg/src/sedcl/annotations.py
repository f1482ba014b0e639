"""Clip metadata and event annotation handling.

Annotation files are UTF-8 text with one event per line,
``onset<TAB>offset<TAB>label`` in decimal seconds.  Meta files map
``clip_path<TAB>scene_label``; the clip id is the path stem.  The
vocabulary file lists one event label per line and its order defines the
class index used by every target matrix and flag vector.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import AnnotationError, DataError

__all__ = [
    "EventInterval",
    "ClipRecord",
    "parse_event_file",
    "format_event_file",
    "parse_meta_file",
    "format_meta_file",
    "parse_vocab_file",
    "format_vocab_file",
    "merge_same_label",
    "build_scene_event_map",
    "make_target_matrix",
    "make_event_flags",
    "load_corpus_split",
    "load_vocabulary",
]


@dataclass(frozen=True, order=True)
class EventInterval:
    """One annotated event occurrence: [onset, offset) in seconds."""

    onset: float
    offset: float
    label: str

    def __post_init__(self):
        if not (0.0 <= self.onset < self.offset):
            raise AnnotationError(
                f"invalid interval [{self.onset}, {self.offset}) for {self.label!r}"
            )


@dataclass
class ClipRecord:
    """One audio clip with its scene label and event annotations."""

    clip_id: str
    scene: str
    duration: float
    events: list[EventInterval] = field(default_factory=list)
    audio_path: str = ""

    def validate(self, vocab: set[str] | None = None):
        for ev in self.events:
            if ev.offset > self.duration + 1e-9:
                raise AnnotationError(
                    f"{self.clip_id}: event {ev.label!r} ends at {ev.offset} s "
                    f"beyond clip duration {self.duration} s"
                )
            if vocab is not None and ev.label not in vocab:
                raise AnnotationError(
                    f"{self.clip_id}: unknown event label {ev.label!r}"
                )
        return self


def merge_same_label(events: list[EventInterval]) -> list[EventInterval]:
    """Merge overlapping or touching intervals that share a label.

    Cross-label overlaps are preserved (detection is multi-label).  The
    result is sorted by (onset, offset, label).
    """
    by_label: dict[str, list[EventInterval]] = {}
    for ev in events:
        by_label.setdefault(ev.label, []).append(ev)
    merged: list[EventInterval] = []
    for label, evs in by_label.items():
        evs.sort()
        cur_on, cur_off = evs[0].onset, evs[0].offset
        for ev in evs[1:]:
            if ev.onset <= cur_off:
                cur_off = max(cur_off, ev.offset)
            else:
                merged.append(EventInterval(cur_on, cur_off, label))
                cur_on, cur_off = ev.onset, ev.offset
        merged.append(EventInterval(cur_on, cur_off, label))
    merged.sort()
    return merged


def parse_event_file(text: str, source: str = "<string>") -> list[EventInterval]:
    """Parse annotation text into merged, sorted event intervals."""
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3:
            raise AnnotationError(
                f"{source}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
            )
        try:
            onset, offset = float(parts[0]), float(parts[1])
        except ValueError:
            raise AnnotationError(
                f"{source}:{lineno}: non-numeric onset/offset {parts[0]!r}, {parts[1]!r}"
            ) from None
        label = parts[2].strip()
        if not label:
            raise AnnotationError(f"{source}:{lineno}: empty event label")
        if not (math.isfinite(onset) and math.isfinite(offset)):
            raise AnnotationError(f"{source}:{lineno}: non-finite onset/offset")
        if onset < 0 or offset <= onset:
            raise AnnotationError(
                f"{source}:{lineno}: offset {offset} must exceed onset {onset} >= 0"
            )
        events.append(EventInterval(onset, offset, label))
    return merge_same_label(events) if events else []


def format_event_file(events: list[EventInterval]) -> str:
    """Serialize intervals, millisecond precision, sorted order."""
    lines = [f"{ev.onset:.3f}\t{ev.offset:.3f}\t{ev.label}" for ev in sorted(events)]
    return "".join(line + "\n" for line in lines)


def _meta_entries(text: str, source: str) -> list[tuple[str, str, str]]:
    entries = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2:
            raise AnnotationError(
                f"{source}:{lineno}: expected 2 tab-separated fields, got {len(parts)}"
            )
        path, scene = parts[0].strip(), parts[1].strip()
        if not path or not scene:
            raise AnnotationError(f"{source}:{lineno}: empty clip path or scene label")
        clip_id = os.path.splitext(os.path.basename(path))[0]
        if clip_id in seen:
            raise AnnotationError(
                f"{source}:{lineno}: duplicate clip id {clip_id!r} "
                f"(first seen on line {seen[clip_id]})"
            )
        seen[clip_id] = lineno
        entries.append((path, clip_id, scene))
    return entries


def parse_meta_file(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse meta text into a clip_id -> scene mapping."""
    return {clip_id: scene for _, clip_id, scene in _meta_entries(text, source)}


def format_meta_file(entries: list[tuple[str, str]]) -> str:
    """Serialize (clip_path, scene) pairs."""
    return "".join(f"{path}\t{scene}\n" for path, scene in entries)


def parse_vocab_file(text: str, source: str = "<string>") -> list[str]:
    """Parse vocabulary text; line order defines the class index."""
    vocab = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        label = line.strip()
        if not label:
            continue
        if label in seen:
            raise AnnotationError(f"{source}:{lineno}: duplicate label {label!r}")
        seen.add(label)
        vocab.append(label)
    return vocab


def format_vocab_file(vocab: list[str]) -> str:
    return "".join(label + "\n" for label in vocab)


def build_scene_event_map(train_clips: list[ClipRecord]) -> dict[str, frozenset[str]]:
    """Map each scene to the event labels seen in its training clips.

    Built from the training split only; treat the result as read-only.
    """
    if not train_clips:
        raise DataError("cannot build a scene-event map from an empty clip list")
    sets: dict[str, set[str]] = {}
    for clip in train_clips:
        bucket = sets.setdefault(clip.scene, set())
        bucket.update(ev.label for ev in clip.events)
    return {scene: frozenset(labels) for scene, labels in sets.items()}


def make_target_matrix(
    clip: ClipRecord,
    vocab: list[str],
    n_frames: int,
    frame_hop: float,
) -> np.ndarray:
    """Frame-level binary activity targets, shape [len(vocab), n_frames].

    Frame t covers the half-open span [t*hop, (t+1)*hop); any positive
    overlap with an event interval marks the frame active.
    """
    index = {label: n for n, label in enumerate(vocab)}
    z = np.zeros((len(vocab), n_frames), dtype=np.uint8)
    for ev in clip.events:
        if ev.label not in index:
            raise DataError(f"{clip.clip_id}: event label {ev.label!r} not in vocabulary")
        # Epsilon guards resolve exact frame-boundary onsets/offsets; safe
        # for millisecond-quantized annotations with >=10 ms hops.
        first = int(math.floor(ev.onset / frame_hop + 1e-9))
        last = int(math.ceil(ev.offset / frame_hop - 1e-9)) - 1
        first = max(first, 0)
        last = min(last, n_frames - 1)
        if first <= last:
            z[index[ev.label], first : last + 1] = 1
    return z


def make_event_flags(
    scene: str,
    scene_event_map: dict[str, frozenset[str]],
    vocab: list[str],
) -> np.ndarray:
    """Per-clip binary vector marking event classes present in the scene."""
    if scene not in scene_event_map:
        raise DataError(f"scene {scene!r} not present in the scene-event map")
    present = scene_event_map[scene]
    return np.array([1 if label in present else 0 for label in vocab], dtype=np.uint8)


def load_corpus_split(corpus_dir: str, split: str) -> list[ClipRecord]:
    """Load one split (``train`` or ``eval``) of an on-disk corpus.

    Expects ``<corpus>/<split>/meta.txt`` plus per-clip annotation files
    under ``<corpus>/<split>/annotations/<clip_id>.txt``.
    """
    from .features import wav_duration

    split_dir = os.path.join(corpus_dir, split)
    meta_path = os.path.join(split_dir, "meta.txt")
    if not os.path.isfile(meta_path):
        raise DataError(f"missing meta file {meta_path}")
    with open(meta_path, encoding="utf-8") as fh:
        entries = _meta_entries(fh.read(), meta_path)
    records = []
    for rel_path, clip_id, scene in entries:
        audio_path = os.path.join(split_dir, rel_path)
        ann_path = os.path.join(split_dir, "annotations", clip_id + ".txt")
        if not os.path.isfile(ann_path):
            raise DataError(f"missing annotation file {ann_path}")
        with open(ann_path, encoding="utf-8") as fh:
            events = parse_event_file(fh.read(), ann_path)
        if not os.path.isfile(audio_path):
            raise DataError(f"missing audio file {audio_path}")
        duration = wav_duration(audio_path)
        records.append(
            ClipRecord(clip_id, scene, duration, events, audio_path).validate()
        )
    return records


def load_vocabulary(corpus_dir: str) -> list[str]:
    vocab_path = os.path.join(corpus_dir, "vocabulary.txt")
    if not os.path.isfile(vocab_path):
        raise DataError(f"missing vocabulary file {vocab_path}")
    with open(vocab_path, encoding="utf-8") as fh:
        return parse_vocab_file(fh.read(), vocab_path)
