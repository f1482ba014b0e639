"""Synthetic scene-structured corpus generation.

Each scene gets a noise background with its own spectral tilt and a
vocabulary that mixes globally shared event classes with scene-unique
ones, so the scene label genuinely predicts which events can occur.
Event classes cycle through three template families (tone, chirp,
band-limited burst) at class-distinct center frequencies; realism is
deliberately out of scope, separability is the point.

Everything derives from per-clip seeded generators, so regeneration with
the same parameters is byte-identical, file by file.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import chirp as chirp_wave

from .annotations import (
    ClipRecord,
    EventInterval,
    format_event_file,
    format_meta_file,
    format_vocab_file,
    merge_same_label,
)
from .errors import ConfigError
from .features import write_wav

BG_RMS = 0.05
MIN_EVENT_SECONDS = 0.2
MAX_EVENT_SECONDS = 2.0
FADE_SECONDS = 0.010


@dataclass
class CorpusSpec:
    n_scenes: int = 4
    events_per_scene: int = 5
    shared_events: int = 2
    clips_per_scene: int = 50
    eval_clips_per_scene: int = 20
    clip_seconds: float = 10.0
    sample_rate: int = 16000
    event_rate: float = 3.0
    snr_db: float = 6.0
    seed: int = 0

    def validate(self) -> "CorpusSpec":
        if self.n_scenes < 2:
            raise ConfigError(
                "need at least two scenes so every scene vocabulary is a strict subset"
            )
        if self.events_per_scene < 1 or self.clips_per_scene < 1 or self.eval_clips_per_scene < 1:
            raise ConfigError(f"counts must be >= 1: {self}")
        if not 0 <= self.shared_events < self.events_per_scene:
            raise ConfigError(
                f"shared_events={self.shared_events} must be below "
                f"events_per_scene={self.events_per_scene}"
            )
        if self.clip_seconds <= MAX_EVENT_SECONDS or self.sample_rate < 8000:
            raise ConfigError(f"clips too short or sample rate too low: {self}")
        if self.event_rate < 0:
            raise ConfigError(f"event_rate must be >= 0, got {self.event_rate}")
        return self

    @property
    def scene_names(self) -> list[str]:
        return [f"scene{k:02d}" for k in range(self.n_scenes)]

    @property
    def vocabulary(self) -> list[str]:
        unique = self.events_per_scene - self.shared_events
        return [f"event{k:02d}" for k in range(self.shared_events + self.n_scenes * unique)]

    def scene_vocab(self, scene_idx: int) -> list[str]:
        vocab = self.vocabulary
        unique = self.events_per_scene - self.shared_events
        own = vocab[
            self.shared_events + scene_idx * unique : self.shared_events + (scene_idx + 1) * unique
        ]
        return vocab[: self.shared_events] + own


@dataclass
class GeneratedCorpus:
    root: str
    spec: CorpusSpec
    train: list = field(default_factory=list)  # ClipRecord
    eval: list = field(default_factory=list)
    placements: dict = field(default_factory=dict)  # clip_id -> raw (on, off, label)


def _center_freqs(spec: CorpusSpec) -> np.ndarray:
    n = len(spec.vocabulary)
    lo, hi = 300.0, 0.45 * spec.sample_rate
    return np.geomspace(lo, hi, n)


def _fade(n_samples: int, sample_rate: int) -> np.ndarray:
    ramp = min(int(FADE_SECONDS * sample_rate), max(n_samples // 4, 1))
    env = np.ones(n_samples)
    slope = np.linspace(0.0, 1.0, ramp, endpoint=False)
    env[:ramp] = slope
    env[-ramp:] = slope[::-1]
    return env


def render_event(class_idx: int, freq: float, n_samples: int, sample_rate: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Unit-RMS template; family cycles tone / chirp / noise burst."""
    t = np.arange(n_samples) / sample_rate
    family = class_idx % 3
    if family == 0:
        x = np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    elif family == 1:
        span = t[-1] if n_samples > 1 else 1.0 / sample_rate
        x = chirp_wave(t, f0=0.8 * freq, f1=1.2 * freq, t1=span, method="linear",
                       phi=math.degrees(rng.uniform(0, 2 * np.pi)))
    else:
        spectrum = np.fft.rfft(rng.standard_normal(n_samples))
        bins = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
        spectrum *= np.exp(-0.5 * ((bins - freq) / (0.12 * freq + 1e-9)) ** 2)
        x = np.fft.irfft(spectrum, n=n_samples)
    x = x * _fade(n_samples, sample_rate)
    rms = np.sqrt(np.mean(x * x))
    return x / max(rms, 1e-12)


def render_background(scene_idx: int, n_scenes: int, n_samples: int, sample_rate: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Scene-tilted noise at a fixed RMS."""
    slopes = np.linspace(-1.5, 1.5, n_scenes)
    spectrum = np.fft.rfft(rng.standard_normal(n_samples))
    bins = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
    spectrum *= (1.0 + bins / 200.0) ** (slopes[scene_idx] / 2.0)
    x = np.fft.irfft(spectrum, n=n_samples)
    return x * (BG_RMS / np.sqrt(np.mean(x * x)))


def _place_events(spec: CorpusSpec, scene_idx: int, rng: np.random.Generator):
    """Millisecond-quantized (onset, offset, local class index) placements."""
    top = int(round(2 * spec.event_rate))
    count = int(rng.integers(0, top + 1)) if top else 0
    placements = []
    for _ in range(count):
        duration = rng.uniform(MIN_EVENT_SECONDS, MAX_EVENT_SECONDS)
        onset = rng.uniform(0.0, spec.clip_seconds - duration)
        onset = round(onset, 3)
        offset = min(round(onset + duration, 3), spec.clip_seconds)
        local = int(rng.integers(0, spec.events_per_scene))
        placements.append((onset, offset, local))
    return placements


def render_clip(spec: CorpusSpec, scene_idx: int, placements, rng: np.random.Generator):
    """Background plus scaled events; peak beyond 0.99 rescales the clip."""
    n_samples = int(round(spec.clip_seconds * spec.sample_rate))
    x = render_background(scene_idx, spec.n_scenes, n_samples, spec.sample_rate, rng)
    freqs = _center_freqs(spec)
    vocab = spec.vocabulary
    scene_vocab = spec.scene_vocab(scene_idx)
    gain = BG_RMS * 10.0 ** (spec.snr_db / 20.0)
    for onset, offset, local in placements:
        label = scene_vocab[local]
        class_idx = vocab.index(label)
        a = int(round(onset * spec.sample_rate))
        b = int(round(offset * spec.sample_rate))
        x[a:b] += gain * render_event(class_idx, freqs[class_idx], b - a, spec.sample_rate, rng)
    peak = np.abs(x).max()
    if peak > 0.99:
        x *= 0.99 / peak
    return x


def _clip_record(spec: CorpusSpec, split: str, scene_idx: int, clip_idx: int):
    split_code = 0 if split == "train" else 1
    rng = np.random.default_rng([spec.seed, split_code, scene_idx, clip_idx])
    placements = _place_events(spec, scene_idx, rng)
    waveform = render_clip(spec, scene_idx, placements, rng)
    scene_vocab = spec.scene_vocab(scene_idx)
    events = merge_same_label(
        [EventInterval(on, off, scene_vocab[local]) for on, off, local in placements]
    )
    clip_id = f"{split}_{spec.scene_names[scene_idx]}_{clip_idx:03d}"
    record = ClipRecord(clip_id, spec.scene_names[scene_idx], spec.clip_seconds, events)
    raw = [(on, off, scene_vocab[local]) for on, off, local in placements]
    return record, waveform, raw


def generate_corpus(spec: CorpusSpec, root: str) -> GeneratedCorpus:
    """Write both splits plus the vocabulary; returns the loaded records."""
    spec.validate()
    os.makedirs(root, exist_ok=True)
    with open(os.path.join(root, "vocabulary.txt"), "w", encoding="utf-8") as fh:
        fh.write(format_vocab_file(spec.vocabulary))
    corpus = GeneratedCorpus(root, spec)
    for split, per_scene in (("train", spec.clips_per_scene), ("eval", spec.eval_clips_per_scene)):
        split_dir = os.path.join(root, split)
        audio_dir = os.path.join(split_dir, "audio")
        ann_dir = os.path.join(split_dir, "annotations")
        os.makedirs(audio_dir, exist_ok=True)
        os.makedirs(ann_dir, exist_ok=True)
        meta_entries = []
        for scene_idx in range(spec.n_scenes):
            for clip_idx in range(per_scene):
                record, waveform, raw = _clip_record(spec, split, scene_idx, clip_idx)
                corpus.placements[record.clip_id] = raw
                rel_audio = os.path.join("audio", record.clip_id + ".wav")
                write_wav(os.path.join(split_dir, rel_audio), waveform, spec.sample_rate)
                with open(os.path.join(ann_dir, record.clip_id + ".txt"), "w",
                          encoding="utf-8") as fh:
                    fh.write(format_event_file(record.events))
                record.audio_path = os.path.join(split_dir, rel_audio)
                meta_entries.append((rel_audio, record.scene))
                getattr(corpus, split).append(record)
        with open(os.path.join(split_dir, "meta.txt"), "w", encoding="utf-8") as fh:
            fh.write(format_meta_file(meta_entries))
    return corpus
