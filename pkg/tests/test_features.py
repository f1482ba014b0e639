"""Log-mel frontend: filterbank shape, frame counting, cache format."""

import numpy as np
import pytest

from sedcl.errors import ConfigError, DataError, NumericalError
from sedcl.features import (
    LOG_FLOOR,
    feature_stats,
    frame_count,
    frame_params,
    load_features,
    logmel,
    mel_filterbank,
    read_wav,
    save_features,
    wav_duration,
    write_wav,
)

STANDARD = [(44100, 1764, 882, 2048), (16000, 640, 320, 1024)]


@pytest.mark.parametrize("sr,frame,hop,nfft", STANDARD)
def test_frame_params(sr, frame, hop, nfft):
    assert frame_params(sr) == (frame, hop, nfft)


@pytest.mark.parametrize("sr,frame,hop,nfft", STANDARD)
def test_ten_seconds_is_499_frames(sr, frame, hop, nfft):
    assert frame_count(10 * sr, frame, hop) == 499
    assert logmel(np.zeros(10 * sr), sr).shape == (499, 64)


def test_frame_count_matches_loop_oracle():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        frame = int(rng.integers(2, 400))
        hop = int(rng.integers(1, frame + 1))
        n = int(rng.integers(frame, 5000))
        count = 0
        start = 0
        while start + frame <= n:
            count += 1
            start += hop
        assert frame_count(n, frame, hop) == count


def test_too_short_waveform():
    with pytest.raises(DataError):
        frame_count(100, 640, 320)


class TestMelFilterbank:
    def test_single_filter_covers_band(self):
        fb = mel_filterbank(16000, 1024, n_mels=1)
        assert fb.shape == (1, 513)
        assert fb[0].sum() > 0

    @pytest.mark.parametrize("sr,frame,hop,nfft", STANDARD)
    def test_positive_area_and_increasing_centers(self, sr, frame, hop, nfft):
        fb = mel_filterbank(sr, nfft, 64)
        assert fb.shape == (64, nfft // 2 + 1)
        assert (fb.sum(axis=1) > 0).all()
        centers = [int(np.argmax(fb[m])) for m in range(64)]
        assert all(a < b for a, b in zip(centers, centers[1:]))

    @pytest.mark.parametrize("sr,frame,hop,nfft", STANDARD)
    def test_adjacent_filters_overlap(self, sr, frame, hop, nfft):
        fb = mel_filterbank(sr, nfft, 64)
        for m in range(63):
            top = np.nonzero(fb[m])[0][-1]
            assert fb[m + 1, top] > 0

    @pytest.mark.parametrize("sr,frame,hop,nfft", STANDARD)
    def test_interior_bins_covered(self, sr, frame, hop, nfft):
        fb = mel_filterbank(sr, nfft, 64)
        lo = int(np.argmax(fb[0]))
        hi = int(np.argmax(fb[-1]))
        assert (fb.sum(axis=0)[lo : hi + 1] > 0).all()

    def test_empty_filter_rejected(self):
        with pytest.raises(ConfigError):
            mel_filterbank(16000, 64, n_mels=64)

    def test_bad_fft_size(self):
        with pytest.raises(ConfigError):
            mel_filterbank(16000, 1000)


class TestLogmel:
    def test_silence_hits_log_floor(self):
        f = logmel(np.zeros(16000), 16000)
        np.testing.assert_allclose(f, np.log(LOG_FLOOR))

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(44100) * 0.1
        a = logmel(x, 44100)
        b = logmel(x.copy(), 44100)
        assert a.tobytes() == b.tobytes()

    def test_amplitude_scaling_shifts_by_2logc(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(44100) * 0.1
        base = logmel(x, 44100)
        scaled = logmel(3.0 * x, 44100)
        well_above_floor = base > np.log(LOG_FLOOR) + np.log(1e6)
        assert well_above_floor.any()
        dev = np.abs((scaled - base)[well_above_floor] - 2.0 * np.log(3.0))
        assert dev.max() < 1e-6

    def test_non_finite_samples_rejected(self):
        x = np.zeros(16000)
        x[5] = np.nan
        with pytest.raises(NumericalError):
            logmel(x, 16000)

    def test_stereo_rejected_here(self):
        with pytest.raises(DataError):
            logmel(np.zeros((16000, 2)), 16000)


class TestWavIO:
    def test_pcm16_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        x = np.clip(rng.standard_normal(1600) * 0.3, -1, 1)
        p = str(tmp_path / "a.wav")
        write_wav(p, x, 16000)
        y, sr = read_wav(p)
        assert sr == 16000
        assert np.abs(y - x).max() < 1.0 / 16000
        assert wav_duration(p) == pytest.approx(0.1)

    def test_stereo_averaged(self, tmp_path):
        from scipy.io import wavfile

        p = str(tmp_path / "st.wav")
        data = np.stack([np.full(100, 8192), np.full(100, -8192)], axis=1).astype(np.int16)
        wavfile.write(p, 8000, data)
        y, _ = read_wav(p)
        np.testing.assert_allclose(y, 0.0)

    def test_float32_wav(self, tmp_path):
        from scipy.io import wavfile

        p = str(tmp_path / "f.wav")
        wavfile.write(p, 8000, np.linspace(-0.5, 0.5, 80, dtype=np.float32))
        y, sr = read_wav(p)
        assert y.dtype == np.float64 and abs(y[0] + 0.5) < 1e-6

    def test_unreadable_file(self, tmp_path):
        p = tmp_path / "bad.wav"
        p.write_bytes(b"not a wav")
        with pytest.raises(DataError):
            read_wav(str(p))


class TestFeatureCache:
    def test_roundtrip_bitexact(self, tmp_path):
        rng = np.random.default_rng(2)
        feats = rng.standard_normal((499, 64))
        p = str(tmp_path / "c.feat")
        save_features(p, feats)
        back = load_features(p)
        assert back.shape == (499, 64)
        assert back.tobytes() == feats.tobytes()

    def test_header_layout(self, tmp_path):
        p = str(tmp_path / "c.feat")
        save_features(p, np.zeros((3, 2)))
        raw = open(p, "rb").read()
        assert raw[:8] == (3).to_bytes(4, "little") + (2).to_bytes(4, "little")
        assert len(raw) == 8 + 3 * 2 * 8

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "c.feat"
        save_features(str(p), np.zeros((3, 2)))
        p.write_bytes(p.read_bytes()[:-4])
        with pytest.raises(DataError):
            load_features(str(p))


def test_feature_stats():
    a = np.array([[1.0, 10.0], [3.0, 10.0]])
    b = np.array([[5.0, 10.0]])
    mean, std = feature_stats([a, b])
    np.testing.assert_allclose(mean, [3.0, 10.0])
    np.testing.assert_allclose(std, [np.sqrt(8 / 3), 1e-8])
    with pytest.raises(DataError):
        feature_stats([])
