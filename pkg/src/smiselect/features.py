"""Utterance-level MFCC features.

Each utterance becomes one 39-dimensional vector: 13 cepstra (c0 kept), their
first- and second-order deltas, averaged over all frames.
"""
from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct
from scipy.io import wavfile
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import (ClipTooShortError, EmptyAudioError, FeaturizationError,
                         UnsupportedEncodingError, AudioDecodeError)

FEATURE_DIM = 39
# floor applied to mel energies before the log; low enough that it never
# triggers on real (dithered or quantized) audio
LOG_FLOOR = 1e-20
THREADS_ENV = "SMISELECT_NUM_THREADS"


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.size == 0:
            raise EmptyAudioError("audio clip has no samples")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MfccConfig:
    frame_length_ms: float = 25.0
    frame_hop_ms: float = 10.0
    preemphasis_coeff: float = 0.97
    num_mel_filters: int = 26
    num_cepstra: int = 13
    fft_size: int | None = None  # None -> smallest power of two >= frame
    delta_window: int = 2
    mel_low_hz: float = 0.0
    mel_high_hz: float | None = None  # None -> Nyquist

    def __post_init__(self):
        if not self.frame_length_ms >= self.frame_hop_ms > 0:
            raise ValueError("need frame_length_ms >= frame_hop_ms > 0")
        if not 0 < self.num_cepstra <= self.num_mel_filters:
            raise ValueError("need 0 < num_cepstra <= num_mel_filters")
        if self.delta_window < 1:
            raise ValueError("delta_window must be >= 1")
        if self.mel_low_hz < 0:
            raise ValueError("mel_low_hz must be >= 0")

    def frame_samples(self, sample_rate: int) -> tuple[int, int]:
        flen = int(round(self.frame_length_ms * sample_rate / 1000.0))
        hop = int(round(self.frame_hop_ms * sample_rate / 1000.0))
        return flen, max(hop, 1)

    def resolved_fft_size(self, frame_len: int) -> int:
        if self.fft_size is None:
            return 1 << max(frame_len - 1, 0).bit_length()
        if self.fft_size < frame_len:
            raise ValueError(f"fft_size {self.fft_size} is smaller than the frame ({frame_len})")
        return self.fft_size

    @property
    def output_dim(self) -> int:
        return 3 * self.num_cepstra


def decode_wav(path) -> AudioClip:
    """Read a PCM WAV file as a mono clip in [-1, 1].

    Accepts 16-bit integer and 32-bit float encodings; channels are averaged.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"audio file not found: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise UnsupportedEncodingError(f"{path}: {exc}") from exc
    except Exception as exc:  # truncated or non-RIFF files
        raise AudioDecodeError(f"{path}: cannot decode WAV ({exc})") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedEncodingError(
            f"{path}: unsupported sample format {data.dtype} (need 16-bit PCM or 32-bit float)")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise EmptyAudioError(f"{path}: zero-length audio")
    return AudioClip(samples, int(rate))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(num_filters, fft_size, sample_rate, low_hz=0.0, high_hz=None):
    """Triangular filters on the HTK mel scale, shape (num_filters, fft_size//2 + 1)."""
    high_hz = sample_rate / 2.0 if high_hz is None else high_hz
    if not 0 <= low_hz < high_hz <= sample_rate / 2.0:
        raise ValueError(f"invalid mel band [{low_hz}, {high_hz}] for rate {sample_rate}")
    edges = mel_to_hz(np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), num_filters + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    left, centre, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (freqs - left) / (centre - left)
    fall = (right - freqs) / (right - centre)
    return np.maximum(0.0, np.minimum(rise, fall))


def _frame_count(n_samples, frame_len, hop):
    return 1 + (n_samples - frame_len) // hop


def compute_mfcc_frames(clip: AudioClip, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Static cepstra per frame, shape (n_frames, num_cepstra)."""
    flen, hop = cfg.frame_samples(clip.sample_rate)
    x = clip.samples
    if len(x) < flen:
        raise ClipTooShortError(
            f"clip has {len(x)} samples, shorter than one {flen}-sample frame")
    nfft = cfg.resolved_fft_size(flen)

    emphasized = np.empty_like(x)
    emphasized[0] = x[0]
    emphasized[1:] = x[1:] - cfg.preemphasis_coeff * x[:-1]

    n_frames = _frame_count(len(x), flen, hop)
    idx = np.arange(flen)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = emphasized[idx] * np.hamming(flen)

    power = np.abs(np.fft.rfft(frames, n=nfft, axis=1)) ** 2 / nfft
    fbank = mel_filterbank(cfg.num_mel_filters, nfft, clip.sample_rate,
                           cfg.mel_low_hz, cfg.mel_high_hz)
    log_mel = np.log(np.maximum(power @ fbank.T, LOG_FLOOR))
    return dct(log_mel, type=2, axis=1, norm="ortho")[:, :cfg.num_cepstra]


def delta(frames: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression deltas over +/- ``width`` frames, edges padded by repetition."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise ValueError("need a 2-D matrix with at least one frame")
    T = frames.shape[0]
    padded = np.pad(frames, ((width, width), (0, 0)), mode="edge")
    out = np.zeros_like(frames)
    for i in range(1, width + 1):
        out += i * (padded[width + i:width + i + T] - padded[width - i:width - i + T])
    return out / (2.0 * sum(i * i for i in range(1, width + 1)))


def append_deltas(frames: np.ndarray, width: int = 2) -> np.ndarray:
    """Stack ``[static | delta | delta-delta]`` column-wise."""
    d1 = delta(frames, width)
    d2 = delta(d1, width)
    return np.hstack([np.asarray(frames, dtype=np.float64), d1, d2])


def featurize(clip: AudioClip, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    frames = append_deltas(compute_mfcc_frames(clip, cfg), cfg.delta_window)
    return frames.mean(axis=0)


def default_num_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def featurize_manifest(records, cfg: MfccConfig = MfccConfig(), n_jobs=None):
    """Return new records with features (and missing durations) filled in.

    Records that already carry a feature vector are passed through untouched.
    Every failing record is collected; if any fail, :class:`FeaturizationError`
    lists them all.
    """
    n_jobs = default_num_threads() if n_jobs is None else n_jobs

    def work(rec):
        if rec.features is not None:
            return rec, None
        if rec.audio_path is None:
            return None, "no audio_path and no features"
        try:
            clip = decode_wav(rec.audio_path)
            vec = featurize(clip, cfg)
        except (OSError, ValueError) as exc:
            return None, f"{type(exc).__name__}: {exc}"
        duration = rec.duration_s if rec.duration_s is not None else clip.duration_s
        return dataclasses.replace(rec, features=vec, duration_s=duration,
                                   sample_rate=clip.sample_rate), None

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(work, records))
    else:
        results = [work(r) for r in records]

    failures = {rec.id: err for rec, (_, err) in zip(records, results) if err is not None}
    if failures:
        raise FeaturizationError(failures)
    return [out for out, _ in results]


class MfccFeaturizer(TransformerMixin, BaseEstimator):
    """Map audio clips (or WAV paths) to utterance-level MFCC vectors.

    Stateless transformer: ``fit`` only validates parameters.

    Parameters mirror :class:`MfccConfig`.
    """

    def __init__(self, frame_length_ms=25.0, frame_hop_ms=10.0, preemphasis_coeff=0.97,
                 num_mel_filters=26, num_cepstra=13, fft_size=None, delta_window=2,
                 mel_low_hz=0.0, mel_high_hz=None):
        self.frame_length_ms = frame_length_ms
        self.frame_hop_ms = frame_hop_ms
        self.preemphasis_coeff = preemphasis_coeff
        self.num_mel_filters = num_mel_filters
        self.num_cepstra = num_cepstra
        self.fft_size = fft_size
        self.delta_window = delta_window
        self.mel_low_hz = mel_low_hz
        self.mel_high_hz = mel_high_hz

    def _config(self):
        return MfccConfig(**self.get_params())

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        self.n_features_out_ = self.config_.output_dim
        return self

    def transform(self, X):
        cfg = getattr(self, "config_", None) or self._config()
        rows = []
        for item in X:
            clip = item if isinstance(item, AudioClip) else decode_wav(item)
            rows.append(featurize(clip, cfg))
        return np.vstack(rows) if rows else np.empty((0, cfg.output_dim))

    def _more_tags(self):
        return {"stateless": True, "X_types": ["string"]}
