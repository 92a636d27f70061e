"""Frame-level acoustic features: log-mel spectrogram, F0 and energy."""
from __future__ import annotations

from functools import lru_cache
from typing import Protocol

import numpy as np

from .config import FeatureConfig
from .corpus import AcousticFeatures, InvalidInputError


class F0Estimator(Protocol):
    def __call__(self, frames: np.ndarray, sample_rate: int) -> np.ndarray: ...


def frame_signal(waveform: np.ndarray, win_length: int, hop_length: int) -> np.ndarray:
    """Center-off framing: ``1 + (len - win) // hop`` frames; short inputs are zero-padded to one frame."""
    x = np.asarray(waveform, dtype=np.float64)
    if x.size < win_length:
        x = np.pad(x, (0, win_length - x.size))
    n_frames = 1 + (x.size - win_length) // hop_length
    return np.lib.stride_tricks.sliding_window_view(x, win_length)[::hop_length][:n_frames]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular HTK-scale filters, shape ``(n_mels, n_fft // 2 + 1)``."""
    fft_freqs = np.linspace(0.0, sample_rate / 2.0, n_fft // 2 + 1)
    hz_points = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lower, center, upper = hz_points[:-2, None], hz_points[1:-1, None], hz_points[2:, None]
    rising = (fft_freqs[None, :] - lower) / np.maximum(center - lower, 1e-10)
    falling = (upper - fft_freqs[None, :]) / np.maximum(upper - center, 1e-10)
    return np.maximum(0.0, np.minimum(rising, falling))


class AutocorrelationF0:
    """Per-frame autocorrelation pitch tracker with parabolic peak refinement."""

    def __init__(self, f0_min=50.0, f0_max=600.0, voicing_threshold=0.3, silence_rms=1e-4):
        self.f0_min = f0_min
        self.f0_max = f0_max
        self.voicing_threshold = voicing_threshold
        self.silence_rms = silence_rms

    def __call__(self, frames: np.ndarray, sample_rate: int) -> np.ndarray:
        n = frames.shape[1]
        x = frames - frames.mean(axis=1, keepdims=True)
        spec = np.fft.rfft(x, n=2 * n, axis=1)
        ac = np.fft.irfft(np.abs(spec) ** 2, axis=1)[:, :n]
        lag_min = max(1, int(np.floor(sample_rate / self.f0_max)))
        lag_max = min(n - 2, int(np.ceil(sample_rate / self.f0_min)))
        f0 = np.zeros(frames.shape[0])
        rms = np.sqrt(np.mean(frames**2, axis=1))
        for t in range(frames.shape[0]):
            r0 = ac[t, 0]
            if rms[t] < self.silence_rms or r0 <= 0:
                continue
            seg = ac[t, lag_min : lag_max + 1] / r0
            k = int(np.argmax(seg))
            if seg[k] < self.voicing_threshold:
                continue
            lag = float(lag_min + k)
            if 0 < k < len(seg) - 1:
                a, b, c = seg[k - 1], seg[k], seg[k + 1]
                denom = a - 2 * b + c
                if denom < 0:
                    lag += 0.5 * (a - c) / denom
            f0[t] = sample_rate / lag
        return f0


def extract_acoustic_features(
    waveform, fe_config: FeatureConfig | None = None, f0_estimator: F0Estimator | None = None
) -> AcousticFeatures:
    """Compute log-mel, F0 (0 on unvoiced frames) and energy on a shared frame grid.

    ``phoneme_durations`` is left empty; callers attach durations from an alignment.
    """
    cfg = fe_config or FeatureConfig()
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a mono waveform, got shape {x.shape}")
    if x.size == 0:
        raise InvalidInputError("empty waveform")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("waveform contains non-finite samples")
    frames = frame_signal(x, cfg.win_length, cfg.hop_length)
    window = np.hanning(cfg.win_length + 1)[:-1]
    mag = np.abs(np.fft.rfft(frames * window, n=cfg.n_fft, axis=1))
    fb = mel_filterbank(cfg.sample_rate, cfg.n_fft, cfg.n_mels, cfg.fmin, cfg.fmax or cfg.sample_rate / 2)
    mel = np.log(np.maximum(mag @ fb.T, cfg.log_floor))
    energy = np.maximum(np.linalg.norm(mag, axis=1), cfg.energy_floor)
    estimator = f0_estimator or AutocorrelationF0(
        cfg.f0_min, cfg.f0_max, cfg.voicing_threshold, cfg.silence_rms
    )
    f0 = estimator(frames, cfg.sample_rate)
    return AcousticFeatures(
        mel=mel.astype(np.float32),
        f0_hz=np.asarray(f0, dtype=np.float32),
        energy=energy.astype(np.float32),
        phoneme_durations=np.zeros(0, dtype=np.int64),
        sample_rate=cfg.sample_rate,
        hop_length=cfg.hop_length,
    )


def time_to_frame(t: float, sample_rate: int, hop_length: int, n_frames: int) -> int:
    return int(min(max(round(t * sample_rate / hop_length), 0), n_frames))
