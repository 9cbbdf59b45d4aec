"""Additive white Gaussian noise at a target SNR, and the SNR sweep grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip
from .errors import ConfigurationError, EmptyAudioError, UndefinedSnrError


@dataclass(frozen=True)
class SnrGrid:
    levels_db: tuple[float, ...]
    lo_db: float
    hi_db: float

    @property
    def count(self) -> int:
        return len(self.levels_db)


def mean_power(clip) -> float:
    samples = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)
    if samples.size == 0:
        raise EmptyAudioError("mean power of an empty signal")
    return float(np.mean(np.square(samples)))


def add_awgn(clip: AudioClip, snr_db: float, seed) -> AudioClip:
    """Add zero-mean Gaussian noise with power ``P_signal / 10**(snr_db/10)``.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts; pass a
    tuple such as ``(run_seed, clip_index, level_index)`` to split streams.
    The result is not re-normalized and may leave ``[-1, 1]``.
    """
    p_signal = mean_power(clip)
    if p_signal <= 0.0:
        raise UndefinedSnrError(f"{clip.source_id or 'clip'} is silent; SNR is undefined")
    sigma = np.sqrt(p_signal / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    return clip.with_samples(clip.samples + rng.normal(0.0, sigma, len(clip)))


def realized_snr_db(clean: AudioClip, noisy: AudioClip) -> float:
    noise = noisy.samples - clean.samples
    return float(10.0 * np.log10(mean_power(clean) / mean_power(noise)))


def snr_grid(lo_db: float = 0.0, hi_db: float = 8.8, count: int = 183) -> SnrGrid:
    """Evenly spaced levels including both endpoints."""
    if count < 2 or not lo_db < hi_db:
        raise ConfigurationError(f"need count >= 2 and lo < hi, got count={count}, [{lo_db}, {hi_db}]")
    step = (hi_db - lo_db) / (count - 1)
    levels = [lo_db + i * step for i in range(count - 1)] + [hi_db]
    return SnrGrid(tuple(float(v) for v in levels), float(lo_db), float(hi_db))
