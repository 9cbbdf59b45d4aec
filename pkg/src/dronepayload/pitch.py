"""Pitch-only payload-presence detection.

The clip is band-passed to the blade-pass band, its pitch is taken as the
interpolated spectral peak of each window, and a clip is flagged as carrying a
payload when that pitch falls outside ``mean +/- k*sigma`` of the empty-drone
(0 g) reference distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .audio_io import AudioClip, segment
from .errors import ConfigurationError, EmptyDistributionError, NoPitchError, TooShortError

DEFAULT_BAND = (180.0, 235.0)
DEFAULT_SIGMAS = 3.0
PAD_FACTOR = 4


@dataclass(frozen=True)
class PitchEstimate:
    frequency_hz: float
    window_s: float
    source_id: str = ""
    payload_label: Optional[float] = None


@dataclass(frozen=True, eq=False)
class PitchDistribution:
    samples: np.ndarray
    payload_class: Optional[float]
    window_s: float
    mean: float = field(init=False)
    std: float = field(init=False)
    min: float = field(init=False)
    max: float = field(init=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if s.size == 0:
            raise EmptyDistributionError("pitch distribution has no samples")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "mean", float(np.mean(s)))
        object.__setattr__(self, "std", float(np.std(s)))
        object.__setattr__(self, "min", float(np.min(s)))
        object.__setattr__(self, "max", float(np.max(s)))

    def __len__(self):
        return self.samples.size

    def interval(self, n_sigmas: float = DEFAULT_SIGMAS) -> tuple[float, float]:
        return self.mean - n_sigmas * self.std, self.mean + n_sigmas * self.std


def _band_mask(n: int, sample_rate_hz: int, f_lo: float, f_hi: float) -> np.ndarray:
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate_hz)
    return (freqs >= f_lo) & (freqs <= f_hi)


def bandpass(clip: AudioClip, f_lo: float = DEFAULT_BAND[0], f_hi: float = DEFAULT_BAND[1]) -> AudioClip:
    """Zero-phase brick-wall band-pass over the whole clip."""
    if not 0 < f_lo < f_hi < clip.sample_rate_hz / 2:
        raise ConfigurationError(f"band [{f_lo}, {f_hi}] Hz invalid for {clip.sample_rate_hz} Hz audio")
    n = len(clip)
    mask = _band_mask(n, clip.sample_rate_hz, f_lo, f_hi)
    if not mask.any():
        raise TooShortError(f"a {n}-sample window has no FFT bin inside [{f_lo}, {f_hi}] Hz")
    spectrum = np.fft.rfft(clip.samples)
    spectrum[~mask] = 0.0
    return clip.with_samples(np.fft.irfft(spectrum, n))


def _padded_spectrum(spectrum: np.ndarray, bins: np.ndarray, n: int, fine_bins: np.ndarray, pad: int) -> np.ndarray:
    """Magnitude of the ``pad*n``-point DFT of the signal whose one-sided spectrum
    is ``spectrum`` restricted to ``bins``, evaluated at padded indices ``fine_bins``.

    Each in-band bin k contributes ``X_k S(2 pi k/n - w) + conj(X_k) S(-2 pi k/n - w)``
    with ``S(t) = sum_{m<n} exp(i t m)``; this equals zero-padding the band-passed
    window without transforming the full padded length.
    """
    w = 2.0 * np.pi * fine_bins[:, None] / (pad * n)
    theta_k = 2.0 * np.pi * bins[None, :] / n

    def geometric(t):
        num = 1.0 - np.exp(1j * t * n)
        den = 1.0 - np.exp(1j * t)
        small = np.abs(den) < 1e-12
        return np.where(small, n, num / np.where(small, 1.0, den))

    xk = spectrum[bins][None, :]
    total = xk * geometric(theta_k - w) + np.conj(xk) * geometric(-theta_k - w)
    return np.abs(total.sum(axis=1)) / n


def estimate_pitch(clip: AudioClip, band: tuple[float, float] = DEFAULT_BAND) -> PitchEstimate:
    """Largest in-band spectral peak, refined by a parabola through it and its neighbours.

    The parabola is fitted on the ``PAD_FACTOR``-times zero-padded spectrum of
    the band-passed window, sampled around the coarse peak.
    """
    f_lo, f_hi = band
    if not 0 < f_lo < f_hi < clip.sample_rate_hz / 2:
        raise ConfigurationError(f"band [{f_lo}, {f_hi}] Hz invalid for {clip.sample_rate_hz} Hz audio")
    n = len(clip)
    fs = clip.sample_rate_hz
    bins = np.flatnonzero(_band_mask(n, fs, f_lo, f_hi))
    if bins.size == 0:
        raise TooShortError(f"a {n}-sample window has no FFT bin inside [{f_lo}, {f_hi}] Hz")
    spectrum = np.fft.rfft(clip.samples)
    coarse = np.abs(spectrum[bins])
    kc = bins[np.argmax(coarse)]
    if coarse.max() <= 0.0:
        raise NoPitchError(f"{clip.source_id or 'clip'}: no energy in [{f_lo}, {f_hi}] Hz")

    n_fft = PAD_FACTOR * n
    fine = np.arange(PAD_FACTOR * (kc - 1) - 1, PAD_FACTOR * (kc + 1) + 2)
    fine_freqs = fine * fs / n_fft
    fine = fine[(fine_freqs >= f_lo) & (fine_freqs <= f_hi)]
    mag = _padded_spectrum(spectrum, bins, n, fine.astype(np.float64), PAD_FACTOR)
    p = int(np.argmax(mag))
    offset = 0.0
    if 0 < p < mag.size - 1:
        left, mid, right = mag[p - 1], mag[p], mag[p + 1]
        denom = left - 2.0 * mid + right
        if denom < 0:
            offset = 0.5 * (left - right) / denom
    freq = (fine[p] + offset) * fs / n_fft
    freq = min(max(freq, f_lo), f_hi)
    return PitchEstimate(float(freq), clip.duration_s, clip.source_id, clip.payload_label)


def build_pitch_distribution(
    clips: Sequence[AudioClip], window_s: float, band: tuple[float, float] = DEFAULT_BAND
) -> PitchDistribution:
    labels = {c.payload_label for c in clips}
    if len(labels) > 1:
        raise ConfigurationError(f"clips mix payload labels {sorted(labels, key=str)}")
    pitches = [estimate_pitch(seg, band).frequency_hz for clip in clips for seg in segment(clip, window_s)]
    if not pitches:
        raise EmptyDistributionError(f"no {window_s} s window fits in the supplied clips")
    return PitchDistribution(np.array(pitches), labels.pop() if labels else None, window_s)


def presence_error_rate(
    dist_w: PitchDistribution, dist_0: PitchDistribution, n_sigmas: float = DEFAULT_SIGMAS
) -> float:
    """Fraction of ``dist_w`` that is indistinguishable from the 0 g reference."""
    if not np.isclose(dist_w.window_s, dist_0.window_s, rtol=0, atol=1e-9):
        raise ConfigurationError(f"window mismatch: {dist_w.window_s} s vs {dist_0.window_s} s")
    if len(dist_0) < 2:
        raise EmptyDistributionError("reference distribution needs at least two samples")
    lo, hi = dist_0.interval(n_sigmas)
    inside = (dist_w.samples >= lo) & (dist_w.samples <= hi)
    return float(np.count_nonzero(inside)) / dist_w.samples.size


def detect_payload(
    clip: AudioClip,
    ref_0g: PitchDistribution,
    n_sigmas: float = DEFAULT_SIGMAS,
    band: tuple[float, float] = DEFAULT_BAND,
) -> bool:
    """True when the pitch of the clip's first reference-length window leaves the 0 g interval."""
    windows = segment(clip, ref_0g.window_s)
    if not windows:
        raise TooShortError(f"clip of {clip.duration_s:.3f} s is shorter than the {ref_0g.window_s} s window")
    pitch = estimate_pitch(windows[0], band).frequency_hz
    lo, hi = ref_0g.interval(n_sigmas)
    return not (lo <= pitch <= hi)


def pitch_estimates(clips: Iterable[AudioClip], window_s: float, band=DEFAULT_BAND) -> list[PitchEstimate]:
    out = []
    for clip in clips:
        for seg in segment(clip, window_s):
            est = estimate_pitch(seg, band)
            out.append(PitchEstimate(est.frequency_hz, window_s, clip.source_id, clip.payload_label))
    return out
