"""MFCC features: pre-emphasis, framing, mel filterbank, log and cepstral DCT.

One :class:`FeatureInstance` is produced per analysis window by averaging the
per-frame cepstra.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .audio_io import AudioClip, format_number, segment
from .errors import ConfigurationError, DomainError, FormatError, TooShortError

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class MfccParams:
    n_coefficients: int = 40
    n_mel_bands: int = 40
    frame_len_s: float = 0.03
    hop_len_s: float = 0.01
    fft_len_s: float = 0.03
    f_low_hz: float = 633.0
    f_high_hz: float = 6854.0
    preemphasis_alpha: float = 0.97
    window: str = "hamming"
    include_c0: bool = True

    def __post_init__(self):
        if self.n_coefficients < 1 or self.n_mel_bands < 1:
            raise ConfigurationError("coefficient and band counts must be positive")
        if self.n_coefficients > self.n_mel_bands:
            raise ConfigurationError("n_coefficients may not exceed n_mel_bands")
        if not 0 < self.f_low_hz < self.f_high_hz:
            raise ConfigurationError(f"need 0 < f_low < f_high, got [{self.f_low_hz}, {self.f_high_hz}]")
        if not 0 < self.hop_len_s <= self.frame_len_s:
            raise ConfigurationError("hop must be positive and no longer than the frame")
        if self.fft_len_s <= 0:
            raise ConfigurationError("FFT length must be positive")
        if not 0 <= self.preemphasis_alpha < 1:
            raise ConfigurationError("pre-emphasis alpha must lie in [0, 1)")
        if self.window not in ("hamming", "rectangular"):
            raise ConfigurationError(f"unknown analysis window {self.window!r}")

    def frame_len(self, sample_rate_hz: int) -> int:
        return int(round(self.frame_len_s * sample_rate_hz))

    def hop_len(self, sample_rate_hz: int) -> int:
        return int(round(self.hop_len_s * sample_rate_hz))

    def fft_len(self, sample_rate_hz: int) -> int:
        return int(round(self.fft_len_s * sample_rate_hz))

    @property
    def n_features(self) -> int:
        return self.n_coefficients if self.include_c0 else self.n_coefficients - 1


@dataclass(frozen=True, eq=False)
class MelFilterbank:
    weights: np.ndarray  # (n_mel_bands, fft_len // 2 + 1)
    center_freqs_hz: np.ndarray
    sample_rate_hz: int
    fft_len: int


@dataclass(frozen=True, eq=False)
class FeatureInstance:
    coefficients: np.ndarray
    window_s: float
    payload_label: Optional[float] = None
    source_id: str = ""

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise DomainError("feature vector contains non-finite values")
        object.__setattr__(self, "coefficients", c)


def pre_emphasize(samples, alpha: float = 0.97) -> np.ndarray:
    """First-difference high-frequency boost: ``y[n] = x[n] - alpha * x[n-1]``."""
    if not 0 <= alpha < 1:
        raise DomainError(f"pre-emphasis alpha must lie in [0, 1), got {alpha}")
    x = np.asarray(samples, dtype=np.float64)
    y = x.copy()
    y[1:] -= alpha * x[:-1]
    return y


def mel_scale(f):
    f_arr = np.asarray(f, dtype=np.float64)
    if np.any(f_arr < 0):
        raise DomainError("frequency must be non-negative")
    out = 2595.0 * np.log10(1.0 + f_arr / 700.0)
    return float(out) if out.ndim == 0 else out


def inverse_mel(m):
    m_arr = np.asarray(m, dtype=np.float64)
    if np.any(m_arr < 0):
        raise DomainError("mel value must be non-negative")
    out = 700.0 * (10.0 ** (m_arr / 2595.0) - 1.0)
    return float(out) if out.ndim == 0 else out


def build_mel_filterbank(params: MfccParams, sample_rate_hz: int, fft_len: Optional[int] = None) -> MelFilterbank:
    """Triangular filters on a one-sided ``fft_len``-point spectrum.

    Apexes sit at ``M`` points equally spaced in mel strictly inside
    ``[Mel(f_low), Mel(f_high)]``; the outermost triangles fall to zero at the
    band edges.  Weights are linear in Hz between neighbouring apexes.
    """
    if fft_len is None:
        fft_len = params.fft_len(sample_rate_hz)
    n_bands = params.n_mel_bands
    if n_bands < 1:
        raise ConfigurationError("need at least one mel band")
    if params.f_high_hz > sample_rate_hz / 2:
        raise ConfigurationError(f"f_high {params.f_high_hz} Hz exceeds Nyquist for {sample_rate_hz} Hz")
    edges_mel = np.linspace(mel_scale(params.f_low_hz), mel_scale(params.f_high_hz), n_bands + 2)
    edges_hz = inverse_mel(edges_mel)
    edges_hz[0], edges_hz[-1] = params.f_low_hz, params.f_high_hz
    bin_freqs = np.arange(fft_len // 2 + 1) * sample_rate_hz / fft_len

    left, center, right = edges_hz[:-2, None], edges_hz[1:-1, None], edges_hz[2:, None]
    f = bin_freqs[None, :]
    rising = (f - left) / (center - left)
    falling = (right - f) / (right - center)
    weights = np.clip(np.minimum(rising, falling), 0.0, None)
    empty = np.flatnonzero(weights.max(axis=1) <= 0)
    if empty.size:
        raise ConfigurationError(
            f"{empty.size} mel band(s) contain no FFT bin; lengthen the FFT or reduce n_mel_bands"
        )
    return MelFilterbank(weights, edges_hz[1:-1].copy(), int(sample_rate_hz), int(fft_len))


def _frames(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    if x.size < frame_len:
        raise TooShortError(f"{x.size} samples is shorter than one {frame_len}-sample frame")
    n = (x.size - frame_len) // hop + 1
    view = np.lib.stride_tricks.sliding_window_view(x, frame_len)
    return view[: (n - 1) * hop + 1 : hop]


def _power_spectra(samples: np.ndarray, sample_rate_hz: int, params: MfccParams) -> np.ndarray:
    frame_len = params.frame_len(sample_rate_hz)
    hop = params.hop_len(sample_rate_hz)
    if frame_len < 1 or hop < 1:
        raise ConfigurationError("frame and hop must each span at least one sample")
    frames = _frames(samples, frame_len, hop)
    if params.window == "hamming":
        frames = frames * np.hamming(frame_len)
    spec = np.fft.rfft(frames, n=params.fft_len(sample_rate_hz), axis=1)
    return spec.real**2 + spec.imag**2


def frame_and_spectrum(clip: AudioClip, params: MfccParams = MfccParams()) -> np.ndarray:
    """Power spectra of overlapping tapered frames, shape ``(n_frames, fft_len // 2 + 1)``."""
    return _power_spectra(clip.samples, clip.sample_rate_hz, params)


def dct_cepstrum(log_mel, n_coefficients: int) -> np.ndarray:
    """``c_n = sum_m D(m) cos(pi n (m + 0.5) / M)`` for ``n < n_coefficients``.

    ``log_mel`` may be 1-D (one frame) or 2-D with bands on the last axis.
    """
    d = np.asarray(log_mel, dtype=np.float64)
    m_bands = d.shape[-1]
    if not 1 <= n_coefficients <= m_bands:
        raise ConfigurationError(f"need 1 <= R <= M, got R={n_coefficients}, M={m_bands}")
    basis = np.cos(np.pi * np.outer(np.arange(n_coefficients), np.arange(m_bands) + 0.5) / m_bands)
    return d @ basis.T


def log_mel_energies(power: np.ndarray, filterbank: MelFilterbank) -> np.ndarray:
    energies = power @ filterbank.weights.T
    return np.log(np.maximum(energies, LOG_FLOOR))


def _mfcc_vector(samples: np.ndarray, sample_rate_hz: int, params: MfccParams, filterbank: MelFilterbank) -> np.ndarray:
    if filterbank.sample_rate_hz != sample_rate_hz or filterbank.fft_len != params.fft_len(sample_rate_hz):
        raise ConfigurationError("filterbank was built for a different sample rate or FFT length")
    emphasized = pre_emphasize(samples, params.preemphasis_alpha)
    power = _power_spectra(emphasized, sample_rate_hz, params)
    cepstra = dct_cepstrum(log_mel_energies(power, filterbank), params.n_coefficients)
    coeffs = cepstra.mean(axis=0)
    return coeffs if params.include_c0 else coeffs[1:]


def extract_mfcc(
    clip: AudioClip, params: MfccParams = MfccParams(), filterbank: Optional[MelFilterbank] = None
) -> FeatureInstance:
    if filterbank is None:
        filterbank = build_mel_filterbank(params, clip.sample_rate_hz)
    coeffs = _mfcc_vector(clip.samples, clip.sample_rate_hz, params, filterbank)
    return FeatureInstance(coeffs, clip.duration_s, clip.payload_label, clip.source_id)


def extract_windows(
    clip: AudioClip, window_s: float, params: MfccParams = MfccParams(), filterbank: Optional[MelFilterbank] = None
) -> list[FeatureInstance]:
    """Segment a recording into ``window_s`` instances and featurize each, in time order."""
    if filterbank is None:
        filterbank = build_mel_filterbank(params, clip.sample_rate_hz)
    return [
        FeatureInstance(
            _mfcc_vector(seg.samples, seg.sample_rate_hz, params, filterbank), window_s, seg.payload_label, seg.source_id
        )
        for seg in segment(clip, window_s)
    ]


# -- feature CSV ----------------------------------------------------------------


def features_to_csv(instances: Sequence[FeatureInstance]) -> str:
    n = len(instances[0].coefficients) if instances else 40
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source_id", "weight_g", "window_s"] + [f"c{i}" for i in range(n)])
    for inst in instances:
        if len(inst.coefficients) != n:
            raise ConfigurationError("all feature instances must share one length")
        label = "" if inst.payload_label is None else format_number(inst.payload_label)
        w.writerow([inst.source_id, label, format_number(inst.window_s)] + [repr(float(c)) for c in inst.coefficients])
    return buf.getvalue()


def features_from_csv(text: str) -> list[FeatureInstance]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:3] != ["source_id", "weight_g", "window_s"]:
        raise FormatError("feature CSV must start with source_id,weight_g,window_s")
    n = len(rows[0]) - 3
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != n + 3:
            raise FormatError(f"line {lineno}: expected {n + 3} fields, got {len(row)}")
        try:
            label = float(row[1]) if row[1] != "" else None
            out.append(FeatureInstance(np.array([float(v) for v in row[3:]]), float(row[2]), label, row[0]))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
    return out


def frame_count(n_samples: int, frame_len: int, hop: int) -> int:
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // hop + 1


def mel_band_edges_hz(params: MfccParams = MfccParams()) -> list[tuple[float, float]]:
    """(lower, upper) edge of every triangular filter, in Hz."""
    edges = inverse_mel(np.linspace(mel_scale(params.f_low_hz), mel_scale(params.f_high_hz), params.n_mel_bands + 2))
    return [(float(edges[i]), float(edges[i + 2])) for i in range(params.n_mel_bands)]


__all__ = [
    "MfccParams",
    "MelFilterbank",
    "FeatureInstance",
    "pre_emphasize",
    "mel_scale",
    "inverse_mel",
    "build_mel_filterbank",
    "frame_and_spectrum",
    "dct_cepstrum",
    "extract_mfcc",
    "extract_windows",
    "features_to_csv",
    "features_from_csv",
    "frame_count",
]
