"""Synthetic hovering-drone audio with a weight-dependent blade-pass pitch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip, DEFAULT_SAMPLE_RATE
from .errors import ConfigurationError, DomainError

WEIGHT_CLASSES_G = tuple(range(0, 501, 50))
MAX_HARMONIC_HZ = 7000.0
PITCH_SEGMENT_S = 0.1
PEAK_AMPLITUDE = 0.9
NOISE_FLOOR_DB = -40.0


@dataclass(frozen=True)
class SynthProfile:
    weight_g: float
    base_pitch_hz: float
    pitch_jitter_std_hz: float = 1.5
    n_harmonics: int = 20
    harmonic_rolloff_db_per_harmonic: float = 2.0
    duration_s: float = 170.0
    seed: int = 0

    def __post_init__(self):
        if self.pitch_jitter_std_hz < 0 or self.harmonic_rolloff_db_per_harmonic < 0:
            raise ConfigurationError("jitter and rolloff must be non-negative")
        if self.n_harmonics < 1:
            raise ConfigurationError("need at least one harmonic")
        if self.duration_s <= 0:
            raise ConfigurationError("duration must be positive")
        lo = self.base_pitch_hz - 3 * self.pitch_jitter_std_hz
        hi = self.base_pitch_hz + 3 * self.pitch_jitter_std_hz
        if lo < 170.0 or hi > 245.0:
            raise ConfigurationError(f"pitch {self.base_pitch_hz} +/- 3*{self.pitch_jitter_std_hz} Hz leaves [170, 245] Hz")

    @property
    def retained_harmonics(self) -> int:
        return int(min(self.n_harmonics, np.ceil(MAX_HARMONIC_HZ / self.base_pitch_hz) - 1))


def default_profile(weight_g: float, duration_s: float = 170.0, seed: int = 0) -> SynthProfile:
    """Linear weight-to-pitch map: 195 Hz empty, +0.07 Hz per gram, wider jitter at 500 g."""
    if not 0 <= weight_g <= 500:
        raise DomainError(f"weight {weight_g} g outside [0, 500] g")
    jitter = 3.0 if weight_g >= 500 else 1.5
    return SynthProfile(
        weight_g=weight_g,
        base_pitch_hz=195.0 + 0.07 * weight_g,
        pitch_jitter_std_hz=jitter,
        duration_s=duration_s,
        seed=seed,
    )


def synthesize(profile: SynthProfile, sample_rate_hz: int = DEFAULT_SAMPLE_RATE) -> AudioClip:
    n_harm = profile.retained_harmonics
    top = n_harm * (profile.base_pitch_hz + 3 * profile.pitch_jitter_std_hz)
    if sample_rate_hz < 2 * top:
        raise ConfigurationError(f"{sample_rate_hz} Hz cannot represent harmonics up to {top:.1f} Hz")
    rng = np.random.default_rng(profile.seed)
    n = int(round(profile.duration_s * sample_rate_hz))
    seg_len = max(1, int(round(PITCH_SEGMENT_S * sample_rate_hz)))
    n_seg = -(-n // seg_len)
    pitches = rng.normal(profile.base_pitch_hz, profile.pitch_jitter_std_hz, n_seg)
    inst_freq = np.repeat(pitches, seg_len)[:n]
    phase = 2.0 * np.pi * np.cumsum(inst_freq) / sample_rate_hz

    # harmonic k is Im(z**k); all harmonics share zero initial phase so the
    # only class-dependent structure is the pitch itself
    z = np.exp(1j * phase)
    zk = z.copy()
    x = np.zeros(n)
    for k in range(1, n_harm + 1):
        amp = 10.0 ** (-profile.harmonic_rolloff_db_per_harmonic * (k - 1) / 20.0)
        x += amp * zk.imag
        zk *= z
    x *= PEAK_AMPLITUDE / np.max(np.abs(x))
    floor_std = np.sqrt(np.mean(x**2) * 10.0 ** (NOISE_FLOOR_DB / 10.0))
    x += rng.normal(0.0, floor_std, n)
    return AudioClip(np.clip(x, -1.0, 1.0), sample_rate_hz, f"synth_{profile.weight_g:g}g", profile.weight_g)


def synth_corpus(
    weights=WEIGHT_CLASSES_G, duration_s: float = 170.0, seed: int = 0, sample_rate_hz: int = DEFAULT_SAMPLE_RATE
) -> list[AudioClip]:
    """One recording per weight; each class gets its own child seed."""
    children = np.random.SeedSequence(seed).spawn(len(weights))
    clips = []
    for w, child in zip(weights, children):
        profile = default_profile(w, duration_s, seed=int(child.generate_state(1)[0]))
        clips.append(synthesize(profile, sample_rate_hz))
    return clips
