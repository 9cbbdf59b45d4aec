import numpy as np

from dronepayload import AudioClip

FS = 44100


def tone(freq, duration_s, fs=FS, amp=0.9, phase=0.0, label=None, source_id="tone"):
    t = np.arange(int(round(duration_s * fs))) / fs
    return AudioClip(amp * np.sin(2 * np.pi * freq * t + phase), fs, source_id, label)


def blobs(centers, n_per, spread, seed=0):
    rng = np.random.default_rng(seed)
    X, y = [], []
    for label, c in centers.items():
        X.append(np.asarray(c, dtype=float) + spread * rng.standard_normal((n_per, len(c))))
        y += [label] * n_per
    return np.vstack(X), np.array(y, dtype=float)
