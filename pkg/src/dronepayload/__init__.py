"""Acoustic payload-weight estimation for hovering quadcopters.

MFCC features feed a one-vs-one polynomial SVM that names the payload class;
a spectral-pitch rule flags whether any payload is present at all.
"""

__version__ = "0.1.0"

from .audio_io import AudioClip, DatasetManifest, ManifestEntry, load_wav, parse_wav, read_manifest, segment, write_wav
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DimensionError,
    DomainError,
    EmptyAudioError,
    EmptyDistributionError,
    FormatError,
    NoPitchError,
    PayloadError,
    TooShortError,
    UndefinedSnrError,
    UnsupportedCodecError,
)
from .evaluation import (
    ClassifierSpec,
    ConfusionMatrix,
    EvaluationReport,
    chrono_split,
    run_classifier_comparison,
    run_snr_study,
    run_weight_classification,
    run_window_study,
)
from .mfcc import FeatureInstance, MelFilterbank, MfccParams, build_mel_filterbank, extract_mfcc, extract_windows
from .noise import add_awgn, snr_grid
from .pitch import PitchDistribution, build_pitch_distribution, detect_payload, estimate_pitch, presence_error_rate
from .svm import BinarySvm, KernelSpec, OvoSvmModel, dumps_model, loads_model, predict, train_binary, train_ovo
from .synth import default_profile, synth_corpus, synthesize

__all__ = [name for name in dir() if not name.startswith("_")]
