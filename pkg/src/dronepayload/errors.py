"""Exception hierarchy.

Every error raised on bad input derives from :class:`PayloadError`.  The CLI
maps :class:`ConvergenceError` to exit status 4 and everything else here to 3.
"""


class PayloadError(Exception):
    """Base class for all package errors."""


class FormatError(PayloadError):
    """Malformed WAV container or manifest."""


class UnsupportedCodecError(PayloadError):
    """WAV encoding other than integer PCM or 32-bit IEEE float."""


class EmptyAudioError(PayloadError):
    pass


class TooShortError(PayloadError):
    """Signal too short for the requested analysis."""


class DomainError(PayloadError, ValueError):
    pass


class ConfigurationError(PayloadError, ValueError):
    pass


class DimensionError(PayloadError, ValueError):
    pass


class NoPitchError(PayloadError):
    pass


class EmptyDistributionError(PayloadError):
    pass


class UndefinedSnrError(PayloadError):
    """SNR requested for a silent clip."""


class ConvergenceError(PayloadError):
    def __init__(self, message, worst_violation=None, pair=None):
        super().__init__(message)
        self.worst_violation = worst_violation
        self.pair = pair
