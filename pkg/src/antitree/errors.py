"""Semantic exception hierarchy shared by all modules."""


class AntitreeError(Exception):
    """Base class for all package errors."""


class DistributionError(AntitreeError):
    """Invalid single-site potential specification."""


class DomainError(AntitreeError):
    """Input outside the mathematical domain of an operation.

    Carries a short machine-readable ``reason`` so callers (and the CLI
    manifest) can distinguish e.g. an energy inside the scaled support from
    an energy with |h| >= 2.
    """

    def __init__(self, message: str, reason: str = ""):
        super().__init__(message)
        self.reason = reason


class InvalidLawError(AntitreeError):
    """Invalid shell growth specification (bad custom sequence, d < 1, ...)."""


class SizeLimitError(AntitreeError):
    """Brute-force or enumeration request beyond the combinatorial guard."""


class SingularShellError(AntitreeError):
    """A sampled shell has a vanishing inverse mean: the transfer matrix at
    that shell is the pure quarter rotation and the harmonic entry does not
    exist.  Trajectories abort with this error instead of silently rotating,
    because it signals an energy configuration outside the valid window."""

    def __init__(self, message: str, shell: int = -1):
        super().__init__(message)
        self.shell = shell


class DegenerateDenominatorError(AntitreeError):
    """Truncated m-function denominator vanished (real-energy diagnostics)."""


class InsufficientTrialsError(AntitreeError):
    """An ensemble statistic was requested from fewer than two trials."""


class ConfigError(AntitreeError):
    """Experiment configuration failed validation."""
