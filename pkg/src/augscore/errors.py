"""Exception hierarchy shared across the package.

Every error the library raises deliberately derives from ``AugScoreError``,
so callers (and the CLI) can distinguish expected failures from bugs.
"""


class AugScoreError(Exception):
    """Base class for all errors raised by this package."""


class DatasetError(AugScoreError):
    """Malformed data files, label-space violations, infeasible split plans."""


class TemplateError(AugScoreError):
    """Invalid prompt templates or rendering preconditions."""


class GenerationError(AugScoreError):
    """Backend failures: missing credentials, exhausted retries, bad bodies."""


class ParseError(AugScoreError):
    """Completion text that does not follow the required output structure."""

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class PoolError(AugScoreError):
    """Augmentation-pool construction failures."""


class ClassifierError(AugScoreError):
    """Featurizer and training failures."""


class MetricsError(AugScoreError):
    """Invalid metric inputs (length mismatches, empty aggregations)."""


class SweepError(AugScoreError):
    """Sweep configuration or orchestration failures."""


class ReportError(AugScoreError):
    """Report emission failures (IO, overwrite refusal)."""
