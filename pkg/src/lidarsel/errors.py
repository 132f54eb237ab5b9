"""Exception hierarchy shared by all pipeline stages.

``exit_code`` is what the CLI returns when the error escapes to ``main``.
"""


class PipelineError(Exception):
    exit_code = 1


class ConfigError(PipelineError):
    """Invalid or inconsistent run configuration / parameters."""

    exit_code = 2


class MissingModelFilesError(PipelineError):
    """Prediction or feature files absent when scoring needs them."""

    exit_code = 3

    def __init__(self, frame_ids):
        self.frame_ids = sorted(frame_ids)
        super().__init__(
            "missing model files for frames: " + ", ".join(self.frame_ids)
        )


class FormatError(PipelineError):
    """Malformed on-disk data: wrong size, bad header, truncation."""

    exit_code = 4


class ValidationError(FormatError):
    """Well-formed container holding invalid values (NaN, bad row sums)."""


class ContractViolationError(PipelineError):
    """A caller broke an internal API contract; signals a bug, not bad data."""
