"""Exception types raised across the package."""


class SpectrumMDLError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SpectrumMDLError, ValueError):
    """Non-finite or otherwise malformed numeric input."""


class InputShapeError(SpectrumMDLError, ValueError):
    """Vector or matrix with the wrong dimensions."""


class InvalidSpectrumError(SpectrumMDLError, ValueError):
    """A vector that is not a valid spectrum (entries must be 0 or in [a, b])."""


class PatternMismatchError(SpectrumMDLError, ValueError):
    """A spectrum is not preserved by the pattern it was paired with."""


class InvalidBoxError(SpectrumMDLError, ValueError):
    """Perturbation half-widths that are nonpositive or do not match the pattern."""


class EmptyInputError(SpectrumMDLError, ValueError):
    """An operation that needs at least one sample received none."""


class NotCertifiedError(SpectrumMDLError):
    """A pattern needed a certified grid but none is available."""


class ResolutionError(SpectrumMDLError, ValueError):
    """A discretisation grid would exceed its point budget."""


class RejectedProbeError(SpectrumMDLError, ValueError):
    """Gradient-check probe sits too close to the truncation discontinuity."""


class ConfigError(SpectrumMDLError, ValueError):
    """Invalid run or training configuration."""


class TrainingDivergenceError(SpectrumMDLError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class StageError(SpectrumMDLError):
    """Wraps an exception raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
