"""Exception types shared across the toolkit."""


class DoakitError(Exception):
    """Base class for all toolkit errors.

    ``stage`` names the pipeline stage the error belongs to; the CLI and the
    service use it to tag messages.
    """

    stage = "library"


class EmptyPairSet(DoakitError):
    """No microphone pair is closer than the spatial-alias bound v/f_max."""

    stage = "config"


class SignalTooShort(DoakitError):
    """Input shorter than one analysis frame."""

    stage = "stft"


class EmptyWindow(DoakitError):
    """Covariance requested over an empty frame window."""

    stage = "subspace"


class ConvergenceFailure(DoakitError):
    """Eigendecomposition did not converge (pathological input)."""

    stage = "subspace"


class InvalidSourceCount(DoakitError):
    """Source count must satisfy 1 <= count < number of microphones."""

    stage = "subspace"


class NoOverlap(DoakitError):
    """Estimate and ground-truth trajectories share no usable time span."""

    stage = "evaluate"


class EmptyInput(DoakitError):
    """Metric requested over zero matched frames."""

    stage = "evaluate"


class DelayTooLarge(DoakitError):
    """Requested delay exceeds what the signal buffer can absorb."""

    stage = "synth"


class UnsupportedFormat(DoakitError):
    """WAV encoding the reader does not handle."""

    stage = "wav"


class CorruptHeader(DoakitError):
    """Malformed or truncated WAV container; message carries a byte offset."""

    stage = "wav"


class ConfigError(DoakitError):
    """Run configuration rejected before any audio processing."""

    stage = "config"


class PipelineError(DoakitError):
    """Wrapper carrying stage (and frame) context for a failure inside a run."""

    def __init__(self, stage: str, message: str, frame_index: int | None = None):
        self.stage = stage
        self.frame_index = frame_index
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)
