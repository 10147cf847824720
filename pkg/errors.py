"""
errors.py

Exception types shared by the audio event recognition modules.

Key Classes:
- AudioEventError: Base class for every error raised on purpose by the toolkit.
- DecodeError: Malformed RIFF/WAVE container; the message names the offending chunk.
- UnsupportedFormatError: Valid container with a codec or layout we do not read.
- EmptyAudioError: Audio file without a single sample frame.
- ShapeError: Tensor or layer geometry that does not fit; names the layer.
- NonFiniteError: NaN/Inf found at a layer boundary in debug mode.
- DivergenceError: Training loss became non-finite.
- CheckpointError: Checkpoint file that cannot be read or does not match its spec.
- ConfigError: Invalid or inconsistent run configuration.

Usage:
The command line layer maps these to exit codes (2 for ConfigError, 3 for
numeric failures, 1 for everything else).
"""


class AudioEventError(Exception):
    """Base class for toolkit errors."""


class DecodeError(AudioEventError):
    """Raised when a WAV container is malformed."""

    def __init__(self, chunk, message):
        self.chunk = chunk
        super().__init__(f"chunk '{chunk}': {message}")


class UnsupportedFormatError(AudioEventError):
    """Raised for sample formats or channel layouts outside the supported set."""


class EmptyAudioError(AudioEventError):
    """Raised when a file decodes to zero samples."""


class ShapeError(AudioEventError, ValueError):
    """Raised when shapes do not agree; `layer` is the layer index when known."""

    def __init__(self, message, layer=None):
        self.layer = layer
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)


class NonFiniteError(AudioEventError, FloatingPointError):
    """Raised by debug-mode checks when an activation holds NaN or Inf."""


class DivergenceError(AudioEventError):
    """Raised when the training loss is no longer finite."""

    def __init__(self, epoch, step, loss):
        self.epoch = epoch
        self.step = step
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch}, step {step} (loss={loss})")


class CheckpointError(AudioEventError):
    """Raised when a checkpoint cannot be parsed or validated."""


class ConfigError(AudioEventError):
    """Raised for invalid command line or config file settings."""
