# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

from collections.abc import Iterable


class EegFuseError(Exception):
    """Base of every error raised on purpose by eegfuse."""


class ParameterError(EegFuseError, ValueError):
    pass


class NumericError(EegFuseError, ArithmeticError):
    pass


class DegeneracyError(NumericError):
    def __init__(self, message: str, achievable: int):
        super().__init__(message)
        self.achievable = achievable


class CtcInfeasibleError(ParameterError):
    def __init__(self, message: str, ids: Iterable[str] = ()):
        self.ids = list(ids)
        if self.ids:
            message = f"{message}: {', '.join(self.ids)}"
        super().__init__(message)


class ManifestError(EegFuseError, ValueError):
    def __init__(self, message: str, utterance_id: str | None = None):
        if utterance_id is not None:
            message = f"[{utterance_id}] {message}"
        super().__init__(message)
        self.utterance_id = utterance_id


class MissingFileError(ManifestError):
    pass


class WavFormatError(ManifestError):
    pass


class ChannelCountError(ManifestError):
    pass


class DuplicateIdError(ManifestError):
    pass


class CheckpointError(EegFuseError, ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointChecksumError(CheckpointError):
    pass


class CheckpointMismatchError(CheckpointError):
    """Stored checkpoints were trained under a different configuration."""

    def __init__(self, message: str, keys: Iterable[str] = ()):
        self.keys = sorted(keys)
        if self.keys:
            message = f"{message}: {', '.join(self.keys)}"
        super().__init__(message)


class ConfigError(EegFuseError, ValueError):
    pass


class OutputError(EegFuseError, OSError):
    """A result or corpus file could not be written."""


class LeakageError(EegFuseError, RuntimeError):
    pass


class FrozenModelError(EegFuseError, RuntimeError):
    pass
