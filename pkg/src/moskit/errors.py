"""Exception taxonomy.

Every error raised by this package derives from :class:`MoskitError`, so
callers can catch one type at a pipeline boundary.  Subclasses distinguish
the failure classes that the CLI maps onto exit codes: usage/config (1),
data/format (2), numeric (3).
"""


class MoskitError(Exception):
    """Base class for all package errors."""


class ConfigError(MoskitError):
    """Invalid or inconsistent configuration (bad architecture, bad hyperparameters)."""


class InvalidInputError(MoskitError):
    """An operation was called with inputs that violate its preconditions."""


class ShapeError(InvalidInputError):
    """Array shapes do not match what a layer or model expects."""


class AudioFormatError(MoskitError):
    """Malformed RIFF/WAVE container."""


class UnsupportedAudioError(AudioFormatError):
    """Well-formed WAV, but a codec or channel layout we do not read."""


class FeatureFormatError(MoskitError):
    """SSL feature stream does not start with a valid header."""


class FeatureCorruptionError(FeatureFormatError):
    """SSL feature stream ends before the declared payload."""


class FeatureValidationError(MoskitError):
    """SSL feature payload decodes but violates invariants (NaN/inf)."""


class CheckpointFormatError(MoskitError):
    """Checkpoint stream has a bad magic, version, or header."""


class CheckpointCorruptionError(CheckpointFormatError):
    """Checkpoint stream is truncated or its payload is inconsistent."""


class ManifestSchemaError(MoskitError):
    """Manifest CSV is missing required columns."""


class ManifestValidationError(MoskitError):
    """A manifest row violates a field invariant; the message names the row."""


class DuplicateUtteranceError(ManifestValidationError):
    """Two manifest rows share an utterance_id."""


class DatasetError(MoskitError):
    """A dataset entry could not be materialized (unreadable audio/features)."""


class DegenerateInputError(MoskitError):
    """A metric is undefined on this input (e.g. constant predictions)."""


class NumericError(MoskitError):
    """Non-finite values appeared during training or inference."""
