class ExporterError(Exception):
    """Base class for exporter failures."""


class AudioError(ExporterError):
    """Unreadable or unsupported WAV input."""


class ManifestError(ExporterError):
    """Manifest CSV missing columns or unreadable."""


class BackboneError(ExporterError):
    """The feature backbone could not be loaded or misbehaved."""
