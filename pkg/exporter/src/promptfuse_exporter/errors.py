class ExporterError(Exception):
    """Base class for exporter failures."""


class ManifestError(ExporterError):
    """The export manifest is malformed or references missing files."""


class EncoderUnavailableError(ExporterError):
    """The requested encoder cannot be constructed in this environment."""


class UnsupportedEncoderError(ExporterError):
    """The encoder lacks a capability the operation needs (e.g. spatial
    feature maps for patch export)."""
