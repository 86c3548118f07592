"""Bridge from real data to the prompt-fusion engine: encodes category
descriptions and example images and writes them in the engine's on-disk
bank and patch-features formats."""

from .encoders import ClipEncoder, HashEncoder, load_encoder
from .errors import (
    EncoderUnavailableError,
    ExporterError,
    ManifestError,
    UnsupportedEncoderError,
)
from .export import export_bank, export_patch_features, pooled_patches
from .manifest import CategorySpec, ExportManifest, load_manifest

__version__ = "0.1.0"

__all__ = [
    "CategorySpec",
    "ClipEncoder",
    "EncoderUnavailableError",
    "ExportManifest",
    "ExporterError",
    "HashEncoder",
    "ManifestError",
    "UnsupportedEncoderError",
    "export_bank",
    "export_patch_features",
    "load_encoder",
    "load_manifest",
    "pooled_patches",
]
