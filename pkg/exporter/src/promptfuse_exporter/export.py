"""Write prompt banks and patch-features files from real inputs.

The on-disk layouts are produced here byte-for-byte as the engine's
formats documentation specifies (directory with ``manifest.json`` plus raw
little-endian float32 blobs); nothing is imported from the engine, so the
exporter stands alone and the files are the only interface.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ManifestError, UnsupportedEncoderError
from .manifest import ExportManifest

BANK_FORMAT_VERSION = 1


def _write_blob(path: Path, rows: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(rows, dtype="<f4").tobytes())


def export_bank(manifest: ExportManifest, encoder, out_path) -> Path:
    """Encode every category and write a loadable bank directory.

    All embeddings are L2-normalized; counts in the written manifest match
    the input manifest exactly.  Validation (including image existence)
    happens before any output is created.
    """
    manifest.validate()
    if manifest.dim is not None and manifest.dim != encoder.dim:
        raise ManifestError(
            f"manifest dim {manifest.dim} does not match encoder dim {encoder.dim}"
        )
    dim = encoder.dim

    text_rows = []
    image_rows = []
    entries = []
    for cid, spec in enumerate(manifest.categories):
        texts = (
            encoder.encode_texts(spec.descriptions)
            if spec.descriptions
            else np.empty((0, dim), dtype=np.float64)
        )
        images = (
            encoder.encode_images(spec.images)
            if spec.images
            else np.empty((0, dim), dtype=np.float64)
        )
        text_rows.append(texts)
        image_rows.append(images)
        entries.append(
            {
                "id": cid,
                "name": spec.name,
                "group": spec.group,
                "text_count": int(texts.shape[0]),
                "image_count": int(images.shape[0]),
            }
        )

    directory = Path(out_path)
    directory.mkdir(parents=True, exist_ok=True)
    bank_manifest = {
        "format_version": BANK_FORMAT_VERSION,
        "dim": dim,
        "categories": entries,
        "provenance": f"promptfuse-exporter, encoder={encoder.identifier}",
    }
    (directory / "manifest.json").write_text(
        json.dumps(bank_manifest, indent=2) + "\n", encoding="utf-8"
    )
    _write_blob(directory / "text.f32", np.vstack(text_rows) if text_rows else
                np.empty((0, dim)))
    _write_blob(directory / "image.f32", np.vstack(image_rows) if image_rows else
                np.empty((0, dim)))
    return directory


def pooled_patches(feature_map: np.ndarray, patches: int) -> np.ndarray:
    """Mean-pool a (G, G, dim) feature map over a sqrt(P) x sqrt(P) grid."""
    side = math.isqrt(patches)
    if side * side != patches:
        raise ValueError(
            f"patch count must be a perfect square for grid pooling, got {patches}"
        )
    grid = feature_map.shape[0]
    if grid % side != 0:
        raise UnsupportedEncoderError(
            f"feature map of {grid}x{grid} cells cannot be pooled into "
            f"{side}x{side} patches"
        )
    block = grid // side
    pooled = feature_map.reshape(side, block, side, block, -1).mean(axis=(1, 3))
    rows = pooled.reshape(patches, -1)
    return rows / np.linalg.norm(rows, axis=1)[:, None]


def export_patch_features(image_paths, encoder, patches, out_dir) -> list[Path]:
    """Write one patch-features directory per image under ``out_dir``.

    Each directory holds ``manifest.json`` (kind ``patch_features``) and
    ``features.f32`` with ``patches`` rows pooled from the encoder's
    spatial feature map.  Deterministic for a fixed encoder and inputs.
    """
    if not hasattr(encoder, "image_feature_map"):
        raise UnsupportedEncoderError(
            f"encoder {getattr(encoder, 'identifier', encoder)!r} exposes no "
            "spatial feature map; cannot export patch features"
        )
    image_paths = [Path(p) for p in image_paths]
    for path in image_paths:
        if not path.is_file():
            raise ManifestError(f"missing image file {path}")

    out_root = Path(out_dir)
    written = []
    for index, path in enumerate(image_paths):
        feature_map = encoder.image_feature_map(path)
        rows = pooled_patches(feature_map, patches)
        directory = out_root / f"{index:03d}_{path.stem}"
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "manifest.json").write_text(
            json.dumps(
                {
                    "format_version": 1,
                    "kind": "patch_features",
                    "dim": int(rows.shape[1]),
                    "count": int(rows.shape[0]),
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
        _write_blob(directory / "features.f32", rows)
        written.append(directory)
    return written
