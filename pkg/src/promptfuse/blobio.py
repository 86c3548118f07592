"""Shared manifest + float32-blob file formats for patch features,
proposals, and fused prompt sets.

Every artifact is a directory holding a ``manifest.json`` and one raw
little-endian float32 blob, following the same convention as prompt
banks so the whole repo speaks one format family.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .classifier import Proposal
from .errors import BankFormatError
from .fusion import FusedPromptSet, MaskSpec

FORMAT_VERSION = 1


def _write_manifest(directory: Path, manifest: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )


def _read_manifest(directory: Path, kind: str) -> dict:
    path = directory / "manifest.json"
    if not path.is_file():
        raise BankFormatError(f"missing manifest: {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise BankFormatError(f"unreadable manifest {path}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise BankFormatError(
            f"unsupported format_version {manifest.get('format_version')!r} in {path}"
        )
    if manifest.get("kind") != kind:
        raise BankFormatError(
            f"expected kind {kind!r} in {path}, found {manifest.get('kind')!r}"
        )
    return manifest


def _write_blob(directory: Path, name: str, rows: np.ndarray) -> None:
    (directory / name).write_bytes(
        np.ascontiguousarray(rows, dtype="<f4").tobytes()
    )


def _read_blob(directory: Path, name: str, dim: int, count: int) -> np.ndarray:
    path = directory / name
    if not path.is_file():
        raise BankFormatError(f"missing blob: {path}")
    raw = path.read_bytes()
    expected = count * dim * 4
    if len(raw) != expected:
        raise BankFormatError(
            f"{path}: expected {expected} bytes ({count} rows x {dim} floats), "
            f"found {len(raw)} bytes"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(count, dim).astype(np.float64)


def write_patch_features(patches: np.ndarray, path) -> None:
    """One image's patch features: ``manifest.json`` + ``features.f32``."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 2:
        raise ValueError(f"patch features must be 2-D, got shape {patches.shape}")
    directory = Path(path)
    _write_manifest(
        directory,
        {
            "format_version": FORMAT_VERSION,
            "kind": "patch_features",
            "dim": patches.shape[1],
            "count": patches.shape[0],
        },
    )
    _write_blob(directory, "features.f32", patches)


def read_patch_features(path) -> np.ndarray:
    directory = Path(path)
    manifest = _read_manifest(directory, "patch_features")
    return _read_blob(
        directory, "features.f32", int(manifest["dim"]), int(manifest["count"])
    )


def write_proposals(proposals: list[Proposal], path) -> None:
    """Proposal features plus optional labels: manifest + ``features.f32``."""
    if not proposals:
        raise ValueError("cannot write an empty proposal set")
    rows = np.vstack([np.asarray(p.feature, dtype=np.float64) for p in proposals])
    labels = [p.label for p in proposals]
    has_labels = all(l is not None for l in labels)
    directory = Path(path)
    _write_manifest(
        directory,
        {
            "format_version": FORMAT_VERSION,
            "kind": "proposals",
            "dim": rows.shape[1],
            "count": rows.shape[0],
            "labels": [int(l) for l in labels] if has_labels else None,
        },
    )
    _write_blob(directory, "features.f32", rows)


def read_proposals(path) -> list[Proposal]:
    directory = Path(path)
    manifest = _read_manifest(directory, "proposals")
    rows = _read_blob(
        directory, "features.f32", int(manifest["dim"]), int(manifest["count"])
    )
    labels = manifest.get("labels")
    if labels is not None and len(labels) != rows.shape[0]:
        raise BankFormatError(
            f"label count {len(labels)} does not match feature count {rows.shape[0]}"
        )
    return [
        Proposal(
            feature=rows[i],
            label=None if labels is None else int(labels[i]),
        )
        for i in range(rows.shape[0])
    ]


def write_fused(
    fused: FusedPromptSet,
    path,
    names: dict[int, str] | None = None,
    sidecar: dict | None = None,
) -> None:
    """Fused prompt set: active rows ascending by id, plus an optional
    ``fusion.json`` sidecar (mask, per-patch selections, fallback flags)."""
    directory = Path(path)
    active = fused.active_ids()
    _write_manifest(
        directory,
        {
            "format_version": FORMAT_VERSION,
            "kind": "fused_prompts",
            "dim": fused.dim,
            "categories": [
                {
                    "id": cid,
                    "name": (names or {}).get(cid, f"category_{cid}"),
                    "excluded": cid not in set(active),
                }
                for cid in fused.ids()
            ],
        },
    )
    rows = (
        np.vstack([fused.vector(cid) for cid in active])
        if active
        else np.empty((0, fused.dim), dtype=np.float64)
    )
    _write_blob(directory, "fused.f32", rows)
    if sidecar is not None:
        (directory / "fusion.json").write_text(
            json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )


def read_fused(path) -> FusedPromptSet:
    directory = Path(path)
    manifest = _read_manifest(directory, "fused_prompts")
    dim = int(manifest["dim"])
    categories = manifest.get("categories", [])
    active_ids = [int(c["id"]) for c in categories if not c.get("excluded", False)]
    rows = _read_blob(directory, "fused.f32", dim, len(active_ids))
    entries: dict[int, np.ndarray | None] = {
        int(c["id"]): None for c in categories
    }
    for cid, row in zip(sorted(active_ids), rows):
        entries[cid] = row
    return FusedPromptSet(dim=dim, entries=entries)


def mask_to_json(mask: MaskSpec) -> list[dict]:
    return [
        {
            "id": cid,
            "keep_text": bool(mask[cid].keep_text),
            "keep_image": bool(mask[cid].keep_image),
        }
        for cid in sorted(mask)
    ]
