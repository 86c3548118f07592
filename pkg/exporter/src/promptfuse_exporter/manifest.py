"""Export manifest: which categories to encode, from what sources.

A UTF-8 JSON object:

.. code-block:: json

    {"encoder": "hash:64",
     "dim": 64,
     "categories": [
       {"name": "airplane", "group": "base",
        "descriptions": ["...", "..."],
        "images": ["airplane_1.png", "airplane_2.png"]}]}

``dim`` is optional (defaults to the encoder's dimension; if given it must
match).  Image paths are resolved relative to the manifest file.  Category
ids are assigned by position, so the exported bank's ids are dense from 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ManifestError

GROUPS = ("base", "novel")


@dataclass
class CategorySpec:
    name: str
    group: str
    descriptions: list[str] = field(default_factory=list)
    images: list[Path] = field(default_factory=list)


@dataclass
class ExportManifest:
    encoder: str
    categories: list[CategorySpec]
    dim: int | None = None

    def validate(self) -> None:
        if not self.categories:
            raise ManifestError("manifest lists no categories")
        for index, spec in enumerate(self.categories):
            where = f"category {index} ({spec.name!r})"
            if not spec.name:
                raise ManifestError(f"category {index} has an empty name")
            if spec.group not in GROUPS:
                raise ManifestError(
                    f"{where}: group must be one of {GROUPS}, got {spec.group!r}"
                )
            if not spec.descriptions and not spec.images:
                raise ManifestError(
                    f"{where}: needs at least one description or image"
                )
            for path in spec.images:
                if not Path(path).is_file():
                    raise ManifestError(f"{where}: missing image file {path}")


def load_manifest(path) -> ExportManifest:
    manifest_path = Path(path)
    try:
        payload = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ManifestError(f"unreadable manifest {manifest_path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ManifestError("manifest must be a JSON object")
    encoder = payload.get("encoder")
    if not isinstance(encoder, str) or not encoder:
        raise ManifestError("manifest needs an 'encoder' identifier string")
    raw_categories = payload.get("categories")
    if not isinstance(raw_categories, list):
        raise ManifestError("manifest 'categories' must be an array")

    base_dir = manifest_path.parent
    categories = []
    for index, raw in enumerate(raw_categories):
        if not isinstance(raw, dict):
            raise ManifestError(f"category entry {index} is not an object")
        categories.append(
            CategorySpec(
                name=str(raw.get("name", "")),
                group=str(raw.get("group", "base")),
                descriptions=[str(d) for d in raw.get("descriptions", [])],
                images=[base_dir / str(p) for p in raw.get("images", [])],
            )
        )
    dim = payload.get("dim")
    if dim is not None and (not isinstance(dim, int) or dim < 1):
        raise ManifestError(f"manifest dim must be a positive integer, got {dim!r}")
    manifest = ExportManifest(encoder=encoder, categories=categories, dim=dim)
    manifest.validate()
    return manifest
