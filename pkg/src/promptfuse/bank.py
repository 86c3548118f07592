"""Multi-modal prompt banks: construction, persistence, validation, querying.

A bank maps each category to a list of text prompt embeddings and a list of
image prompt embeddings, all sharing one dimension.  Banks are immutable
after construction and safe to share across threads.

On-disk format (directory, loadable from any language without a
serialization library):

* ``manifest.json`` - UTF-8 JSON object with keys ``format_version`` (=1),
  ``dim``, ``categories`` (array of ``{id, name, group, text_count,
  image_count}`` with ``group`` in ``{"base", "novel"}``), ``provenance``.
* ``text.f32`` / ``image.f32`` - raw little-endian IEEE-754 32-bit floats,
  row-major, rows ordered by ascending category id then prompt index,
  row length = ``dim``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import ZERO_NORM_EPS
from .errors import BankFormatError, DegenerateInputError

FORMAT_VERSION = 1
GROUPS = ("base", "novel")
UNIT_NORM_TOLERANCE = 1e-3
MEAN_NORM_EPS = 1e-9


class Modality(enum.Enum):
    TEXT = "text"
    IMAGE = "image"


@dataclass(eq=False)
class CategoryEntry:
    """One category: id, human name, base/novel group, and its prompts.

    ``text_prompts`` and ``image_prompts`` are float64 arrays of shape
    (count, dim); either may be empty (shape (0, dim)).
    """

    id: int
    name: str
    group: str
    text_prompts: np.ndarray
    image_prompts: np.ndarray

    def prompts(self, modality: Modality) -> np.ndarray:
        return self.text_prompts if modality is Modality.TEXT else self.image_prompts

    def prompt_count(self, modality: Modality) -> int:
        return self.prompts(modality).shape[0]


@dataclass(eq=False)
class PromptBank:
    dim: int
    categories: list[CategoryEntry]
    provenance: str = ""
    _mean_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.categories = sorted(self.categories, key=lambda c: c.id)

    def ids(self) -> list[int]:
        return [c.id for c in self.categories]

    def entry(self, category_id: int) -> CategoryEntry:
        if "by_id" not in self._mean_cache:
            self._mean_cache["by_id"] = {c.id: c for c in self.categories}
        try:
            return self._mean_cache["by_id"][category_id]
        except KeyError:
            raise KeyError(f"no category with id {category_id}") from None

    def group_ids(self, group: str) -> list[int]:
        return [c.id for c in self.categories if c.group == group]

    def category_means(self, modality: Modality):
        """Per-category mean prompt vectors for one modality.

        Returns ``(ids, means)`` where ``means[i]`` is the arithmetic mean
        of category ``ids[i]``'s stored prompts.  Categories with no prompt
        in the modality are omitted.  Cached; banks are immutable.
        """
        key = modality.value
        if key not in self._mean_cache:
            ids = []
            rows = []
            for entry in self.categories:
                if entry.prompt_count(modality) == 0:
                    continue
                ids.append(entry.id)
                rows.append(mean_embedding(entry, modality))
            means = (
                np.vstack(rows) if rows else np.empty((0, self.dim), dtype=np.float64)
            )
            self._mean_cache[key] = (np.asarray(ids, dtype=np.int64), means)
        return self._mean_cache[key]


class Violation(NamedTuple):
    """A single invariant violation found by validate_bank."""

    category_id: int | None
    field: str
    message: str

    def __str__(self):
        where = "bank" if self.category_id is None else f"category {self.category_id}"
        return f"{where}: {self.field}: {self.message}"


def mean_embedding(entry: CategoryEntry, modality: Modality) -> np.ndarray:
    """Arithmetic mean of a category's stored prompts in one modality.

    The result is deliberately not re-normalized: downstream scoring is
    cosine-based, so renormalizing would not change any score.
    """
    prompts = entry.prompts(modality)
    if prompts.shape[0] == 0:
        raise DegenerateInputError(
            f"category {entry.id} has no {modality.value} prompts to average"
        )
    mean = prompts.mean(axis=0)
    if float(np.linalg.norm(mean)) < MEAN_NORM_EPS:
        raise DegenerateInputError(
            f"category {entry.id}: {modality.value} prompts cancel to a "
            "near-zero mean"
        )
    return mean


def validate_bank(bank: PromptBank) -> list[Violation]:
    """Report every invariant violation; an empty list means the bank is valid.

    Violations are data, not failures: this never raises on bad content.
    """
    violations: list[Violation] = []
    if bank.dim < 1:
        violations.append(Violation(None, "dim", f"dimension must be >= 1, got {bank.dim}"))

    seen: set[int] = set()
    for entry in bank.categories:
        if entry.id < 0:
            violations.append(Violation(entry.id, "id", "negative category id"))
        if entry.id in seen:
            violations.append(Violation(entry.id, "id", "duplicate category id"))
        seen.add(entry.id)
        if entry.group not in GROUPS:
            violations.append(
                Violation(entry.id, "group", f"group must be one of {GROUPS}, got {entry.group!r}")
            )
        if entry.prompt_count(Modality.TEXT) + entry.prompt_count(Modality.IMAGE) < 1:
            violations.append(
                Violation(entry.id, "prompts", "no prompts in either modality")
            )
        for modality in Modality:
            prompts = entry.prompts(modality)
            if prompts.ndim != 2 or prompts.shape[1] != bank.dim:
                violations.append(
                    Violation(
                        entry.id,
                        f"{modality.value}_prompts",
                        f"expected shape (*, {bank.dim}), got {prompts.shape}",
                    )
                )
                continue
            finite = np.isfinite(prompts)
            if not finite.all():
                row = int(np.argwhere(~finite.all(axis=1))[0][0])
                violations.append(
                    Violation(
                        entry.id,
                        f"{modality.value}_prompts",
                        f"non-finite value in prompt {row}",
                    )
                )
                continue
            norms = np.linalg.norm(prompts, axis=1)
            off = np.abs(norms - 1.0) > UNIT_NORM_TOLERANCE
            if off.any():
                row = int(np.argmax(off))
                violations.append(
                    Violation(
                        entry.id,
                        f"{modality.value}_prompts",
                        f"prompt {row} norm {norms[row]:.6f} is not unit within "
                        f"{UNIT_NORM_TOLERANCE}",
                    )
                )

    ids = sorted(seen)
    if ids != list(range(len(bank.categories))):
        violations.append(
            Violation(None, "ids", f"category ids must be dense from 0, got {ids}")
        )
    return violations


def save_bank(bank: PromptBank, path) -> None:
    """Write a bank to ``path`` (a directory) in the on-disk format.

    ``load_bank(save_bank(...))`` reproduces the bank bit-exactly at the
    stored float32 precision.
    """
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)

    manifest = {
        "format_version": FORMAT_VERSION,
        "dim": bank.dim,
        "categories": [
            {
                "id": entry.id,
                "name": entry.name,
                "group": entry.group,
                "text_count": entry.prompt_count(Modality.TEXT),
                "image_count": entry.prompt_count(Modality.IMAGE),
            }
            for entry in bank.categories
        ],
        "provenance": bank.provenance,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    for modality, blob_name in ((Modality.TEXT, "text.f32"), (Modality.IMAGE, "image.f32")):
        rows = [entry.prompts(modality) for entry in bank.categories]
        stacked = (
            np.vstack(rows) if rows else np.empty((0, bank.dim), dtype=np.float64)
        )
        (directory / blob_name).write_bytes(
            np.ascontiguousarray(stacked, dtype="<f4").tobytes()
        )


def _read_manifest(directory: Path) -> dict:
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise BankFormatError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise BankFormatError(f"unreadable manifest {manifest_path}: {exc}") from exc
    if not isinstance(manifest, dict):
        raise BankFormatError("manifest must be a JSON object")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise BankFormatError(
            f"unsupported format_version {manifest.get('format_version')!r}, "
            f"expected {FORMAT_VERSION}"
        )
    dim = manifest.get("dim")
    if not isinstance(dim, int) or dim < 1:
        raise BankFormatError(f"manifest dim must be a positive integer, got {dim!r}")
    if not isinstance(manifest.get("categories"), list):
        raise BankFormatError("manifest categories must be an array")
    return manifest


def _read_blob(directory: Path, name: str, dim: int, expected_rows: int) -> np.ndarray:
    blob_path = directory / name
    if not blob_path.is_file():
        raise BankFormatError(f"missing blob: {blob_path}")
    raw = blob_path.read_bytes()
    expected_bytes = expected_rows * dim * 4
    if len(raw) != expected_bytes:
        raise BankFormatError(
            f"{blob_path}: expected {expected_bytes} bytes "
            f"({expected_rows} rows x {dim} floats), found {len(raw)} bytes"
        )
    flat = np.frombuffer(raw, dtype="<f4")
    return flat.reshape(expected_rows, dim).astype(np.float64)


def load_bank(path, validate: bool = True) -> PromptBank:
    """Load a bank directory; byte-deterministic with respect to the files.

    With ``validate=True`` (the default) any invariant violation raises
    ``BankFormatError``; with ``validate=False`` only structural problems
    (missing files, count/byte mismatches, malformed JSON) raise, leaving
    content-level findings to ``validate_bank``.
    """
    directory = Path(path)
    manifest = _read_manifest(directory)
    dim = manifest["dim"]

    specs = []
    for i, raw in enumerate(manifest["categories"]):
        if not isinstance(raw, dict):
            raise BankFormatError(f"category entry {i} is not an object")
        try:
            spec = (
                int(raw["id"]),
                str(raw["name"]),
                str(raw["group"]),
                int(raw["text_count"]),
                int(raw["image_count"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BankFormatError(f"category entry {i} is malformed: {exc}") from exc
        if spec[3] < 0 or spec[4] < 0:
            raise BankFormatError(f"category entry {i}: negative prompt count")
        specs.append(spec)

    total_text = sum(s[3] for s in specs)
    total_image = sum(s[4] for s in specs)
    text_rows = _read_blob(directory, "text.f32", dim, total_text)
    image_rows = _read_blob(directory, "image.f32", dim, total_image)

    categories = []
    text_offset = image_offset = 0
    for cid, name, group, text_count, image_count in sorted(specs):
        categories.append(
            CategoryEntry(
                id=cid,
                name=name,
                group=group,
                text_prompts=text_rows[text_offset : text_offset + text_count],
                image_prompts=image_rows[image_offset : image_offset + image_count],
            )
        )
        text_offset += text_count
        image_offset += image_count

    bank = PromptBank(
        dim=dim,
        categories=categories,
        provenance=str(manifest.get("provenance", "")),
    )
    if validate:
        violations = validate_bank(bank)
        if violations:
            summary = "; ".join(str(v) for v in violations[:5])
            raise BankFormatError(
                f"bank at {directory} violates invariants: {summary}"
                + ("" if len(violations) <= 5 else f" (+{len(violations) - 5} more)")
            )
    return bank


def normalized_prompt_rows(rows: np.ndarray) -> np.ndarray:
    """Normalize raw prompt rows for storage, rejecting near-zero vectors."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError(f"expected a 2-D array of prompts, got shape {rows.shape}")
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms <= ZERO_NORM_EPS):
        bad = int(np.argmax(norms <= ZERO_NORM_EPS))
        raise DegenerateInputError(f"prompt row {bad} has near-zero norm")
    return rows / norms[:, None]
