"""Random masking, scenario masks, and dual-modality prompt fusion.

A mask assigns each category two keep/drop bits, one per modality.
Masking multiplies a dropped modality's final prompt by zero; fusion adds
the surviving modalities and L2-normalizes the sum.  A category whose
modalities are both dropped (or absent) is excluded rather than an error,
so partial banks degrade gracefully.

Scenario tags reproduce the evaluation configurations verbatim:

=========  ==============================================================
``T``      text-only for every category
``I``      image-only for every category
``F``      both modalities for every category
``T/2-I/2``  seeded half text-only, complement image-only
``T-I/2``  seeded half image-only, complement both
``T/2-I``  seeded half text-only, complement both
=========  ==============================================================

Half splits are drawn independently within the base and novel groups; for
an odd group size the first-listed partition receives the extra category.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .bank import CategoryEntry
from .core import l2_normalize
from .errors import DegenerateFusionError, DegenerateInputError
from .tpdw import FinalPromptSet

DEFAULT_PRM_POLICY = (0.5, 0.25, 0.25)


@dataclass(frozen=True)
class MaskEntry:
    keep_text: bool
    keep_image: bool


MaskSpec = dict[int, MaskEntry]


class ScenarioTag(enum.Enum):
    TEXT_ONLY = "T"
    IMAGE_ONLY = "I"
    FUSED = "F"
    HALF_TEXT_HALF_IMAGE = "T/2-I/2"
    HALF_IMAGE_HALF_BOTH = "T-I/2"
    HALF_TEXT_HALF_BOTH = "T/2-I"

    @classmethod
    def parse(cls, value) -> "ScenarioTag":
        if isinstance(value, cls):
            return value
        for tag in cls:
            if tag.value == value:
                return tag
        known = ", ".join(t.value for t in cls)
        raise ValueError(f"unknown scenario tag {value!r}; expected one of: {known}")


#: Tags whose masks depend on the seed.
RANDOM_SPLIT_TAGS = frozenset(
    {
        ScenarioTag.HALF_TEXT_HALF_IMAGE,
        ScenarioTag.HALF_IMAGE_HALF_BOTH,
        ScenarioTag.HALF_TEXT_HALF_BOTH,
    }
)


@dataclass(frozen=True)
class Scenario:
    tag: ScenarioTag
    seed: int = 0


@dataclass(eq=False)
class FusedPromptSet:
    """Per-category fused prompt vectors; excluded categories map to None."""

    dim: int
    entries: dict[int, np.ndarray | None]

    def ids(self) -> list[int]:
        return sorted(self.entries)

    def active_ids(self) -> list[int]:
        return sorted(cid for cid, vec in self.entries.items() if vec is not None)

    def excluded_ids(self) -> list[int]:
        return sorted(cid for cid, vec in self.entries.items() if vec is None)

    def vector(self, category_id: int) -> np.ndarray:
        vec = self.entries[category_id]
        if vec is None:
            raise KeyError(f"category {category_id} is excluded")
        return vec

    def matrix(self) -> tuple[list[int], np.ndarray]:
        """Active ids (ascending) and their fused vectors stacked row-wise."""
        ids = self.active_ids()
        if not ids:
            return ids, np.empty((0, self.dim), dtype=np.float64)
        return ids, np.vstack([self.entries[cid] for cid in ids])


def apply_mask(
    text: FinalPromptSet, image: FinalPromptSet, mask: MaskSpec
) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Zero out dropped modalities per category.

    Output dicts are keyed by the mask's category ids; an entry is the
    final prompt when the bit is set and the category has one, and the
    zero vector otherwise.  A mask category absent from both prompt sets
    is an error.
    """
    dims = {p.final.shape[0] for p in text.values()} | {
        p.final.shape[0] for p in image.values()
    }
    if len(dims) > 1:
        raise ValueError(f"inconsistent prompt dimensions: {sorted(dims)}")
    if not dims:
        if mask:
            raise ValueError(
                f"mask names categories {sorted(mask)} but both prompt sets are empty"
            )
        return {}, {}
    dim = dims.pop()
    zero = np.zeros(dim, dtype=np.float64)

    masked_text: dict[int, np.ndarray] = {}
    masked_image: dict[int, np.ndarray] = {}
    for cid, bits in mask.items():
        if cid not in text and cid not in image:
            raise ValueError(f"mask names category {cid}, absent from both prompt sets")
        masked_text[cid] = (
            text[cid].final if (bits.keep_text and cid in text) else zero
        )
        masked_image[cid] = (
            image[cid].final if (bits.keep_image and cid in image) else zero
        )
    return masked_text, masked_image


def fuse(
    masked_text: dict[int, np.ndarray], masked_image: dict[int, np.ndarray]
) -> FusedPromptSet:
    """Add surviving modalities per category and L2-normalize the sum.

    With one survivor this is just that modality's final prompt,
    normalized.  With no survivor the category is excluded.  Antipodal
    survivors that cancel to a near-zero sum raise, naming the category.
    """
    fused, degenerate = fuse_with_report(masked_text, masked_image)
    if degenerate:
        raise DegenerateFusionError(degenerate[0])
    return fused


def fuse_with_report(
    masked_text: dict[int, np.ndarray], masked_image: dict[int, np.ndarray]
) -> tuple[FusedPromptSet, list[int]]:
    """Like ``fuse`` but collects every degenerate category id instead of
    raising on the first; degenerate categories come back excluded."""
    if set(masked_text) != set(masked_image):
        raise ValueError("masked text and image sets cover different categories")
    entries: dict[int, np.ndarray | None] = {}
    degenerate: list[int] = []
    dim = 0
    for cid in sorted(masked_text):
        tv = masked_text[cid]
        iv = masked_image[cid]
        dim = tv.shape[0]
        if not tv.any() and not iv.any():
            entries[cid] = None
            continue
        try:
            entries[cid] = l2_normalize(tv + iv)
        except DegenerateInputError:
            entries[cid] = None
            degenerate.append(cid)
    return FusedPromptSet(dim=dim, entries=entries), degenerate


def _validate_policy(policy: Sequence[float]) -> tuple[float, float, float]:
    if len(policy) != 3:
        raise ValueError("policy must be (p_both, p_text_only, p_image_only)")
    p = tuple(float(x) for x in policy)
    if any(x < 0 for x in p):
        raise ValueError(f"policy probabilities must be nonnegative, got {p}")
    if abs(sum(p) - 1.0) > 1e-9:
        raise ValueError(f"policy probabilities must sum to 1, got {sum(p)!r}")
    return p


def sample_prm_mask(
    category_ids: Iterable[int],
    rng: np.random.Generator,
    policy: Sequence[float] = DEFAULT_PRM_POLICY,
) -> MaskSpec:
    """Draw one random keep/drop mask per category.

    Each category independently keeps both modalities with probability
    ``p_both``, only text with ``p_text_only``, only image with
    ``p_image_only``.  A category is never left with neither modality.
    """
    p_both, p_text, _ = _validate_policy(policy)
    mask: MaskSpec = {}
    for cid in category_ids:
        draw = float(rng.random())
        if draw < p_both:
            mask[int(cid)] = MaskEntry(keep_text=True, keep_image=True)
        elif draw < p_both + p_text:
            mask[int(cid)] = MaskEntry(keep_text=True, keep_image=False)
        else:
            mask[int(cid)] = MaskEntry(keep_text=False, keep_image=True)
    return mask


_GROUP_STREAM = {"base": 0, "novel": 1}


def _half_split(ids: list[int], seed: int, group: str) -> tuple[set[int], set[int]]:
    """Seeded split of one group's ids; the first half gets the extra one."""
    rng = np.random.default_rng([seed, _GROUP_STREAM[group]])
    order = rng.permutation(len(ids))
    cut = (len(ids) + 1) // 2
    first = {ids[i] for i in order[:cut]}
    second = {ids[i] for i in order[cut:]}
    return first, second


def scenario_mask(scenario: Scenario, categories: Sequence[CategoryEntry]) -> MaskSpec:
    """Deterministic mask for a scenario over an ordered category list.

    Pure function of (tag, seed, category ids and groups); the seed only
    matters for the three half-split tags.
    """
    tag = ScenarioTag.parse(scenario.tag)
    all_ids = [c.id for c in categories]

    if tag is ScenarioTag.TEXT_ONLY:
        return {cid: MaskEntry(True, False) for cid in all_ids}
    if tag is ScenarioTag.IMAGE_ONLY:
        return {cid: MaskEntry(False, True) for cid in all_ids}
    if tag is ScenarioTag.FUSED:
        return {cid: MaskEntry(True, True) for cid in all_ids}

    first: set[int] = set()
    second: set[int] = set()
    for group in ("base", "novel"):
        group_ids = sorted(c.id for c in categories if c.group == group)
        if not group_ids:
            continue
        got_first, got_second = _half_split(group_ids, scenario.seed, group)
        first |= got_first
        second |= got_second

    if tag is ScenarioTag.HALF_TEXT_HALF_IMAGE:
        first_bits, second_bits = MaskEntry(True, False), MaskEntry(False, True)
    elif tag is ScenarioTag.HALF_IMAGE_HALF_BOTH:
        first_bits, second_bits = MaskEntry(False, True), MaskEntry(True, True)
    else:  # HALF_TEXT_HALF_BOTH
        first_bits, second_bits = MaskEntry(True, False), MaskEntry(True, True)

    return {
        cid: (first_bits if cid in first else second_bits) for cid in all_ids
    }
