"""Target-guided dynamic weighting of prompt banks.

Given the patch features of one target image, the procedure (per modality,
independently) is:

1. score every category by the cosine between a patch and the category's
   mean prompt embedding,
2. keep the top-k categories per patch as candidates,
3. softmax-weight each candidate's prompts by their cosine to the patch and
   form the weighted sum,
4. average each category's weighted prompts over the patches that selected
   it; categories never selected fall back to the plain mean of their
   stored prompts.

Everything is training-free and deterministic; per-patch work could run in
parallel because the final aggregation is an order-independent average,
but the implementation accumulates sequentially in patch order so results
are bit-identical run to run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .bank import Modality, PromptBank, mean_embedding
from .core import arg_top_k, as_vector, cosine_rows, softmax

DEFAULT_CANDIDATES = 5
DEFAULT_PATCHES = 4


@dataclass(frozen=True)
class TpdwConfig:
    """Candidate count per patch and expected number of patches per image."""

    k: int = DEFAULT_CANDIDATES
    patches: int = DEFAULT_PATCHES

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.patches < 1:
            raise ValueError(f"patches must be >= 1, got {self.patches}")


@dataclass(frozen=True, eq=False)
class FinalPrompt:
    """Per-category output: the final vector, which patches weighted it,
    and whether the stored-mean fallback was used (true iff no patch did)."""

    final: np.ndarray
    weighted_by: frozenset[int]
    fallback: bool


FinalPromptSet = dict[int, FinalPrompt]


def _as_patch_matrix(patches) -> np.ndarray:
    matrix = np.asarray(patches, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    if matrix.ndim != 2:
        raise ValueError(f"patch features must be a (P, dim) array, got shape {matrix.shape}")
    return matrix


def _selected_means(bank: PromptBank, modality: Modality, category_ids):
    ids, means = bank.category_means(modality)
    if category_ids is None:
        return ids, means
    wanted = set(int(c) for c in category_ids)
    keep = np.array([i in wanted for i in ids], dtype=bool)
    return ids[keep], means[keep]


def rough_scores(
    patch,
    bank: PromptBank,
    modality: Modality,
    category_ids: Iterable[int] | None = None,
) -> dict[int, float]:
    """Cosine between one patch and each category's mean prompt embedding.

    Categories with no prompt in the modality are omitted.  An optional
    ``category_ids`` restriction scopes the scoring (training only ever
    scores base categories).
    """
    patch = as_vector(patch)
    if patch.shape[0] != bank.dim:
        raise ValueError(
            f"patch dimension {patch.shape[0]} does not match bank dim {bank.dim}"
        )
    ids, means = _selected_means(bank, modality, category_ids)
    sims = cosine_rows(means, patch)
    return {int(cid): float(s) for cid, s in zip(ids, sims)}


def select_candidates(scores: Mapping[int, float], k: int) -> list[int]:
    """Top-k scoring category ids, descending, ties broken by ascending id."""
    return arg_top_k(scores.items(), k)


def weight_category(patch, prompts) -> tuple[np.ndarray, np.ndarray]:
    """Softmax-weight a category's prompts by cosine to the patch.

    Returns ``(weights, weighted)`` where ``weighted`` is the weighted sum
    of the prompt vectors.  Weights are positive and sum to 1, so the
    weighted vector lies in the convex hull of the prompts.
    """
    prompts = np.asarray(prompts, dtype=np.float64)
    if prompts.ndim != 2 or prompts.shape[0] == 0:
        raise ValueError("weight_category needs a nonempty (N, dim) prompt array")
    sims = cosine_rows(prompts, as_vector(patch))
    weights = softmax(sims)
    return weights, weights @ prompts


def run_tpdw(
    patches,
    bank: PromptBank,
    config: TpdwConfig,
    modality: Modality,
    category_ids: Iterable[int] | None = None,
) -> FinalPromptSet:
    """Full dynamic-weighting pass for one image and one modality.

    Returns an entry for every in-scope category that has at least one
    prompt in the modality.  Deterministic for fixed inputs.
    """
    matrix = _as_patch_matrix(patches)
    if matrix.shape[0] != config.patches:
        raise ValueError(
            f"expected {config.patches} patches per config, got {matrix.shape[0]}"
        )
    if matrix.shape[1] != bank.dim:
        raise ValueError(
            f"patch dimension {matrix.shape[1]} does not match bank dim {bank.dim}"
        )

    ids, means = _selected_means(bank, modality, category_ids)
    sums: dict[int, np.ndarray] = {}
    hits: dict[int, list[int]] = {}

    for patch_index in range(matrix.shape[0]):
        patch = matrix[patch_index]
        sims = cosine_rows(means, patch)
        candidates = arg_top_k(zip((int(i) for i in ids), sims), config.k)
        for cid in candidates:
            _, weighted = weight_category(patch, bank.entry(cid).prompts(modality))
            if cid in sums:
                sums[cid] = sums[cid] + weighted
                hits[cid].append(patch_index)
            else:
                sums[cid] = weighted
                hits[cid] = [patch_index]

    result: FinalPromptSet = {}
    for cid in (int(i) for i in ids):
        if cid in sums:
            final = sums[cid] / len(hits[cid])
            result[cid] = FinalPrompt(
                final=final, weighted_by=frozenset(hits[cid]), fallback=False
            )
        else:
            result[cid] = FinalPrompt(
                final=mean_embedding(bank.entry(cid), modality),
                weighted_by=frozenset(),
                fallback=True,
            )
    return result
