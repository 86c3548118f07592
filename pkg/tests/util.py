"""Shared builders for the test suite."""

import numpy as np

from promptfuse import CategoryEntry, PromptBank


def unit(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    return v / np.linalg.norm(v)


def rand_unit(rng, dim) -> np.ndarray:
    return unit(rng.standard_normal(dim))


def rand_unit_rows(rng, count, dim) -> np.ndarray:
    rows = rng.standard_normal((count, dim))
    return rows / np.linalg.norm(rows, axis=1)[:, None]


def make_bank(dim, cats, provenance="test fixture") -> PromptBank:
    """cats: list of (id, name, group, text_rows, image_rows)."""
    categories = []
    for cid, name, group, text_rows, image_rows in cats:
        categories.append(
            CategoryEntry(
                id=cid,
                name=name,
                group=group,
                text_prompts=np.asarray(text_rows, dtype=np.float64).reshape(-1, dim),
                image_prompts=np.asarray(image_rows, dtype=np.float64).reshape(-1, dim),
            )
        )
    return PromptBank(dim=dim, categories=categories, provenance=provenance)


def random_bank(rng, num_categories=5, dim=8, text_count=3, image_count=3,
                novel_every=3) -> PromptBank:
    cats = []
    for cid in range(num_categories):
        group = "novel" if novel_every and cid % novel_every == novel_every - 1 else "base"
        cats.append(
            (
                cid,
                f"cat{cid}",
                group,
                rand_unit_rows(rng, text_count, dim),
                rand_unit_rows(rng, image_count, dim),
            )
        )
    return make_bank(dim, cats)
