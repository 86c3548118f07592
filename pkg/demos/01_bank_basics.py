"""Build a tiny multi-modal prompt bank by hand, persist it, and query it.

A bank holds, per category, a list of text prompt embeddings and a list of
image prompt embeddings (all unit-norm, all sharing one dimension).  The
on-disk format is a manifest plus raw float32 blobs, so anything that can
read JSON and little-endian floats can consume it.
"""

import tempfile
from pathlib import Path

import numpy as np

from promptfuse import (
    CategoryEntry,
    Modality,
    PromptBank,
    load_bank,
    mean_embedding,
    save_bank,
    validate_bank,
)

rng = np.random.default_rng(0)
dim = 8


def unit_rows(count):
    rows = rng.standard_normal((count, dim))
    return rows / np.linalg.norm(rows, axis=1)[:, None]


bank = PromptBank(
    dim=dim,
    categories=[
        CategoryEntry(0, "bicycle", "base", unit_rows(3), unit_rows(2)),
        CategoryEntry(1, "kayak", "base", unit_rows(3), unit_rows(2)),
        CategoryEntry(2, "unicycle", "novel", unit_rows(3), unit_rows(2)),
    ],
    provenance="demo bank",
)

print("violations:", validate_bank(bank) or "none")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo_bank"
    save_bank(bank, path)
    print("files:", sorted(p.name for p in path.iterdir()))
    reloaded = load_bank(path)
    print(f"reloaded: dim={reloaded.dim}, categories={len(reloaded.categories)}")

for entry in bank.categories:
    center = mean_embedding(entry, Modality.TEXT)
    print(
        f"  [{entry.id}] {entry.name:9s} ({entry.group:5s}) "
        f"text mean norm = {np.linalg.norm(center):.4f}"
    )

print()
print("The mean is deliberately not re-normalized: every downstream score")
print("is a cosine, so scaling the mean would change nothing.")
