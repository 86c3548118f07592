"""Walk through target-guided dynamic weighting step by step.

Given one image's patch features, each patch first ranks categories by the
cosine between itself and the category's mean prompt; the top-k become
candidates.  Each candidate's prompts are then softmax-weighted by their
cosine to the patch and summed.  Finally, each category averages its
weighted prompts over the patches that selected it; categories no patch
selected fall back to their plain prompt mean.
"""

import numpy as np

from promptfuse import (
    Modality,
    TpdwConfig,
    rough_scores,
    run_tpdw,
    select_candidates,
    weight_category,
)
from promptfuse import CategoryEntry, PromptBank

rng = np.random.default_rng(42)
dim = 16


def noisy_cluster(direction, count, spread=0.25):
    rows = direction[None, :] + spread * rng.standard_normal((count, dim))
    return rows / np.linalg.norm(rows, axis=1)[:, None]


directions = rng.standard_normal((4, dim))
directions /= np.linalg.norm(directions, axis=1)[:, None]

bank = PromptBank(
    dim=dim,
    categories=[
        CategoryEntry(i, f"cat_{i}", "base", noisy_cluster(directions[i], 5),
                      noisy_cluster(directions[i], 5))
        for i in range(4)
    ],
)

# two patches near category 0, one near category 2, one mixed
patches = np.vstack(
    [
        noisy_cluster(directions[0], 1, 0.1),
        noisy_cluster(directions[0], 1, 0.1),
        noisy_cluster(directions[2], 1, 0.1),
        noisy_cluster(0.5 * directions[0] + 0.5 * directions[2], 1, 0.1),
    ]
)

print("per-patch category scores (cosine to mean prompts):")
for p, patch in enumerate(patches):
    scores = rough_scores(patch, bank, Modality.TEXT)
    pretty = {cid: round(s, 3) for cid, s in scores.items()}
    picked = select_candidates(scores, k=2)
    print(f"  patch {p}: {pretty} -> candidates {picked}")

print()
print("softmax weighting of category 0's prompts by patch 0:")
weights, weighted = weight_category(patches[0], bank.categories[0].text_prompts)
print("  weights:", np.round(weights, 3), " (sum", round(float(weights.sum()), 6), ")")

print()
config = TpdwConfig(k=2, patches=4)
final = run_tpdw(patches, bank, config, Modality.TEXT)
for cid in sorted(final):
    entry = final[cid]
    print(
        f"  category {cid}: weighted by patches {sorted(entry.weighted_by) or '-'}"
        f"{'  (fallback: plain prompt mean)' if entry.fallback else ''}"
    )
