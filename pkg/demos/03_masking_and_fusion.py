"""Scenario masks, random masking, and dual-modality fusion.

A mask gives every category two keep/drop bits (text, image).  Fusion adds
the surviving modalities and normalizes; a category losing both modalities
is excluded rather than an error, so partial banks degrade gracefully.
"""

import numpy as np

from promptfuse import (
    MaskEntry,
    Scenario,
    ScenarioTag,
    apply_mask,
    fuse,
    sample_prm_mask,
    scenario_mask,
)
from promptfuse import CategoryEntry, PromptBank
from promptfuse.tpdw import FinalPrompt

rng = np.random.default_rng(1)
dim = 6


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def final(v):
    return FinalPrompt(final=unit(v), weighted_by=frozenset({0}), fallback=False)


bank = PromptBank(
    dim=dim,
    categories=[
        CategoryEntry(i, f"cat_{i}", "base" if i < 6 else "novel",
                      unit(rng.standard_normal(dim))[None, :],
                      unit(rng.standard_normal(dim))[None, :])
        for i in range(10)
    ],
)

print("deterministic scenario masks (text bit / image bit):")
for tag in ScenarioTag:
    mask = scenario_mask(Scenario(tag, seed=7), bank.categories)
    bits = "".join(
        {(True, True): "B", (True, False): "t", (False, True): "i"}[
            (m.keep_text, m.keep_image)
        ]
        for m in (mask[cid] for cid in sorted(mask))
    )
    print(f"  {tag.value:8s} -> {bits}   (B=both, t=text-only, i=image-only)")

print()
print("random masking draws (policy: both 0.5, text-only 0.25, image-only 0.25):")
mask = sample_prm_mask(range(100_000), np.random.default_rng(0))
counts = {"both": 0, "text": 0, "image": 0}
for m in mask.values():
    key = "both" if (m.keep_text and m.keep_image) else ("text" if m.keep_text else "image")
    counts[key] += 1
print("  empirical frequencies:", {k: v / 100_000 for k, v in counts.items()})

print()
print("fusion identities:")
t = unit([1, 0, 0, 0, 0, 0])
i = unit([0, 1, 0, 0, 0, 0])
text_set = {0: final(t)}
image_set = {0: final(i)}

both = fuse(*apply_mask(text_set, image_set, {0: MaskEntry(True, True)}))
print("  both kept:      fused =", np.round(both.vector(0), 3), "(= (t+i)/sqrt(2))")

text_only = fuse(*apply_mask(text_set, image_set, {0: MaskEntry(True, False)}))
print("  image dropped:  fused =", np.round(text_only.vector(0), 3), "(= t)")

neither = fuse(*apply_mask(text_set, image_set, {0: MaskEntry(False, False)}))
print("  both dropped:   excluded ids =", neither.excluded_ids())
