"""Reproduce the cross-modality degradation and the masking cure.

Trains three projection heads on the same synthetic world, differing only
in the masking policy seen during training:

* text-only   - the head only ever aligns features with text prompts,
* fused-only  - the head only ever sees both modalities added,
* random mask - fresh per-category masks each step.

Tested with mismatched prompts, the text-only head collapses; the
randomly-masked head stays stable across every prompt-availability
scenario.  Runtime is about half a minute on one core.
"""

import numpy as np

from promptfuse import WorldConfig, generate_world, run_benchmark, train_head
from promptfuse.tpdw import TpdwConfig

config = WorldConfig(text_gap=2.0, prompt_noise=0.35, seed=7)
world = generate_world(config)
tpdw = TpdwConfig(k=5, patches=config.patches_per_image)
print(f"world: {config.num_categories} categories "
      f"({len(world.bank.group_ids('base'))} base / "
      f"{len(world.bank.group_ids('novel'))} novel), dim {config.dim}")

policies = {
    "text-only": (0.0, 1.0, 0.0),
    "fused-only": (1.0, 0.0, 0.0),
    "random mask": (0.5, 0.25, 0.25),
}
scenarios = ["T", "I", "F", "T/2-I/2"]

print(f"{'training policy':>15s} | " + " | ".join(f"{s:>8s}" for s in scenarios))
print("-" * (18 + 11 * len(scenarios)))
for name, policy in policies.items():
    head = train_head(
        world.train_samples, world.bank, tpdw_config=tpdw,
        prm_policy=policy, epochs=30, learning_rate=0.5, seed=7,
    )
    result = run_benchmark(world, scenarios, tpdw_config=tpdw, head=head,
                           repetitions=5, split_seed=0)
    row = " | ".join(
        f"{result.scenario(s).overall.mean:8.3f}" for s in scenarios
    )
    print(f"{name:>15s} | {row}")

print()
print("Reading the table: the text-only head loses badly on the image")
print("column (the modality gap), and the fused-only head falls behind on")
print("the mixed T/2-I/2 column; random masking during training keeps all")
print("columns close together.")
