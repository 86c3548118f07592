"""End-to-end benchmark: world, training, all six scenarios, report files.

Equivalent to the CLI one-liner

    promptfuse bench --seed 1 --out reports/

but staying inside the library API, then printing the scenario table and
where the JSON/CSV reports went.
"""

import tempfile
from pathlib import Path

from promptfuse import WorldConfig, generate_world, run_benchmark, train_head
from promptfuse.tpdw import TpdwConfig

config = WorldConfig(seed=1)
world = generate_world(config)
tpdw = TpdwConfig(k=5, patches=config.patches_per_image)

head = train_head(
    world.train_samples, world.bank, tpdw_config=tpdw,
    epochs=30, learning_rate=0.5, seed=1,
)
print(f"trained head: {head.steps} SGD steps, temperature {head.temperature}")

report = run_benchmark(
    world,
    ["T", "I", "F", "T/2-I/2", "T-I/2", "T/2-I"],
    tpdw_config=tpdw,
    head=head,
    repetitions=5,
    split_seed=1,
)

print()
print(f"{'scenario':>10s} | {'overall':>8s} | {'base':>8s} | {'novel':>8s} | reps")
print("-" * 52)
for metrics in report.scenarios:
    print(
        f"{metrics.tag:>10s} | {metrics.overall.mean:8.3f} | "
        f"{metrics.base.mean:8.3f} | {metrics.novel.mean:8.3f} | {metrics.repetitions}"
    )

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    print()
    print("report.json bytes:", (out / "report.json").stat().st_size)
    print("report.csv head:")
    for line in report.to_csv().splitlines()[:4]:
        print("  " + line)
