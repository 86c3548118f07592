"""Seed-fixed synthetic embedding worlds, a brute-force oracle, and the
scenario benchmark runner.

A world places one unit direction per category on the sphere.  Image
prompts and proposal features live near those directions; text prompts are
additionally displaced along a fixed global gap direction before
re-normalization, modeling the systematic offset between text and image
regions of a shared embedding space.  Patch features are noisy convex
mixtures of the directions of the categories present in each image, so
candidate selection has signal to work with.

The benchmark metric is top-1 accuracy over labeled proposals (overall and
per base/novel group); localization quality is out of scope here, so
precision-recall over boxes is undefined and deliberately not reported.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .bank import CategoryEntry, Modality, PromptBank
from .classifier import ImageSample, ProjectionHead, Proposal, predict_ids
from .core import l2_normalize, unit_rows
from .errors import ExcludedCategoryError
from .fusion import (
    RANDOM_SPLIT_TAGS,
    MaskSpec,
    Scenario,
    ScenarioTag,
    apply_mask,
    fuse,
    scenario_mask,
)
from .tpdw import TpdwConfig, run_tpdw

PROPOSALS_PER_IMAGE = 8
REPORT_SCHEMA_VERSION = 1
DEFAULT_REPETITIONS = 5


@dataclass(frozen=True)
class WorldConfig:
    """Knobs of the synthetic world; every draw derives from ``seed``."""

    num_categories: int = 50
    novel_fraction: float = 0.3
    dim: int = 64
    prompts_per_modality: int = 5
    text_gap: float = 0.8
    image_gap: float = 0.0
    prompt_noise: float = 0.15
    feature_noise: float = 0.2
    proposals_per_category: int = 40
    patches_per_image: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.num_categories < 2:
            raise ValueError("need at least 2 categories")
        if not 0.0 < self.novel_fraction < 1.0:
            raise ValueError("novel_fraction must be strictly between 0 and 1")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.prompts_per_modality < 1:
            raise ValueError("prompts_per_modality must be >= 1")
        for name in ("text_gap", "image_gap", "prompt_noise", "feature_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.proposals_per_category < 1:
            raise ValueError("proposals_per_category must be >= 1")
        if self.patches_per_image < 1:
            raise ValueError("patches_per_image must be >= 1")


@dataclass(eq=False)
class SyntheticWorld:
    config: WorldConfig
    bank: PromptBank
    train_samples: list[ImageSample]
    test_samples: list[ImageSample]


def _noisy_prompts(rng, direction, offset, noise, count, dim):
    rows = direction[None, :] + offset[None, :] + noise * rng.standard_normal((count, dim))
    return unit_rows(rows)


def _build_samples(rng, config, directions, category_ids) -> list[ImageSample]:
    """Group labeled proposals into synthetic images of fixed size and give
    each image patch features mixed from the categories it contains."""
    pool = np.repeat(
        np.asarray(category_ids, dtype=np.int64), config.proposals_per_category
    )
    pool = pool[rng.permutation(pool.size)]
    samples = []
    for start in range(0, pool.size, PROPOSALS_PER_IMAGE):
        labels = pool[start : start + PROPOSALS_PER_IMAGE]
        proposals = []
        for label in labels:
            raw = directions[label] + config.feature_noise * rng.standard_normal(config.dim)
            proposals.append(Proposal(feature=l2_normalize(raw), label=int(label)))
        present = np.unique(labels)
        patches = np.empty((config.patches_per_image, config.dim), dtype=np.float64)
        for p in range(config.patches_per_image):
            weights = rng.dirichlet(np.ones(present.size))
            mixed = weights @ directions[present]
            patches[p] = l2_normalize(
                mixed + config.feature_noise * rng.standard_normal(config.dim)
            )
        samples.append(ImageSample(patches=patches, proposals=proposals))
    return samples


def generate_world(config: WorldConfig) -> SyntheticWorld:
    """Build a deterministic world: bank, base-only train set, full test set."""
    rng = np.random.default_rng(config.seed)
    count = config.num_categories

    novel_count = min(max(1, round(count * config.novel_fraction)), count - 1)
    novel_ids = set(
        int(i) for i in rng.choice(count, size=novel_count, replace=False)
    )

    directions = unit_rows(rng.standard_normal((count, config.dim)))
    text_gap_dir = l2_normalize(rng.standard_normal(config.dim))
    raw = rng.standard_normal(config.dim)
    image_gap_dir = l2_normalize(raw - (raw @ text_gap_dir) * text_gap_dir)

    text_offset = config.text_gap * text_gap_dir
    image_offset = config.image_gap * image_gap_dir
    n_prompts = config.prompts_per_modality

    categories = []
    for cid in range(count):
        text_prompts = _noisy_prompts(
            rng, directions[cid], text_offset, config.prompt_noise, n_prompts, config.dim
        )
        image_prompts = _noisy_prompts(
            rng, directions[cid], image_offset, config.prompt_noise, n_prompts, config.dim
        )
        categories.append(
            CategoryEntry(
                id=cid,
                name=f"category_{cid:03d}",
                group="novel" if cid in novel_ids else "base",
                text_prompts=text_prompts,
                image_prompts=image_prompts,
            )
        )

    bank = PromptBank(
        dim=config.dim,
        categories=categories,
        provenance=f"synthetic world, seed={config.seed}",
    )

    base_ids = [cid for cid in range(count) if cid not in novel_ids]
    train_samples = _build_samples(rng, config, directions, base_ids)
    test_samples = _build_samples(rng, config, directions, list(range(count)))
    return SyntheticWorld(
        config=config, bank=bank, train_samples=train_samples, test_samples=test_samples
    )


def oracle_classify(
    proposals: Sequence[Proposal], bank: PromptBank, mask: MaskSpec
) -> np.ndarray:
    """Brute-force reference classifier: the best category is the one whose
    unmasked prompts (either kept modality, any prompt) contain the nearest
    vector by cosine.  No dynamic weighting, no fusion; kept deliberately
    plain so it can be audited by eye.
    """
    predictions = []
    for proposal in proposals:
        feature = np.asarray(proposal.feature, dtype=np.float64)
        feature_norm = float(np.linalg.norm(feature))
        best_id = None
        best_score = -np.inf
        for entry in bank.categories:  # ascending id: ties keep the lower id
            bits = mask[entry.id]
            kept = []
            if bits.keep_text and entry.text_prompts.shape[0] > 0:
                kept.append(entry.text_prompts)
            if bits.keep_image and entry.image_prompts.shape[0] > 0:
                kept.append(entry.image_prompts)
            if not kept:
                continue
            rows = np.vstack(kept)
            sims = rows @ feature / (np.linalg.norm(rows, axis=1) * feature_norm)
            score = float(np.max(sims))
            if score > best_score:
                best_score = score
                best_id = entry.id
        if best_id is None:
            raise ExcludedCategoryError("every category is masked out")
        predictions.append(best_id)
    return np.asarray(predictions, dtype=np.int64)


@dataclass
class GroupStats:
    mean: float
    std: float
    correct: int
    total: int


@dataclass
class ScenarioMetrics:
    tag: str
    repetitions: int
    overall: GroupStats
    base: GroupStats
    novel: GroupStats
    confusion: list[tuple[int, int, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        def stats(s: GroupStats) -> dict:
            return {
                "mean": s.mean,
                "std": s.std,
                "correct": s.correct,
                "total": s.total,
            }

        return {
            "tag": self.tag,
            "repetitions": self.repetitions,
            "accuracy": {
                "overall": stats(self.overall),
                "base": stats(self.base),
                "novel": stats(self.novel),
            },
            "confusion": [list(item) for item in self.confusion],
        }


@dataclass
class MetricsReport:
    world: dict
    tpdw: dict
    split_seed: int
    head: dict | None
    scenarios: list[ScenarioMetrics]

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "world": self.world,
            "tpdw": self.tpdw,
            "split_seed": self.split_seed,
            "head": self.head,
            "scenarios": [s.to_dict() for s in self.scenarios],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            ["scenario", "group", "repetitions", "accuracy_mean", "accuracy_std",
             "correct", "total"]
        )
        for metrics in self.scenarios:
            for group_name in ("overall", "base", "novel"):
                stats: GroupStats = getattr(metrics, group_name)
                writer.writerow(
                    [metrics.tag, group_name, metrics.repetitions,
                     repr(stats.mean), repr(stats.std), stats.correct, stats.total]
                )
        return buffer.getvalue()

    def scenario(self, tag) -> ScenarioMetrics:
        wanted = ScenarioTag.parse(tag).value
        for metrics in self.scenarios:
            if metrics.tag == wanted:
                return metrics
        raise KeyError(f"no scenario {wanted!r} in report")


def _group_stats(values: list[float], correct: int, total: int) -> GroupStats:
    arr = np.asarray(values, dtype=np.float64)
    return GroupStats(
        mean=float(arr.mean()),
        std=float(arr.std()),
        correct=correct,
        total=total,
    )


def run_benchmark(
    world: SyntheticWorld,
    scenarios: Sequence,
    tpdw_config: TpdwConfig | None = None,
    head: ProjectionHead | None = None,
    repetitions: int = DEFAULT_REPETITIONS,
    split_seed: int = 0,
) -> MetricsReport:
    """Evaluate the full pipeline on the world's test set per scenario.

    Random-split scenarios are averaged over ``repetitions`` seeded splits
    (split r uses seed ``split_seed + r``); the three deterministic ones
    run once.  Confusion counts are summed across repetitions.
    """
    if not scenarios:
        raise ValueError("run_benchmark needs at least one scenario")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    config = tpdw_config or TpdwConfig()
    tags = [ScenarioTag.parse(s) for s in scenarios]

    bank = world.bank
    base_set = set(bank.group_ids("base"))
    finals = [
        (
            run_tpdw(s.patches, bank, config, Modality.TEXT),
            run_tpdw(s.patches, bank, config, Modality.IMAGE),
        )
        for s in world.test_samples
    ]
    labels = [
        np.asarray([p.label for p in s.proposals], dtype=np.int64)
        for s in world.test_samples
    ]

    results = []
    for tag in tags:
        reps = repetitions if tag in RANDOM_SPLIT_TAGS else 1
        acc: dict[str, list[float]] = {"overall": [], "base": [], "novel": []}
        correct_sum = {"overall": 0, "base": 0, "novel": 0}
        total_sum = {"overall": 0, "base": 0, "novel": 0}
        confusion: dict[tuple[int, int], int] = {}

        for rep in range(reps):
            mask = scenario_mask(Scenario(tag, seed=split_seed + rep), bank.categories)
            correct = {"overall": 0, "base": 0, "novel": 0}
            total = {"overall": 0, "base": 0, "novel": 0}
            for (text_final, image_final), sample_labels, sample in zip(
                finals, labels, world.test_samples
            ):
                fused = fuse(*apply_mask(text_final, image_final, mask))
                predicted = predict_ids(sample.proposals, fused, head)
                for true_id, pred_id in zip(sample_labels, predicted):
                    true_id = int(true_id)
                    pred_id = int(pred_id)
                    group = "base" if true_id in base_set else "novel"
                    hit = int(true_id == pred_id)
                    correct["overall"] += hit
                    correct[group] += hit
                    total["overall"] += 1
                    total[group] += 1
                    confusion[(true_id, pred_id)] = confusion.get((true_id, pred_id), 0) + 1
            for name in ("overall", "base", "novel"):
                acc[name].append(correct[name] / total[name] if total[name] else 0.0)
                correct_sum[name] += correct[name]
                total_sum[name] += total[name]

        results.append(
            ScenarioMetrics(
                tag=tag.value,
                repetitions=reps,
                overall=_group_stats(acc["overall"], correct_sum["overall"], total_sum["overall"]),
                base=_group_stats(acc["base"], correct_sum["base"], total_sum["base"]),
                novel=_group_stats(acc["novel"], correct_sum["novel"], total_sum["novel"]),
                confusion=sorted(
                    (true, pred, n) for (true, pred), n in confusion.items()
                ),
            )
        )

    head_info = None
    if head is not None:
        head_info = {
            "steps": head.steps,
            "seed": head.seed,
            "temperature": head.temperature,
        }
    return MetricsReport(
        world=asdict(world.config),
        tpdw={"k": config.k, "patches": config.patches},
        split_seed=split_seed,
        head=head_info,
        scenarios=results,
    )
