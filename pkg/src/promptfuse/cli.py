"""Command-line surface: bank management, fusion, classification, benchmarks.

Exit codes are a stable contract: 0 success, 1 validation findings,
2 input/format error, 3 numerical failure.  Every subcommand is
deterministic given its flags; the ``PROMPTFUSE_SEED`` environment
variable overrides the default seed (0), and explicit flags override both.
All flags and file schemas are documented in ``docs/cli.md``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

from . import blobio
from .bank import Modality, load_bank, validate_bank
from .bench import (
    DEFAULT_REPETITIONS,
    WorldConfig,
    generate_world,
    run_benchmark,
)
from .classifier import (
    DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
    ProjectionHead,
    classify,
    train_head,
)
from .core import arg_top_k
from .errors import (
    BankFormatError,
    DegenerateFusionError,
    DegenerateInputError,
    ExcludedCategoryError,
    TrainingDivergedError,
)
from .fusion import (
    Scenario,
    ScenarioTag,
    apply_mask,
    fuse_with_report,
    scenario_mask,
)
from .tpdw import TpdwConfig, run_tpdw

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3

DEFAULT_SEED = 0
SEED_ENV_VAR = "PROMPTFUSE_SEED"
ALL_SCENARIOS = "T,I,F,T/2-I/2,T-I/2,T/2-I"


def _resolve_seed(flag_value: int | None) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None and env != "":
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"{SEED_ENV_VAR} must be an integer, got {env!r}")
    return DEFAULT_SEED


def _parse_scenarios(text: str) -> list[ScenarioTag]:
    tags = [ScenarioTag.parse(part.strip()) for part in text.split(",") if part.strip()]
    if not tags:
        raise ValueError("no scenarios given")
    return tags


def cmd_bank(args) -> int:
    bank = load_bank(args.path, validate=False)
    if args.action == "validate":
        violations = validate_bank(bank)
        if violations:
            for violation in violations:
                print(violation)
            print(f"{len(violations)} violation(s) found")
            return EXIT_FINDINGS
        print(f"ok: {len(bank.categories)} categories, dim {bank.dim}")
        return EXIT_OK

    # inspect
    print(f"dim: {bank.dim}")
    print(f"provenance: {bank.provenance}")
    print(f"categories: {len(bank.categories)}")
    for group in ("base", "novel"):
        print(f"  {group}: {len(bank.group_ids(group))}")
    total_text = sum(c.prompt_count(Modality.TEXT) for c in bank.categories)
    total_image = sum(c.prompt_count(Modality.IMAGE) for c in bank.categories)
    print(f"text prompts: {total_text}")
    print(f"image prompts: {total_image}")
    for entry in bank.categories:
        print(
            f"  [{entry.id}] {entry.name} ({entry.group}): "
            f"text={entry.prompt_count(Modality.TEXT)} "
            f"image={entry.prompt_count(Modality.IMAGE)}"
        )
    return EXIT_OK


def _fused_from_scenario(bank, patches, tag, k, seed):
    config = TpdwConfig(k=k, patches=patches.shape[0])
    text_final = run_tpdw(patches, bank, config, Modality.TEXT)
    image_final = run_tpdw(patches, bank, config, Modality.IMAGE)
    mask = scenario_mask(Scenario(ScenarioTag.parse(tag), seed=seed), bank.categories)
    fused, degenerate = fuse_with_report(*apply_mask(text_final, image_final, mask))
    return text_final, image_final, mask, fused, degenerate


def cmd_fuse(args) -> int:
    seed = _resolve_seed(args.seed)
    bank = load_bank(args.bank)
    patches = blobio.read_patch_features(args.patch_features)
    if patches.shape[1] != bank.dim:
        raise ValueError(
            f"patch dimension {patches.shape[1]} does not match bank dim {bank.dim}"
        )
    if args.patches is not None and args.patches != patches.shape[0]:
        raise ValueError(
            f"--patches {args.patches} does not match file patch count {patches.shape[0]}"
        )

    text_final, image_final, mask, fused, degenerate = _fused_from_scenario(
        bank, patches, args.scenario, args.k, seed
    )

    def modality_sidecar(final_set):
        return [
            {
                "id": cid,
                "weighted_by": sorted(final_set[cid].weighted_by),
                "fallback": final_set[cid].fallback,
            }
            for cid in sorted(final_set)
        ]

    sidecar = {
        "scenario": ScenarioTag.parse(args.scenario).value,
        "seed": seed,
        "k": args.k,
        "patches": patches.shape[0],
        "mask": blobio.mask_to_json(mask),
        "modalities": {
            "text": modality_sidecar(text_final),
            "image": modality_sidecar(image_final),
        },
        "degenerate": degenerate,
    }
    names = {c.id: c.name for c in bank.categories}
    blobio.write_fused(fused, args.out, names=names, sidecar=sidecar)
    if degenerate:
        for cid in degenerate:
            print(f"degenerate fusion for category {cid}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote fused prompts for {len(fused.active_ids())} categories to {args.out}")
    return EXIT_OK


def _world_config_from_args(args) -> WorldConfig:
    values = {}
    if args.world_config:
        path = Path(args.world_config)
        if not path.is_file():
            raise BankFormatError(f"missing world config: {path}")
        try:
            values = json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise BankFormatError(f"unreadable world config {path}: {exc}") from exc
        known = {f.name for f in dataclass_fields(WorldConfig)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown world config keys: {sorted(unknown)}")
    flag_map = {
        "num_categories": args.categories,
        "novel_fraction": args.novel_fraction,
        "dim": args.dim,
        "prompts_per_modality": args.prompts_per_modality,
        "text_gap": args.text_gap,
        "image_gap": args.image_gap,
        "prompt_noise": args.prompt_noise,
        "feature_noise": args.feature_noise,
        "proposals_per_category": args.proposals_per_category,
        "patches_per_image": args.patches_per_image,
    }
    for name, value in flag_map.items():
        if value is not None:
            values[name] = value
    if args.seed is not None or SEED_ENV_VAR in os.environ or "seed" not in values:
        values["seed"] = _resolve_seed(args.seed)
    return WorldConfig(**values)


def cmd_bench(args) -> int:
    config = _world_config_from_args(args)
    scenarios = _parse_scenarios(args.scenarios)
    world = generate_world(config)
    tpdw_config = TpdwConfig(k=args.k, patches=config.patches_per_image)

    head = None
    if not args.no_train:
        head = train_head(
            world.train_samples,
            world.bank,
            tpdw_config=tpdw_config,
            epochs=args.epochs,
            learning_rate=args.learning_rate,
            seed=config.seed,
        )

    split_seed = args.split_seed if args.split_seed is not None else config.seed
    report = run_benchmark(
        world,
        scenarios,
        tpdw_config=tpdw_config,
        head=head,
        repetitions=args.repetitions,
        split_seed=split_seed,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.format in ("json", "both"):
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        written.append("report.json")
    if args.format in ("csv", "both"):
        (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
        written.append("report.csv")
    print(f"wrote {', '.join(written)} to {out}")
    for metrics in report.scenarios:
        print(
            f"  {metrics.tag}: overall {metrics.overall.mean:.4f} "
            f"base {metrics.base.mean:.4f} novel {metrics.novel.mean:.4f}"
        )
    return EXIT_OK


def cmd_classify(args) -> int:
    bank = load_bank(args.bank)
    proposals = blobio.read_proposals(args.proposals)

    if args.fused:
        fused = blobio.read_fused(args.fused)
    else:
        if not args.scenario or not args.patch_features:
            raise ValueError(
                "either --fused or both --scenario and --patch-features are required"
            )
        seed = _resolve_seed(args.seed)
        patches = blobio.read_patch_features(args.patch_features)
        if patches.shape[1] != bank.dim:
            raise ValueError(
                f"patch dimension {patches.shape[1]} does not match bank dim {bank.dim}"
            )
        _, _, _, fused, degenerate = _fused_from_scenario(
            bank, patches, args.scenario, args.k, seed
        )
        if degenerate:
            raise DegenerateFusionError(degenerate[0])

    head = ProjectionHead.load(args.head) if args.head else None
    results = classify(proposals, fused, head)

    lines = ["index,predicted,confidence,top5"]
    for index, result in enumerate(results):
        top5 = arg_top_k(result.scores.items(), 5)
        cell = ";".join(f"{cid}:{result.scores[cid]!r}" for cid in top5)
        lines.append(f"{index},{result.predicted},{result.confidence!r},{cell}")
    text = "\n".join(lines) + "\n"
    Path(args.out).write_text(text, encoding="utf-8")
    print(f"wrote {len(results)} predictions to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptfuse",
        description="Prompt-fusion engine for open-set classification "
        "over multi-modal embedding banks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_bank = sub.add_parser("bank", help="validate or inspect a prompt bank")
    p_bank.add_argument("action", choices=("validate", "inspect"))
    p_bank.add_argument("path")
    p_bank.set_defaults(func=cmd_bank)

    p_fuse = sub.add_parser("fuse", help="produce fused prompts for one image")
    p_fuse.add_argument("--bank", required=True)
    p_fuse.add_argument("--patch-features", required=True)
    p_fuse.add_argument("--scenario", default="F")
    p_fuse.add_argument("--k", type=int, default=TpdwConfig().k)
    p_fuse.add_argument("--patches", type=int, default=None,
                        help="expected patch count; defaults to the file's count")
    p_fuse.add_argument("--seed", type=int, default=None)
    p_fuse.add_argument("--out", required=True)
    p_fuse.set_defaults(func=cmd_fuse)

    p_bench = sub.add_parser("bench", help="run the synthetic scenario benchmark")
    p_bench.add_argument("--world-config", default=None,
                         help="JSON file with world config fields")
    p_bench.add_argument("--categories", type=int, default=None)
    p_bench.add_argument("--novel-fraction", type=float, default=None)
    p_bench.add_argument("--dim", type=int, default=None)
    p_bench.add_argument("--prompts-per-modality", type=int, default=None)
    p_bench.add_argument("--text-gap", type=float, default=None)
    p_bench.add_argument("--image-gap", type=float, default=None)
    p_bench.add_argument("--prompt-noise", type=float, default=None)
    p_bench.add_argument("--feature-noise", type=float, default=None)
    p_bench.add_argument("--proposals-per-category", type=int, default=None)
    p_bench.add_argument("--patches-per-image", type=int, default=None)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--scenarios", default=ALL_SCENARIOS)
    p_bench.add_argument("--repetitions", type=int, default=DEFAULT_REPETITIONS)
    p_bench.add_argument("--split-seed", type=int, default=None)
    p_bench.add_argument("--k", type=int, default=TpdwConfig().k)
    p_bench.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p_bench.add_argument("--learning-rate", type=float, default=DEFAULT_LEARNING_RATE)
    p_bench.add_argument("--no-train", action="store_true")
    p_bench.add_argument("--format", choices=("json", "csv", "both"), default="both")
    p_bench.add_argument("--out", required=True)
    p_bench.set_defaults(func=cmd_bench)

    p_classify = sub.add_parser("classify", help="classify proposal features")
    p_classify.add_argument("--bank", required=True)
    p_classify.add_argument("--proposals", required=True)
    p_classify.add_argument("--fused", default=None,
                            help="directory written by the fuse subcommand")
    p_classify.add_argument("--scenario", default=None)
    p_classify.add_argument("--patch-features", default=None)
    p_classify.add_argument("--k", type=int, default=TpdwConfig().k)
    p_classify.add_argument("--seed", type=int, default=None)
    p_classify.add_argument("--head", default=None)
    p_classify.add_argument("--out", required=True)
    p_classify.set_defaults(func=cmd_classify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BankFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DegenerateFusionError, DegenerateInputError, ExcludedCategoryError,
            TrainingDivergedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
