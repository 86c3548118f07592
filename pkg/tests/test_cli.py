"""Exit codes, file outputs, and CLI = library equivalence."""

import json

import numpy as np
import pytest

from promptfuse import (
    Modality,
    Scenario,
    ScenarioTag,
    WorldConfig,
    apply_mask,
    classify,
    fuse,
    generate_world,
    run_tpdw,
    save_bank,
    scenario_mask,
)
from promptfuse import blobio
from promptfuse.cli import main
from promptfuse.tpdw import TpdwConfig

from util import make_bank, unit


@pytest.fixture
def world():
    return generate_world(
        WorldConfig(
            num_categories=6,
            dim=12,
            prompts_per_modality=2,
            proposals_per_category=6,
            seed=3,
        )
    )


@pytest.fixture
def bank_dir(world, tmp_path):
    path = tmp_path / "bank"
    save_bank(world.bank, path)
    return path


@pytest.fixture
def patches_dir(world, tmp_path):
    path = tmp_path / "patches"
    blobio.write_patch_features(world.test_samples[0].patches, path)
    return path


class TestBankCommand:
    def test_validate_ok(self, bank_dir, capsys):
        assert main(["bank", "validate", str(bank_dir)]) == 0
        assert "ok:" in capsys.readouterr().out

    def test_validate_lists_violations(self, tmp_path, capsys):
        bank = make_bank(
            3, [(0, "empty", "base", np.empty((0, 3)), np.empty((0, 3)))]
        )
        save_bank(bank, tmp_path / "bad")
        assert main(["bank", "validate", str(tmp_path / "bad")]) == 1
        out = capsys.readouterr().out
        assert "category 0" in out and "violation" in out

    def test_truncated_blob_is_input_error(self, bank_dir, capsys):
        blob = bank_dir / "text.f32"
        blob.write_bytes(blob.read_bytes()[:-4])
        assert main(["bank", "validate", str(bank_dir)]) == 2
        assert "bytes" in capsys.readouterr().err

    def test_missing_path_is_input_error(self, tmp_path):
        assert main(["bank", "validate", str(tmp_path / "absent")]) == 2

    def test_inspect(self, bank_dir, capsys):
        assert main(["bank", "inspect", str(bank_dir)]) == 0
        out = capsys.readouterr().out
        assert "dim: 12" in out
        assert "categories: 6" in out
        assert "base:" in out and "novel:" in out


class TestFuseCommand:
    def test_matches_library_bit_exactly(self, world, bank_dir, patches_dir, tmp_path):
        out = tmp_path / "fused"
        assert main([
            "fuse", "--bank", str(bank_dir), "--patch-features", str(patches_dir),
            "--scenario", "F", "--k", "3", "--seed", "0", "--out", str(out),
        ]) == 0

        from promptfuse import load_bank

        bank = load_bank(bank_dir)
        patches = blobio.read_patch_features(patches_dir)
        config = TpdwConfig(k=3, patches=patches.shape[0])
        text_final = run_tpdw(patches, bank, config, Modality.TEXT)
        image_final = run_tpdw(patches, bank, config, Modality.IMAGE)
        mask = scenario_mask(Scenario(ScenarioTag.FUSED, seed=0), bank.categories)
        expected = fuse(*apply_mask(text_final, image_final, mask))

        loaded = blobio.read_fused(out)
        assert loaded.active_ids() == expected.active_ids()
        for cid in expected.active_ids():
            np.testing.assert_array_equal(
                loaded.vector(cid),
                expected.vector(cid).astype(np.float32).astype(np.float64),
            )

    def test_text_scenario_sidecar_masks_image(self, bank_dir, patches_dir, tmp_path):
        out = tmp_path / "fused"
        assert main([
            "fuse", "--bank", str(bank_dir), "--patch-features", str(patches_dir),
            "--scenario", "T", "--out", str(out),
        ]) == 0
        sidecar = json.loads((out / "fusion.json").read_text())
        assert sidecar["scenario"] == "T"
        assert all(not entry["keep_image"] for entry in sidecar["mask"])
        assert all(entry["keep_text"] for entry in sidecar["mask"])
        assert set(sidecar["modalities"]) == {"text", "image"}

    def test_half_split_deterministic(self, bank_dir, patches_dir, tmp_path):
        args = [
            "fuse", "--bank", str(bank_dir), "--patch-features", str(patches_dir),
            "--scenario", "T/2-I/2", "--seed", "7",
        ]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        for name in ("manifest.json", "fused.f32", "fusion.json"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_unknown_scenario_is_input_error(self, bank_dir, patches_dir, tmp_path):
        assert main([
            "fuse", "--bank", str(bank_dir), "--patch-features", str(patches_dir),
            "--scenario", "X", "--out", str(tmp_path / "out"),
        ]) == 2

    def test_degenerate_fusion_exits_numeric(self, tmp_path, patches_dir):
        u = unit([1.0] + [0.0] * 11)
        bank = make_bank(12, [(0, "anti", "base", [u], [-u])])
        save_bank(bank, tmp_path / "antibank")
        code = main([
            "fuse", "--bank", str(tmp_path / "antibank"),
            "--patch-features", str(patches_dir),
            "--scenario", "F", "--k", "1", "--out", str(tmp_path / "out"),
        ])
        assert code == 3

    def test_env_seed_override_and_flag_precedence(
        self, bank_dir, patches_dir, tmp_path, monkeypatch
    ):
        monkeypatch.setenv("PROMPTFUSE_SEED", "9")
        out_env = tmp_path / "env"
        main([
            "fuse", "--bank", str(bank_dir), "--patch-features", str(patches_dir),
            "--scenario", "T/2-I/2", "--out", str(out_env),
        ])
        assert json.loads((out_env / "fusion.json").read_text())["seed"] == 9
        out_flag = tmp_path / "flag"
        main([
            "fuse", "--bank", str(bank_dir), "--patch-features", str(patches_dir),
            "--scenario", "T/2-I/2", "--seed", "3", "--out", str(out_flag),
        ])
        assert json.loads((out_flag / "fusion.json").read_text())["seed"] == 3


def bench_args(tmp_path, out_name, extra=()):
    return [
        "bench",
        "--categories", "6", "--dim", "12", "--prompts-per-modality", "2",
        "--proposals-per-category", "6", "--epochs", "2",
        "--repetitions", "2", "--seed", "1",
        "--out", str(tmp_path / out_name),
        *extra,
    ]


class TestBenchCommand:
    def test_report_contains_all_six_scenarios(self, tmp_path):
        assert main(bench_args(tmp_path, "run")) == 0
        payload = json.loads((tmp_path / "run" / "report.json").read_text())
        tags = [s["tag"] for s in payload["scenarios"]]
        assert tags == ["T", "I", "F", "T/2-I/2", "T-I/2", "T/2-I"]
        assert (tmp_path / "run" / "report.csv").exists()

    def test_same_seed_byte_identical(self, tmp_path):
        assert main(bench_args(tmp_path, "a")) == 0
        assert main(bench_args(tmp_path, "b")) == 0
        assert (tmp_path / "a" / "report.json").read_bytes() == (
            tmp_path / "b" / "report.json"
        ).read_bytes()
        assert (tmp_path / "a" / "report.csv").read_bytes() == (
            tmp_path / "b" / "report.csv"
        ).read_bytes()

    def test_no_train_runs_identity_head(self, tmp_path):
        assert main(bench_args(tmp_path, "raw", ("--no-train",))) == 0
        payload = json.loads((tmp_path / "raw" / "report.json").read_text())
        assert payload["head"] is None

    def test_world_config_file(self, tmp_path):
        config = {"num_categories": 5, "dim": 8, "prompts_per_modality": 2,
                  "proposals_per_category": 4, "seed": 2}
        (tmp_path / "world.json").write_text(json.dumps(config))
        code = main([
            "bench", "--world-config", str(tmp_path / "world.json"),
            "--scenarios", "F", "--epochs", "0", "--no-train",
            "--out", str(tmp_path / "out"),
        ])
        assert code == 0
        payload = json.loads((tmp_path / "out" / "report.json").read_text())
        assert payload["world"]["num_categories"] == 5
        assert payload["world"]["seed"] == 2

    def test_unknown_config_key_rejected(self, tmp_path):
        (tmp_path / "world.json").write_text(json.dumps({"bogus": 1}))
        assert main([
            "bench", "--world-config", str(tmp_path / "world.json"),
            "--out", str(tmp_path / "out"),
        ]) == 2

    def test_fused_row_dominates_single_modalities_on_default_seed(self, tmp_path):
        # pinned on the default world at seed 0, measured during development
        assert main([
            "bench", "--seed", "0", "--scenarios", "F,T,I",
            "--out", str(tmp_path / "out"),
        ]) == 0
        payload = json.loads((tmp_path / "out" / "report.json").read_text())
        means = {
            s["tag"]: s["accuracy"]["overall"]["mean"] for s in payload["scenarios"]
        }
        assert means["F"] >= means["T"]
        assert means["F"] >= means["I"]


class TestClassifyCommand:
    def test_noiseless_predictions_match_labels(self, tmp_path):
        config = WorldConfig(
            num_categories=5, dim=10, prompts_per_modality=2,
            proposals_per_category=4, text_gap=0.0, image_gap=0.0,
            prompt_noise=0.0, feature_noise=0.0, seed=4,
        )
        world = generate_world(config)
        save_bank(world.bank, tmp_path / "bank")
        sample = world.test_samples[0]
        blobio.write_patch_features(sample.patches, tmp_path / "patches")
        blobio.write_proposals(sample.proposals, tmp_path / "props")
        out = tmp_path / "pred.csv"
        code = main([
            "classify", "--bank", str(tmp_path / "bank"),
            "--proposals", str(tmp_path / "props"),
            "--scenario", "F", "--patch-features", str(tmp_path / "patches"),
            "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "index,predicted,confidence,top5"
        predicted = [int(line.split(",")[1]) for line in lines[1:]]
        assert predicted == [p.label for p in sample.proposals]

    def test_matches_library_classify(self, world, bank_dir, tmp_path):
        sample = world.test_samples[1]
        blobio.write_patch_features(sample.patches, tmp_path / "patches")
        blobio.write_proposals(sample.proposals, tmp_path / "props")
        fused_dir = tmp_path / "fused"
        main([
            "fuse", "--bank", str(bank_dir),
            "--patch-features", str(tmp_path / "patches"),
            "--scenario", "F", "--out", str(fused_dir),
        ])
        out = tmp_path / "pred.csv"
        assert main([
            "classify", "--bank", str(bank_dir),
            "--proposals", str(tmp_path / "props"),
            "--fused", str(fused_dir), "--out", str(out),
        ]) == 0

        fused = blobio.read_fused(fused_dir)
        proposals = blobio.read_proposals(tmp_path / "props")
        expected = classify(proposals, fused)
        lines = out.read_text().strip().splitlines()[1:]
        for line, result in zip(lines, expected):
            fields = line.split(",")
            assert int(fields[1]) == result.predicted
            assert float(fields[2]) == pytest.approx(result.confidence, abs=1e-12)

    def test_excluded_categories_never_predicted(self, tmp_path):
        # category 1 has no image prompts; under scenario I it is excluded
        rng = np.random.default_rng(8)
        rows = rng.standard_normal((3, 6))
        rows /= np.linalg.norm(rows, axis=1)[:, None]
        bank = make_bank(
            6,
            [
                (0, "a", "base", [rows[0]], [rows[0]]),
                (1, "b", "base", [rows[1]], np.empty((0, 6))),
                (2, "c", "base", [rows[2]], [rows[2]]),
            ],
        )
        save_bank(bank, tmp_path / "bank")
        blobio.write_patch_features(rows[:2], tmp_path / "patches")
        from promptfuse.classifier import Proposal

        blobio.write_proposals([Proposal(feature=rows[1])], tmp_path / "props")
        out = tmp_path / "pred.csv"
        assert main([
            "classify", "--bank", str(tmp_path / "bank"),
            "--proposals", str(tmp_path / "props"),
            "--scenario", "I", "--patch-features", str(tmp_path / "patches"),
            "--k", "2", "--out", str(out),
        ]) == 0
        lines = out.read_text().strip().splitlines()[1:]
        assert all(int(line.split(",")[1]) != 1 for line in lines)

    def test_requires_fused_or_scenario(self, bank_dir, tmp_path, world):
        blobio.write_proposals(world.test_samples[0].proposals, tmp_path / "props")
        assert main([
            "classify", "--bank", str(bank_dir),
            "--proposals", str(tmp_path / "props"),
            "--out", str(tmp_path / "pred.csv"),
        ]) == 2
