"""Classification of region features against fused prompts, and a small
trainable projection head optimized with a contrastive objective.

The head is one affine layer.  Scores are cosine similarities between the
(projected) feature and each non-excluded fused prompt; the training loss
is cross-entropy over those cosines divided by a temperature, averaged
over the batch (the proposal-to-prompt direction only).  Gradients are
analytic and verified against central finite differences in the tests.

``classify`` is pure and may be parallelized over proposals; ``train_head``
is deliberately single-threaded so gradient accumulation is bit-identical
run to run.

Head checkpoint format (directory): ``manifest.json`` with keys
``format_version`` (=1), ``kind`` (="projection_head"), ``input_dim``,
``prompt_dim``, ``temperature``, ``seed``, ``steps``; and ``params.f32``
holding the weight matrix row-major (input_dim x prompt_dim) followed by
the bias vector, as little-endian float32.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bank import Modality, PromptBank
from .core import ZERO_NORM_EPS, softmax
from .errors import (
    BankFormatError,
    DegenerateInputError,
    ExcludedCategoryError,
    TrainingDivergedError,
)
from .fusion import (
    DEFAULT_PRM_POLICY,
    FusedPromptSet,
    MaskEntry,
    apply_mask,
    fuse,
    sample_prm_mask,
)
from .tpdw import TpdwConfig, run_tpdw

DEFAULT_TEMPERATURE = 0.07
DEFAULT_LEARNING_RATE = 0.5
DEFAULT_EPOCHS = 30
CHECKPOINT_VERSION = 1


@dataclass(eq=False)
class Proposal:
    """A candidate region, reduced to its feature vector; the label is
    ground truth and only present for training and evaluation."""

    feature: np.ndarray
    label: int | None = None


@dataclass(eq=False)
class ImageSample:
    """One image's worth of data: its patch features and its proposals."""

    patches: np.ndarray
    proposals: list[Proposal]


@dataclass(eq=False)
class ProjectionHead:
    """Affine map from feature space to prompt space with a softmax
    temperature.  ``weight`` has shape (input_dim, prompt_dim)."""

    weight: np.ndarray
    bias: np.ndarray
    temperature: float = DEFAULT_TEMPERATURE
    seed: int = 0
    steps: int = 0

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weight must be 2-D and bias 1-D")
        if self.weight.shape[1] != self.bias.shape[0]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} does not match weight columns "
                f"{self.weight.shape[1]}"
            )
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("head parameters must be finite")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    @property
    def input_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def prompt_dim(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def init_random(
        cls,
        input_dim: int,
        prompt_dim: int,
        seed: int = 0,
        temperature: float = DEFAULT_TEMPERATURE,
    ) -> "ProjectionHead":
        """Seeded uniform init in [-1/sqrt(input_dim), 1/sqrt(input_dim)]."""
        rng = np.random.default_rng([seed, 0])
        bound = 1.0 / math.sqrt(input_dim)
        weight = rng.uniform(-bound, bound, size=(input_dim, prompt_dim))
        bias = rng.uniform(-bound, bound, size=prompt_dim)
        return cls(weight=weight, bias=bias, temperature=temperature, seed=seed)

    def project(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.input_dim:
            raise ValueError(
                f"feature dimension {features.shape[-1]} does not match head "
                f"input dimension {self.input_dim}"
            )
        return features @ self.weight + self.bias

    def copy(self) -> "ProjectionHead":
        return ProjectionHead(
            weight=self.weight.copy(),
            bias=self.bias.copy(),
            temperature=self.temperature,
            seed=self.seed,
            steps=self.steps,
        )

    def save(self, path) -> None:
        directory = Path(path)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {
            "format_version": CHECKPOINT_VERSION,
            "kind": "projection_head",
            "input_dim": self.input_dim,
            "prompt_dim": self.prompt_dim,
            "temperature": self.temperature,
            "seed": self.seed,
            "steps": self.steps,
        }
        (directory / "manifest.json").write_text(
            json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
        )
        flat = np.concatenate([self.weight.ravel(), self.bias])
        (directory / "params.f32").write_bytes(
            np.ascontiguousarray(flat, dtype="<f4").tobytes()
        )

    @classmethod
    def load(cls, path) -> "ProjectionHead":
        directory = Path(path)
        manifest_path = directory / "manifest.json"
        if not manifest_path.is_file():
            raise BankFormatError(f"missing head manifest: {manifest_path}")
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise BankFormatError(f"unreadable head manifest: {exc}") from exc
        if manifest.get("format_version") != CHECKPOINT_VERSION:
            raise BankFormatError(
                f"unsupported head format_version {manifest.get('format_version')!r}"
            )
        try:
            input_dim = int(manifest["input_dim"])
            prompt_dim = int(manifest["prompt_dim"])
            temperature = float(manifest["temperature"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BankFormatError(f"malformed head manifest: {exc}") from exc
        params_path = directory / "params.f32"
        if not params_path.is_file():
            raise BankFormatError(f"missing head params: {params_path}")
        raw = params_path.read_bytes()
        expected = (input_dim * prompt_dim + prompt_dim) * 4
        if len(raw) != expected:
            raise BankFormatError(
                f"{params_path}: expected {expected} bytes, found {len(raw)}"
            )
        flat = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        weight = flat[: input_dim * prompt_dim].reshape(input_dim, prompt_dim)
        bias = flat[input_dim * prompt_dim :]
        return cls(
            weight=weight,
            bias=bias,
            temperature=temperature,
            seed=int(manifest.get("seed", 0)),
            steps=int(manifest.get("steps", 0)),
        )


@dataclass(eq=False)
class ClassificationResult:
    """Scores over non-excluded categories, the argmax prediction (ties by
    ascending id), and the softmax confidence at the prediction."""

    scores: dict[int, float]
    predicted: int
    confidence: float


def _features_matrix(proposals: Sequence[Proposal]) -> np.ndarray:
    if not proposals:
        raise ValueError("empty proposal batch")
    return np.vstack([np.asarray(p.feature, dtype=np.float64) for p in proposals])


def _cosine_scores(
    features: np.ndarray, fused: FusedPromptSet, head: ProjectionHead | None
) -> tuple[list[int], np.ndarray, np.ndarray, float]:
    """Project features and compute cosine scores against active prompts.

    Returns (active ids, raw projected features, clipped score matrix,
    temperature)."""
    ids, prompts = fused.matrix()
    if not ids:
        raise ExcludedCategoryError("all categories are excluded from the fused set")
    if head is not None:
        projected = head.project(features)
        temperature = head.temperature
    else:
        projected = features
        temperature = DEFAULT_TEMPERATURE
    if projected.shape[1] != fused.dim:
        raise ValueError(
            f"feature dimension {projected.shape[1]} does not match fused prompt "
            f"dimension {fused.dim}"
        )
    feat_norms = np.linalg.norm(projected, axis=1)
    if np.any(feat_norms <= ZERO_NORM_EPS):
        bad = int(np.argmax(feat_norms <= ZERO_NORM_EPS))
        raise DegenerateInputError(f"proposal {bad} has a near-zero feature vector")
    prompt_norms = np.linalg.norm(prompts, axis=1)
    scores = (projected @ prompts.T) / np.outer(feat_norms, prompt_norms)
    return ids, projected, np.clip(scores, -1.0, 1.0), temperature


def classify(
    proposals: Sequence[Proposal],
    fused: FusedPromptSet,
    head: ProjectionHead | None = None,
) -> list[ClassificationResult]:
    """Score each proposal against every non-excluded fused prompt.

    The prediction is the argmax cosine; ties go to the lower category id.
    Without a head the feature space must already match the prompt space.
    """
    features = _features_matrix(proposals)
    ids, _, scores, temperature = _cosine_scores(features, fused, head)
    results = []
    for row in scores:
        best = int(np.argmax(row))  # first occurrence wins; ids ascend
        probs = softmax(row / temperature)
        results.append(
            ClassificationResult(
                scores={cid: float(s) for cid, s in zip(ids, row)},
                predicted=ids[best],
                confidence=float(probs[best]),
            )
        )
    return results


def predict_ids(
    proposals: Sequence[Proposal],
    fused: FusedPromptSet,
    head: ProjectionHead | None = None,
) -> np.ndarray:
    """Predicted category ids only; same decision rule as ``classify``."""
    features = _features_matrix(proposals)
    ids, _, scores, _ = _cosine_scores(features, fused, head)
    id_array = np.asarray(ids, dtype=np.int64)
    return id_array[np.argmax(scores, axis=1)]


def contrastive_loss(
    batch: Sequence[Proposal],
    fused: FusedPromptSet,
    head: ProjectionHead,
) -> tuple[float, dict[str, np.ndarray]]:
    """Cross-entropy over cosine logits and its analytic parameter gradients.

    Per proposal: -log( exp(s_pos / t) / sum_c exp(s_c / t) ) where s_c is
    the cosine between the projected feature and category c's fused prompt
    and t is the head temperature; the loss is the batch mean.
    """
    if not batch:
        raise ValueError("contrastive_loss needs a nonempty batch")
    labels = []
    for i, proposal in enumerate(batch):
        if proposal.label is None:
            raise ValueError(f"proposal {i} has no label")
        labels.append(int(proposal.label))

    features = _features_matrix(batch)
    ids, prompts = fused.matrix()
    if not ids:
        raise ExcludedCategoryError("all categories are excluded from the fused set")
    col_of = {cid: j for j, cid in enumerate(ids)}
    for i, label in enumerate(labels):
        if label not in col_of:
            raise ExcludedCategoryError(
                f"proposal {i} labeled {label}, which is excluded or unknown"
            )
    label_cols = np.array([col_of[l] for l in labels], dtype=np.int64)

    projected = head.project(features)
    feat_norms = np.linalg.norm(projected, axis=1)
    if np.any(feat_norms <= ZERO_NORM_EPS):
        bad = int(np.argmax(feat_norms <= ZERO_NORM_EPS))
        raise DegenerateInputError(f"proposal {bad} projects to a near-zero vector")
    unit_feats = projected / feat_norms[:, None]
    prompt_norms = np.linalg.norm(prompts, axis=1)
    unit_prompts = prompts / prompt_norms[:, None]

    scores = unit_feats @ unit_prompts.T  # (n, m), not clipped: keeps gradients exact
    # Divergence (non-finite loss) is detected by the caller, so numpy's
    # warnings on the way there are suppressed rather than surfaced twice.
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        logits = scores / head.temperature
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)

        n = len(batch)
        picked = probs[np.arange(n), label_cols]
        loss = float(-np.mean(np.log(picked)))

    # d loss / d scores
    grad_scores = probs.copy()
    grad_scores[np.arange(n), label_cols] -= 1.0
    grad_scores /= n * head.temperature

    # d scores / d projected, row by row:
    # s_c = u_c . z / |z|  =>  ds_c/dz = (u_c - s_c * z/|z|) / |z|
    downstream = grad_scores @ unit_prompts  # (n, d)
    radial = np.sum(grad_scores * scores, axis=1, keepdims=True) * unit_feats
    grad_projected = (downstream - radial) / feat_norms[:, None]

    grad_weight = features.T @ grad_projected
    grad_bias = grad_projected.sum(axis=0)
    return loss, {"weight": grad_weight, "bias": grad_bias}


def train_head(
    samples: Sequence[ImageSample],
    bank: PromptBank,
    tpdw_config: TpdwConfig | None = None,
    prm_policy: Sequence[float] = DEFAULT_PRM_POLICY,
    epochs: int = DEFAULT_EPOCHS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    seed: int = 0,
    temperature: float = DEFAULT_TEMPERATURE,
) -> ProjectionHead:
    """Train the projection head with random prompt masking.

    Each step takes one image sample: its precomputed dynamic-weighting
    outputs are masked by a freshly drawn per-category mask, fused, and the
    contrastive loss over the sample's proposals drives one plain SGD
    update.  Only base-group categories participate; a label outside the
    base group is an error.  Fully deterministic given the seed.
    """
    if not samples:
        raise ValueError("train_head needs a nonempty train set")
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    config = tpdw_config or TpdwConfig()

    base_ids = bank.group_ids("base")
    if not base_ids:
        raise ValueError("bank has no base categories to train on")
    base_set = set(base_ids)
    for sample in samples:
        for proposal in sample.proposals:
            if proposal.label is None or proposal.label not in base_set:
                raise ValueError(
                    f"training labels must be base categories, found {proposal.label!r}"
                )

    input_dim = int(np.asarray(samples[0].proposals[0].feature).shape[0])
    head = ProjectionHead.init_random(
        input_dim, bank.dim, seed=seed, temperature=temperature
    )
    if epochs == 0:
        return head

    # Dynamic weighting depends only on the patches and the bank, so it is
    # hoisted out of the epoch loop; masks are resampled every step.
    finals = [
        (
            run_tpdw(s.patches, bank, config, Modality.TEXT, category_ids=base_ids),
            run_tpdw(s.patches, bank, config, Modality.IMAGE, category_ids=base_ids),
        )
        for s in samples
    ]

    mask_rng = np.random.default_rng([seed, 1])
    shuffle_rng = np.random.default_rng([seed, 2])
    step = 0
    for epoch in range(epochs):
        order = shuffle_rng.permutation(len(samples))
        for index in order:
            sample = samples[index]
            text_final, image_final = finals[index]
            mask = sample_prm_mask(base_ids, mask_rng, prm_policy)
            fused = fuse(*apply_mask(text_final, image_final, mask))
            loss, grads = contrastive_loss(sample.proposals, fused, head)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, step, loss)
            head.weight -= learning_rate * grads["weight"]
            head.bias -= learning_rate * grads["bias"]
            step += 1
    head.steps = step
    return head


def fused_for_scenario_f(
    sample: ImageSample,
    bank: PromptBank,
    config: TpdwConfig,
    category_ids: Sequence[int] | None = None,
) -> FusedPromptSet:
    """Fused prompts for one sample with every modality kept."""
    ids = list(category_ids) if category_ids is not None else bank.ids()
    text_final = run_tpdw(sample.patches, bank, config, Modality.TEXT, category_ids=ids)
    image_final = run_tpdw(sample.patches, bank, config, Modality.IMAGE, category_ids=ids)
    mask = {cid: MaskEntry(True, True) for cid in ids}
    return fuse(*apply_mask(text_final, image_final, mask))


def dataset_loss(
    head: ProjectionHead,
    samples: Sequence[ImageSample],
    bank: PromptBank,
    tpdw_config: TpdwConfig | None = None,
    category_ids: Sequence[int] | None = None,
) -> float:
    """Proposal-weighted mean contrastive loss with all modalities kept.

    Deterministic (no mask sampling); used to compare heads before and
    after training.
    """
    config = tpdw_config or TpdwConfig()
    total = 0.0
    count = 0
    for sample in samples:
        fused = fused_for_scenario_f(sample, bank, config, category_ids)
        loss, _ = contrastive_loss(sample.proposals, fused, head)
        total += loss * len(sample.proposals)
        count += len(sample.proposals)
    return total / count
