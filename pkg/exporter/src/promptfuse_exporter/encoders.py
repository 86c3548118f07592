"""Encoders that map text and images into a shared embedding space.

Two families are provided behind one duck-typed interface (``dim``,
``encode_texts``, ``encode_images``, ``image_feature_map``):

* ``hash:<dim>`` - a fully deterministic, dependency-light encoder: text
  embeddings are seeded from a digest of the string, image embeddings are
  fixed random projections of pixel blocks.  It carries no semantics but
  exercises every byte of the export pipeline identically on any machine,
  which is exactly what the format tests need.
* ``clip:<model-id>`` - a pretrained vision-language model loaded through
  ``transformers``; requires the optional ``clip`` extra and a locally
  available checkpoint.

Image feature maps are a fixed GRID_CELLS x GRID_CELLS spatial grid, so a
perfect-square patch count P pools evenly whenever sqrt(P) divides the
grid.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

from .errors import EncoderUnavailableError, UnsupportedEncoderError

GRID_CELLS = 12          # spatial grid of the hash encoder's feature map
CELL_PIXELS = 4          # each cell pools a CELL_PIXELS x CELL_PIXELS block


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms <= 1e-12):
        raise ValueError("encoder produced a zero embedding")
    return rows / norms[:, None]


class HashEncoder:
    """Deterministic stand-in encoder; identifier ``hash:<dim>``."""

    def __init__(self, dim: int = 64):
        if dim < 2:
            raise ValueError(f"dim must be >= 2, got {dim}")
        self.dim = dim
        # one fixed projection per dim, shared by every image and cell
        rng = np.random.default_rng([20_240_101, dim])
        block = CELL_PIXELS * CELL_PIXELS * 3
        self._projection = rng.standard_normal((block, dim)) / np.sqrt(block)

    @property
    def identifier(self) -> str:
        return f"hash:{self.dim}"

    def encode_texts(self, texts) -> np.ndarray:
        rows = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            seed = list(digest[:16])
            rng = np.random.default_rng(seed)
            rows[i] = rng.standard_normal(self.dim)
        return _unit_rows(rows)

    def _load_pixels(self, path) -> np.ndarray:
        side = GRID_CELLS * CELL_PIXELS
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((side, side), Image.BILINEAR)
        return np.asarray(rgb, dtype=np.float64) / 255.0

    def image_feature_map(self, path) -> np.ndarray:
        """(GRID_CELLS, GRID_CELLS, dim) spatial features for one image."""
        pixels = self._load_pixels(path)
        cells = pixels.reshape(
            GRID_CELLS, CELL_PIXELS, GRID_CELLS, CELL_PIXELS, 3
        ).transpose(0, 2, 1, 3, 4)
        flat = cells.reshape(GRID_CELLS, GRID_CELLS, -1)
        # affine shift keeps a uniform black image away from the zero vector
        return (flat + 0.05) @ self._projection

    def encode_images(self, paths) -> np.ndarray:
        rows = np.empty((len(paths), self.dim), dtype=np.float64)
        for i, path in enumerate(paths):
            feature_map = self.image_feature_map(path)
            rows[i] = feature_map.mean(axis=(0, 1))
        return _unit_rows(rows)


class ClipEncoder:
    """Pretrained CLIP-family encoder; identifier ``clip:<model-id>``."""

    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderUnavailableError(
                "clip encoders need the optional 'clip' extra "
                "(pip install promptfuse-exporter[clip])"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(model_id)
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderUnavailableError(
                f"could not load encoder {model_id!r} locally: {exc}"
            ) from exc
        self._torch = torch
        self._model.eval()
        self.dim = int(self._model.config.projection_dim)
        self.identifier = f"clip:{model_id}"

    def encode_texts(self, texts) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            inputs = self._processor(
                text=list(texts), return_tensors="pt", padding=True, truncation=True
            )
            feats = self._model.get_text_features(**inputs)
        return _unit_rows(feats.numpy().astype(np.float64))

    def _pixel_inputs(self, path):
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            return self._processor(images=rgb, return_tensors="pt")

    def encode_images(self, paths) -> np.ndarray:
        torch = self._torch
        rows = []
        with torch.no_grad():
            for path in paths:
                feats = self._model.get_image_features(**self._pixel_inputs(path))
                rows.append(feats[0].numpy())
        return _unit_rows(np.asarray(rows, dtype=np.float64))

    def image_feature_map(self, path) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            outputs = self._model.vision_model(**self._pixel_inputs(path))
            tokens = outputs.last_hidden_state[0, 1:, :]  # drop the class token
            projected = self._model.visual_projection(
                self._model.vision_model.post_layernorm(tokens)
            ).numpy().astype(np.float64)
        count = projected.shape[0]
        side = int(round(count ** 0.5))
        if side * side != count:
            raise UnsupportedEncoderError(
                f"{self.identifier}: {count} patch tokens do not form a square grid"
            )
        return projected.reshape(side, side, self.dim)


def load_encoder(identifier: str):
    """Build an encoder from its identifier string."""
    if identifier.startswith("hash:"):
        try:
            dim = int(identifier.split(":", 1)[1])
        except ValueError:
            raise EncoderUnavailableError(
                f"malformed hash encoder identifier {identifier!r}"
            ) from None
        return HashEncoder(dim)
    if identifier.startswith("clip:"):
        return ClipEncoder(identifier.split(":", 1)[1])
    raise EncoderUnavailableError(
        f"unknown encoder {identifier!r}; expected 'hash:<dim>' or 'clip:<model-id>'"
    )
