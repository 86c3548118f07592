"""Deterministic vector and scalar primitives.

Everything here is a pure function over float64 numpy arrays; callers may
share them freely across threads.  Bank files store float32, but all
arithmetic happens at 64-bit precision.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateInputError

ZERO_NORM_EPS = 1e-12


def as_vector(v) -> np.ndarray:
    """Coerce to a 1-D float64 array without copying when already one."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1].

    Raises on dimension mismatch and on (near-)zero-norm inputs.
    """
    a = as_vector(a)
    b = as_vector(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na <= ZERO_NORM_EPS or nb <= ZERO_NORM_EPS:
        raise DegenerateInputError("cosine_similarity of a zero-norm vector")
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def l2_normalize(v) -> np.ndarray:
    """Scale a vector to unit Euclidean norm, preserving direction."""
    v = as_vector(v)
    norm = float(np.linalg.norm(v))
    if norm <= ZERO_NORM_EPS:
        raise DegenerateInputError(
            f"cannot normalize a near-zero vector (norm {norm:.3e})"
        )
    return v / norm


def softmax(xs) -> np.ndarray:
    """Numerically stable softmax over a nonempty sequence of finite scalars.

    Uses max-subtraction, so the output is invariant under a common shift
    of the inputs.  Weights are positive and sum to 1 within 1e-9.
    """
    xs = as_vector(xs)
    if xs.size == 0:
        raise ValueError("softmax of an empty sequence")
    if not np.all(np.isfinite(xs)):
        raise ValueError("softmax input contains a non-finite entry")
    shifted = xs - xs.max()
    exps = np.exp(shifted)
    return exps / exps.sum()


def arg_top_k(scores: Iterable[tuple], k: int) -> list:
    """Ids of the ``min(k, n)`` highest-scoring entries, in descending order.

    ``scores`` is an iterable of ``(id, score)`` pairs.  Ties are broken by
    ascending id, which makes the selection fully deterministic.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    pairs = list(scores)
    if not pairs:
        raise ValueError("arg_top_k of an empty score list")
    ranked = sorted(pairs, key=lambda item: (-item[1], item[0]))
    return [item[0] for item in ranked[:k]]


def unit_rows(matrix: np.ndarray) -> np.ndarray:
    """Row-normalize a 2-D array; rows must all have norm > ZERO_NORM_EPS."""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms <= ZERO_NORM_EPS):
        bad = int(np.argmax(norms <= ZERO_NORM_EPS))
        raise DegenerateInputError(f"row {bad} has near-zero norm")
    return matrix / norms[:, None]


def cosine_rows(matrix: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Cosine similarity between each row of ``matrix`` and vector ``v``."""
    v = as_vector(v)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[1] != v.shape[0]:
        raise ValueError(
            f"dimension mismatch: rows have {matrix.shape[1]}, vector has {v.shape[0]}"
        )
    nv = float(np.linalg.norm(v))
    if nv <= ZERO_NORM_EPS:
        raise DegenerateInputError("cosine against a zero-norm vector")
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms <= ZERO_NORM_EPS):
        bad = int(np.argmax(norms <= ZERO_NORM_EPS))
        raise DegenerateInputError(f"row {bad} has near-zero norm")
    return np.clip((matrix @ v) / (norms * nv), -1.0, 1.0)
