"""Trusted-auditor scoring: text anchors, online class prototypes, fusion.

Prototypes are cumulative moving averages of accepted embeddings, kept on
the unit sphere. A class with no accepted samples yet has no prototype; its
score falls back to the caller-supplied vector entry.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .types import RecordError, as_unit, cosine_scores

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AnchorBank:
    """One unit-norm text-anchor embedding per class, rows of a (K, d) matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise RecordError(f"anchor bank must be a 2-D matrix, got shape {m.shape}")
        norms = np.linalg.norm(m, axis=1)
        if not np.all(np.isfinite(m)) or np.any(np.abs(norms - 1.0) > 1e-6):
            raise RecordError("anchor rows must be finite unit vectors")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True, eq=False)
class PrototypeState:
    """Per-class centroid rows plus the number of embeddings folded into each.

    counts[k] == 0 marks a missing prototype; its centroid row is all zeros
    and must not be scored against.
    """

    centroids: np.ndarray
    counts: np.ndarray

    @staticmethod
    def empty(num_classes: int, embed_dim: int) -> "PrototypeState":
        return PrototypeState(
            centroids=np.zeros((num_classes, embed_dim)),
            counts=np.zeros(num_classes, dtype=np.int64),
        )


def text_scores(embedding: np.ndarray, anchors: AnchorBank) -> np.ndarray:
    """Cosine of the auditor embedding against each class text anchor."""
    return cosine_scores(embedding, anchors.matrix)


def proto_scores(
    embedding: np.ndarray, protos: PrototypeState, fallback: np.ndarray
) -> np.ndarray:
    """Cosine against each class prototype, falling back per class when the
    prototype does not exist yet."""
    scores = cosine_scores(embedding, protos.centroids)
    return np.where(protos.counts > 0, scores, fallback)


def fuse(text: np.ndarray, proto: np.ndarray, lambda_proto: float) -> np.ndarray:
    """Convex blend of the two auditor score streams.

    lambda_proto weighs the prototype stream; 1 - lambda_proto weighs the
    text-anchor stream. At 0 the output is pure text scores, at 1 pure
    prototype scores.
    """
    return lambda_proto * proto + (1.0 - lambda_proto) * text


def minmax_normalize(scores: np.ndarray) -> np.ndarray:
    """Rescale a raw score vector to [0, 1]; a constant vector maps to all 0.5.

    Used for score sources whose scale is arbitrary (e.g. generative
    likelihoods) before they enter margin computation.
    """
    scores = np.asarray(scores, dtype=np.float64)
    lo = scores.min()
    hi = scores.max()
    if hi == lo:
        return np.full_like(scores, 0.5)
    return (scores - lo) / (hi - lo)


def update_prototypes(
    protos: PrototypeState, contributions: Mapping[int, np.ndarray]
) -> PrototypeState:
    """Fold accepted embeddings into their class centroids.

    contributions maps class index -> (m, d) array of unit embeddings. Each
    centroid moves by cumulative moving average and is renormalized to the
    sphere; counts grow by m. A class whose blended vector lands exactly on
    the origin cannot be normalized: that class is left unchanged and the
    degenerate event is logged.
    """
    if not contributions:
        return protos
    centroids = protos.centroids.copy()
    counts = protos.counts.copy()
    for label, block in contributions.items():
        block = np.atleast_2d(np.asarray(block, dtype=np.float64))
        m = block.shape[0]
        if m == 0:
            continue
        blended = counts[label] * centroids[label] + block.sum(axis=0)
        norm = np.linalg.norm(blended)
        if norm == 0.0:
            log.warning(
                "degenerate prototype update for class %d (zero-norm blend of "
                "%d embeddings); class left unchanged", label, m,
            )
            continue
        centroids[label] = blended / norm
        counts[label] += m
    centroids.setflags(write=False)
    counts.setflags(write=False)
    return PrototypeState(centroids=centroids, counts=counts)
