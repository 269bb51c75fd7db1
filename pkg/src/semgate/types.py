"""Core value types shared by every layer of the gate.

Arrays are float64, C-contiguous, and frozen (writeable=False) so record and
state objects can be shared across threads without copies.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class RecordError(ValueError):
    """A stream record is malformed (shape, finiteness, or missing channels)."""


class ConfigError(ValueError):
    """A configuration value violates its contract."""


class FormatError(ValueError):
    """A file does not parse as the expected on-disk format."""


def _freeze(values, dtype=np.float64) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def as_logits(values, num_classes: int | None = None) -> np.ndarray:
    """Validate a per-class score vector: 1-D, finite, optionally length-checked."""
    arr = _freeze(values)
    if arr.ndim != 1 or arr.size < 2:
        raise RecordError(f"logit vector must be 1-D with >= 2 entries, got shape {arr.shape}")
    if num_classes is not None and arr.size != num_classes:
        raise RecordError(f"logit vector has {arr.size} entries, expected {num_classes}")
    if not np.all(np.isfinite(arr)):
        raise RecordError("logit vector contains non-finite values")
    return arr


UNIT_NORM_TOL = 1e-6


def as_unit(values, dim: int | None = None, tol: float = UNIT_NORM_TOL) -> np.ndarray:
    """Validate a unit-norm embedding: 1-D, finite, ||z|| within tol of 1."""
    arr = _freeze(values)
    if arr.ndim != 1 or arr.size < 1:
        raise RecordError(f"embedding must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise RecordError(f"embedding has dim {arr.size}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise RecordError("embedding contains non-finite values")
    norm = float(np.linalg.norm(arr))
    if abs(norm - 1.0) > tol:
        raise RecordError(f"embedding norm {norm!r} deviates from 1 by more than {tol}")
    return arr


def argmax_label(scores: np.ndarray) -> int:
    """Index of the largest score; ties resolve to the lowest index."""
    return int(np.argmax(scores))


def cosine_scores(query: np.ndarray, bank: np.ndarray) -> np.ndarray:
    """Dot products of a unit query against unit rows of ``bank`` (K, d).

    With unit inputs these are cosines in [-1, 1]; invariant under any common
    orthogonal rotation of query and bank.
    """
    return bank @ query


class Phase(enum.Enum):
    WARMUP = "warmup"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True, eq=False)
class StreamRecord:
    """One inference event: the untrusted model's logits plus auditor inputs.

    At least one auditor channel (embedding or text-anchor scores) must be
    present. The eval_* fields are ground truth for scoring runs after the
    fact; the routing path never reads them and the router-facing file reader
    drops them entirely.
    """

    id: str
    victim_logits: np.ndarray
    auditor_embedding: np.ndarray | None = None
    auditor_text_logits: np.ndarray | None = None
    eval_true_label: int | None = None
    eval_is_poisoned: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "victim_logits", as_logits(self.victim_logits))
        if self.auditor_embedding is not None:
            object.__setattr__(self, "auditor_embedding", as_unit(self.auditor_embedding))
        if self.auditor_text_logits is not None:
            object.__setattr__(
                self, "auditor_text_logits", as_logits(self.auditor_text_logits)
            )
        if self.auditor_embedding is None and self.auditor_text_logits is None:
            raise RecordError(f"record {self.id!r} carries no auditor channel")

    def without_eval(self) -> "StreamRecord":
        if self.eval_true_label is None and self.eval_is_poisoned is None:
            return self
        return StreamRecord(
            id=self.id,
            victim_logits=self.victim_logits,
            auditor_embedding=self.auditor_embedding,
            auditor_text_logits=self.auditor_text_logits,
        )


@dataclass(frozen=True)
class RouterConfig:
    """Gate hyperparameters. zeta must be negative: the threshold sits in the
    lower tail of the accepted-margin distribution by construction."""

    num_classes: int
    embed_dim: int
    lambda_proto: float = 0.5
    zeta: float = -2.0
    n_warmup: int = 100
    warmup_window: int = 256
    skew_clamp: float = 10.0
    variance_floor: float = 1e-8
    cold_margin: float = 1.0
    generative_scores: bool = False

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be >= 1")
        if not 0.0 <= self.lambda_proto <= 1.0:
            raise ConfigError("lambda_proto must lie in [0, 1]")
        if not self.zeta < 0:
            raise ConfigError("zeta must be negative")
        if self.n_warmup < 1:
            raise ConfigError("n_warmup must be >= 1")
        if self.warmup_window < 0:
            raise ConfigError("warmup_window must be >= 0")
        if not self.skew_clamp > 0:
            raise ConfigError("skew_clamp must be positive")
        if not self.variance_floor > 0:
            raise ConfigError("variance_floor must be positive")
        if self.cold_margin < 0:
            raise ConfigError("cold_margin must be >= 0")
        for name in ("lambda_proto", "zeta", "skew_clamp", "variance_floor", "cold_margin"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")


@dataclass(frozen=True)
class Decision:
    """Routing outcome for one record."""

    record_id: str
    victim_label: int
    auditor_label: int
    margin: float
    threshold: float
    accepted: bool
    routed_label: int
    state_updated: bool
    phase: Phase


@dataclass(frozen=True)
class SkippedRecord:
    """Log entry for a malformed record; the gate state is untouched."""

    record_id: str
    error: str
