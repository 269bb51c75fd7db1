"""Streaming moment accumulation and skew-adjusted threshold math.

State is a tuple of raw power sums so that folds are associative: any split
of a stream into batches yields the same sums up to float addition order.
All derived moments are population (1/n) moments, not Bessel-corrected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .types import RouterConfig

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MomentState:
    """Raw power sums of everything folded so far: count, sum, sum of squares,
    sum of cubes."""

    n: int = 0
    s1: float = 0.0
    s2: float = 0.0
    s3: float = 0.0


@dataclass(frozen=True)
class MomentSummary:
    mean: float
    variance: float
    skewness: float


def accumulate(state: MomentState, values) -> MomentState:
    """Fold a batch of finite values into the running sums."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size == 0:
        return state
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot accumulate non-finite values")
    return MomentState(
        n=state.n + int(arr.size),
        s1=state.s1 + float(arr.sum()),
        s2=state.s2 + float((arr * arr).sum()),
        s3=state.s3 + float((arr * arr * arr).sum()),
    )


def summarize(state: MomentState, config: RouterConfig) -> MomentSummary:
    """Population mean/variance/skewness from the raw sums.

    Variance is floored at config.variance_floor; a floored state is treated
    as symmetric (skewness 0) because third-moment noise at near-zero spread
    is meaningless. Skewness is clamped to +/- config.skew_clamp.
    """
    if state.n == 0:
        raise ValueError("empty moment state has no summary")
    n = float(state.n)
    mean = state.s1 / n
    ex2 = state.s2 / n
    variance = ex2 - mean * mean
    if variance < config.variance_floor:
        return MomentSummary(mean=mean, variance=config.variance_floor, skewness=0.0)
    m3 = state.s3 / n - 3.0 * mean * ex2 + 2.0 * mean ** 3
    skew = m3 / variance ** 1.5
    skew = max(-config.skew_clamp, min(config.skew_clamp, skew))
    return MomentSummary(mean=mean, variance=variance, skewness=skew)


def cornish_fisher_coeff(zeta: float, skewness: float) -> float:
    """Skew-adjusted standard-normal quantile coefficient.

    Expects skewness already clamped (see summarize). At zeta = -1 the
    adjustment vanishes for every skew because zeta^2 - 1 = 0.
    """
    return zeta + (skewness / 6.0) * (zeta * zeta - 1.0)


def warmup_weight(n_seen: int, config: RouterConfig) -> float:
    """Confidence weight for the skew term: ramps 0 -> 1 over n_warmup samples."""
    return min(1.0, n_seen / config.n_warmup)


def adaptive_threshold(summary: MomentSummary, zeta: float, alpha: float) -> float:
    """Acceptance threshold mean + [zeta + alpha*(skew/6)(zeta^2-1)] * std.

    alpha in [0, 1] dampens the skew correction while the class has seen few
    samples; alpha = 0 reduces to the Gaussian prior mean + zeta*std.
    """
    sigma = math.sqrt(summary.variance)
    coeff = zeta + alpha * (summary.skewness / 6.0) * (zeta * zeta - 1.0)
    return summary.mean + coeff * sigma


def edgeworth_density(z, skewness: float):
    """Third-order Edgeworth density phi(z) * [1 + (skew/6)(z^3 - 3z)].

    Not a true pdf: for large |skew| it dips negative in a tail. Values are
    emitted as-is; this is a diagnostic overlay, not a probability model.
    Accepts scalars or arrays.
    """
    z = np.asarray(z, dtype=np.float64)
    phi = np.exp(-0.5 * z * z) / _SQRT_2PI
    out = phi * (1.0 + (skewness / 6.0) * (z ** 3 - 3.0 * z))
    if out.ndim == 0:
        return float(out)
    return out
