"""Sparsity penalties applied to coefficient magnitudes and block norms.

All families are given on the nonnegative half-line.  The composite penalty
sums a per-coefficient penalty over the linear part and a per-block penalty on
the Gram-induced norm of each additive coefficient block, so a whole curve is
switched off at once.  Adaptive tuning divides a common multiplier by the
magnitude of an initial estimate, so strong components receive weak penalties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidHyperparameter, NonDifferentiableAtZero

__all__ = [
    "PenaltySpec",
    "LambdaVector",
    "penalty_value",
    "penalty_derivative",
    "adaptive_lambdas",
    "composite_penalty",
]

_FAMILIES = ("scad", "mcp", "l1", "lq", "hard")

# floor protecting adaptive weights against vanishing initial estimates
ADAPTIVE_FLOOR = 1e-6

# families with a quadratic-approximation solver path
LQA_FAMILIES = ("scad", "mcp", "l1")


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family with its shape constants."""

    family: str = "scad"
    a: float = 3.7
    gamma: float = 3.0
    q: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidHyperparameter(f"unknown penalty family {self.family!r}")
        if self.family == "scad" and not self.a > 2:
            raise InvalidHyperparameter("scad shape a must exceed 2")
        if self.family == "mcp" and not self.gamma > 1:
            raise InvalidHyperparameter("mcp shape gamma must exceed 1")
        if self.family == "lq" and not self.q > 0:
            raise InvalidHyperparameter("lq exponent q must be positive")


@dataclass(frozen=True)
class LambdaVector:
    """Per-coefficient and per-block tuning parameters.

    ``tildes`` keeps the pair of multipliers that generated an adaptive
    vector, for reporting only.
    """

    lambda1: np.ndarray
    lambda2: np.ndarray
    tildes: tuple[float, float] | None = None

    def __post_init__(self):
        l1 = np.asarray(self.lambda1, dtype=float)
        l2 = np.asarray(self.lambda2, dtype=float)
        object.__setattr__(self, "lambda1", l1)
        object.__setattr__(self, "lambda2", l2)
        for arr in (l1, l2):
            if arr.ndim != 1:
                raise DimensionMismatch("lambda vectors must be one-dimensional")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise InvalidHyperparameter("lambda values must be finite and nonnegative")


def _check_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if not np.all(np.isfinite(lam)) or np.any(lam < 0):
        raise InvalidHyperparameter("lambda must be finite and nonnegative")
    return lam


def penalty_value(theta, lam, spec: PenaltySpec):
    """Penalty evaluated at ``|theta|``, elementwise."""
    th = np.abs(np.asarray(theta, dtype=float))
    lam = _check_lambda(lam)
    if spec.family == "l1":
        return lam * th
    if spec.family == "lq":
        return lam * th**spec.q
    if spec.family == "scad":
        a = spec.a
        mid = -(th**2 - 2 * a * lam * th + lam**2) / (2 * (a - 1))
        tail = (a + 1) * lam**2 / 2
        return np.where(th <= lam, lam * th, np.where(th <= a * lam, mid, tail))
    if spec.family == "mcp":
        g = spec.gamma
        return np.where(th <= lam * g, lam * th - th**2 / (2 * g), g * lam**2 / 2)
    # hard threshold
    return lam**2 - np.where(th < lam, (th - lam) ** 2, 0.0)


def penalty_derivative(theta, lam, spec: PenaltySpec):
    """Derivative with respect to ``theta`` for ``theta > 0``."""
    th = np.asarray(theta, dtype=float)
    if np.any(th == 0):
        raise NonDifferentiableAtZero(
            f"{spec.family} penalty is not differentiable at the origin")
    if np.any(th < 0):
        raise ValueError("derivative is defined on positive magnitudes; pass |theta|")
    lam = _check_lambda(lam)
    if spec.family == "l1":
        return lam + 0.0 * th
    if spec.family == "lq":
        return lam * spec.q * th ** (spec.q - 1)
    if spec.family == "scad":
        a = spec.a
        mid = (a * lam - th) / (a - 1)
        return np.where(th <= lam, lam, np.where(th <= a * lam, mid, 0.0))
    if spec.family == "mcp":
        return np.where(th <= lam * spec.gamma, lam - th / spec.gamma, 0.0)
    # hard threshold
    return np.where(th < lam, 2.0 * (lam - th), 0.0)


def adaptive_lambdas(tilde1: float, tilde2: float, beta_init: np.ndarray,
                     block_norms: np.ndarray) -> LambdaVector:
    """Adaptive tuning vectors from a pair of multipliers.

    Each linear coefficient gets ``tilde1 / |beta_init_s|`` and each additive
    block ``tilde2 / norm_j``, with magnitudes floored at 1e-6 so vanishing
    initial estimates yield a large but finite penalty.
    """
    if tilde1 < 0 or tilde2 < 0 or not np.isfinite(tilde1) or not np.isfinite(tilde2):
        raise InvalidHyperparameter("adaptive multipliers must be finite and nonnegative")
    beta_init = np.asarray(beta_init, dtype=float)
    block_norms = np.asarray(block_norms, dtype=float)
    lam1 = tilde1 / np.maximum(np.abs(beta_init), ADAPTIVE_FLOOR)
    lam2 = tilde2 / np.maximum(block_norms, ADAPTIVE_FLOOR)
    return LambdaVector(lambda1=lam1, lambda2=lam2, tildes=(float(tilde1), float(tilde2)))


def composite_penalty(beta: np.ndarray, blocks: list[np.ndarray], lambdas: LambdaVector,
                      bases, spec: PenaltySpec) -> float:
    """Total penalty: coefficients of the linear part plus block norms.

    ``bases`` supplies the Gram factor defining each block norm.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != lambdas.lambda1.shape:
        raise DimensionMismatch("beta and lambda1 lengths differ")
    if len(blocks) != lambdas.lambda2.size or len(blocks) != len(bases):
        raise DimensionMismatch("block count and lambda2 length differ")
    total = float(np.sum(penalty_value(beta, lambdas.lambda1, spec)))
    for j, (d, basis) in enumerate(zip(blocks, bases)):
        total += float(penalty_value(basis.block_norm(d), lambdas.lambda2[j], spec))
    return total
