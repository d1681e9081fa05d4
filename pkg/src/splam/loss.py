"""Robust loss functions, M-scale estimation, and robust standardization.

The bounded loss is the bisquare family normalized to ``sup rho = 1``:
``rho_c(t) = 1 - (1 - (t/c)^2)^3`` for ``|t| <= c`` and 1 beyond, with score
``psi = rho'`` and IRLS weight ``w(t) = psi(t)/t`` extended continuously to 0.
The squared family (``rho = t^2``) gives ordinary least squares.

The M-scale of a residual vector solves ``mean(rho0(r / s)) = b``; with the
bisquare ``c0 = 1.54764`` and ``b = 0.5`` this is consistent at the normal
distribution and has a 50% breakdown point.  With ``rho0 = t^2`` and ``b = 1``
it reduces to the root mean square.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllZeroResiduals, InvalidHyperparameter, NoConvergence, ZeroMAD

__all__ = [
    "LossSpec",
    "ScaleSpec",
    "rho",
    "psi",
    "weight",
    "s_scale",
    "mad",
    "robust_standardize",
    "default_scale",
]

_FAMILIES = ("tukey", "squared")

# MAD-to-sigma factor for normal data
MAD_FACTOR = 1.4826


@dataclass(frozen=True)
class LossSpec:
    """Loss family and its tuning constant."""

    family: str = "tukey"
    c: float = 4.685

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidHyperparameter(f"unknown loss family {self.family!r}")
        if self.family == "tukey" and not self.c > 0:
            raise InvalidHyperparameter("bisquare constant c must be positive")


@dataclass(frozen=True)
class ScaleSpec:
    """M-scale defined by mean(rho0(r/s)) = b."""

    family: str = "tukey"
    c0: float = 1.54764
    b: float = 0.5

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidHyperparameter(f"unknown scale family {self.family!r}")
        if self.family == "tukey":
            if not self.c0 > 0:
                raise InvalidHyperparameter("scale constant c0 must be positive")
            if not 0 < self.b < 1:
                raise InvalidHyperparameter("target b must lie in (0, 1) for a bounded rho0")
        elif not self.b > 0:
            raise InvalidHyperparameter("target b must be positive")

    @property
    def loss(self) -> LossSpec:
        return LossSpec(self.family, self.c0 if self.family == "tukey" else 4.685)


def default_scale(loss: LossSpec) -> ScaleSpec:
    """Scale spec conventionally paired with a loss family."""
    if loss.family == "squared":
        return ScaleSpec(family="squared", b=1.0)
    return ScaleSpec()


def _as_array(t):
    return np.asarray(t, dtype=float)


def rho(t, spec: LossSpec):
    """Loss value, elementwise."""
    t = _as_array(t)
    if spec.family == "squared":
        return t * t
    u = np.square(t / spec.c)
    return np.where(u <= 1.0, 1.0 - (1.0 - np.minimum(u, 1.0)) ** 3, 1.0)


def psi(t, spec: LossSpec):
    """Score function rho', elementwise."""
    t = _as_array(t)
    if spec.family == "squared":
        return 2.0 * t
    u = np.square(t / spec.c)
    core = (6.0 * t / spec.c**2) * np.square(1.0 - np.minimum(u, 1.0))
    return np.where(u <= 1.0, core, 0.0)


def weight(t, spec: LossSpec):
    """IRLS weight psi(t)/t with the continuous extension at t = 0."""
    t = _as_array(t)
    if spec.family == "squared":
        return np.full_like(t, 2.0)
    u = np.square(t / spec.c)
    core = (6.0 / spec.c**2) * np.square(1.0 - np.minimum(u, 1.0))
    return np.where(u <= 1.0, core, 0.0)


def s_scale(residuals, spec: ScaleSpec = ScaleSpec()) -> float:
    """M-scale of a residual vector by bisection.

    Solves ``mean(rho0(r / s)) = b`` for ``s > 0``.  Raises
    ``AllZeroResiduals`` for an identically-zero vector and ``NoConvergence``
    when no positive root exists (more than ``1 - b`` of the entries zero).
    """
    r = np.abs(_as_array(residuals).ravel())
    if r.size == 0 or not np.all(np.isfinite(r)):
        raise AllZeroResiduals("residual vector must be non-empty and finite")
    rmax = float(r.max())
    if rmax == 0.0:
        raise AllZeroResiduals("all residuals are zero; scale undefined")

    if spec.family == "squared":
        return float(np.sqrt(np.mean(r * r) / spec.b))

    loss = spec.loss
    if np.mean(r > 0) <= spec.b:
        raise NoConvergence(
            "M-scale has no positive root: too many zero residuals for target b")

    med = float(np.median(r))
    lo = 1e-8 * med if med > 0 else 1e-12 * rmax
    hi = 10.0 * rmax

    def g(s):
        return float(np.mean(rho(r / s, loss)))

    for _ in range(60):
        if g(hi) <= spec.b:
            break
        hi *= 2.0
    if g(lo) < spec.b:
        raise NoConvergence("bisection bracket does not contain the M-scale root")

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > spec.b:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-9 * mid:
            break
    return 0.5 * (lo + hi)


def _m_scale_rows(R: np.ndarray, spec: ScaleSpec, iters: int = 50) -> np.ndarray:
    """Approximate M-scale of each row of ``R`` by fixed-point iteration.

    Used to score many residual vectors at once.  Rows without a positive
    root get +inf; identically-zero rows get 0 (a perfect fit).
    """
    A = np.abs(np.asarray(R, dtype=float))
    loss = spec.loss
    out = np.empty(A.shape[0])
    zero_rows = A.max(axis=1) == 0.0
    dead = (np.mean(A > 0, axis=1) <= spec.b) & ~zero_rows
    out[zero_rows] = 0.0
    out[dead] = np.inf
    live = ~(zero_rows | dead)
    if not np.any(live):
        return out
    B = A[live]
    s = np.median(B, axis=1) / 0.6745
    s = np.where(s > 0, s, B.max(axis=1))
    for _ in range(iters):
        m = np.mean(rho(B / s[:, None], loss), axis=1)
        s_new = s * np.sqrt(m / spec.b)
        if np.all(np.abs(s_new - s) <= 1e-10 * s):
            s = s_new
            break
        s = s_new
    out[live] = s
    return out


def mad(x) -> float:
    """Median absolute deviation about the median, unscaled."""
    x = _as_array(x).ravel()
    return float(np.median(np.abs(x - np.median(x))))


def robust_standardize(x):
    """Center by the median, scale by 1.4826 * MAD.

    Returns ``(z, center, scale)``.  Raises ``ZeroMAD`` when more than half
    of the values coincide with the median.
    """
    x = _as_array(x).ravel()
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ZeroMAD("standardization needs a non-empty finite sample")
    c = float(np.median(x))
    s = MAD_FACTOR * mad(x)
    if s == 0.0:
        raise ZeroMAD("median absolute deviation is zero")
    return (x - c) / s, c, s
