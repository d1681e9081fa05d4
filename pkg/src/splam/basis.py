"""B-spline bases on an interval, mean-centered for additive-model identifiability.

A basis is described by its dimension ``k`` (number of uncentered elements),
the spline order (order = degree + 1, so cubic splines have order 4) and the
placement of the ``k - order`` interior knots.  Centering subtracts from each
element its average over the interval so every retained element integrates to
zero; the last uncentered element is dropped, leaving ``k - 1`` functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import DegenerateSample, InvalidOrder, OutOfRange

__all__ = [
    "KnotVector",
    "CenteredSplineBasis",
    "make_knots",
    "eval_uncentered",
    "basis_matrix",
    "center",
    "gram",
]


@dataclass(frozen=True)
class KnotVector:
    """Clamped knot sequence: boundaries repeated ``order`` times."""

    interior: np.ndarray
    boundary_lo: float
    boundary_hi: float
    order: int

    def __post_init__(self):
        interior = np.asarray(self.interior, dtype=float)
        object.__setattr__(self, "interior", interior)
        if self.order < 1:
            raise InvalidOrder(f"order must be >= 1, got {self.order}")
        if not self.boundary_lo < self.boundary_hi:
            raise DegenerateSample("knot interval has zero length")
        if interior.size:
            if np.any(np.diff(interior) < 0):
                raise DegenerateSample("interior knots must be non-decreasing")
            if interior[0] <= self.boundary_lo or interior[-1] >= self.boundary_hi:
                raise DegenerateSample("interior knots must lie strictly inside the interval")
        object.__setattr__(self, "padded", self._pad())

    def _pad(self) -> np.ndarray:
        lo = np.full(self.order, self.boundary_lo)
        hi = np.full(self.order, self.boundary_hi)
        return np.concatenate([lo, self.interior, hi])

    @property
    def n_basis(self) -> int:
        """Number of uncentered basis functions (the dimension k)."""
        return self.interior.size + self.order


def make_knots(x, k: int, order: int = 4, placement: str = "uniform",
               interval: tuple[float, float] | None = None) -> KnotVector:
    """Build a clamped knot vector for a basis of dimension ``k``.

    Parameters
    ----------
    x : array_like
        Sample of the covariate; sets the interval when ``interval`` is None
        and supplies the quantiles for ``placement="quantile"``.
    k : int
        Basis dimension; the number of interior knots is ``k - order``.
    order : int
        Spline order (degree + 1).
    placement : {"uniform", "quantile"}
        Equispaced interior knots, or interior knots at the
        ``l / (k - order + 1)`` sample quantiles.
    interval : (float, float), optional
        Explicit basis interval; defaults to ``(min(x), max(x))``.
    """
    if order < 1:
        raise InvalidOrder(f"order must be >= 1, got {order}")
    if k < order:
        raise InvalidOrder(f"basis dimension k={k} must be at least the order {order}")
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise DegenerateSample("covariate sample must be non-empty and finite")
    if interval is None:
        lo, hi = float(np.min(x)), float(np.max(x))
    else:
        lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise DegenerateSample("covariate sample spans a single point")

    n_int = k - order
    if placement == "uniform":
        interior = np.linspace(lo, hi, n_int + 2)[1:-1]
    elif placement == "quantile":
        if np.unique(x).size < k:
            raise DegenerateSample(
                f"quantile placement needs at least k={k} distinct values, "
                f"got {np.unique(x).size}")
        probs = np.arange(1, n_int + 1) / (n_int + 1)
        interior = np.quantile(x, probs)
    else:
        raise ValueError(f"unknown placement {placement!r}")
    if n_int > 0 and (interior[0] <= lo or interior[-1] >= hi):
        raise DegenerateSample("interior knots collide with the interval boundary")
    return KnotVector(interior=interior, boundary_lo=lo, boundary_hi=hi, order=order)


def basis_matrix(knots: KnotVector, t, clamp: bool = False) -> np.ndarray:
    """Evaluate all uncentered elements at the points ``t``.

    Returns an array of shape ``(len(t), k)``.  Points outside the interval
    raise ``OutOfRange`` unless ``clamp`` is set, in which case they are
    clipped to the nearest boundary.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    lo, hi = knots.boundary_lo, knots.boundary_hi
    if clamp:
        t = np.clip(t, lo, hi)
    elif np.any(t < lo) or np.any(t > hi):
        raise OutOfRange(f"evaluation point outside [{lo}, {hi}]")

    pad = knots.padded
    order = knots.order
    k = knots.n_basis
    # span index mu: pad[mu] <= t < pad[mu+1], clipped so the last closed
    # interval absorbs t == boundary_hi
    mu = np.searchsorted(pad, t, side="right") - 1
    mu = np.clip(mu, order - 1, len(pad) - order - 1)

    npts = t.shape[0]
    vals = np.zeros((npts, order))
    vals[:, 0] = 1.0
    left = np.zeros((npts, order))
    right = np.zeros((npts, order))
    for d in range(1, order):
        left[:, d] = t - pad[mu + 1 - d]
        right[:, d] = pad[mu + d] - t
        saved = np.zeros(npts)
        for r in range(d):
            den = right[:, r + 1] + left[:, d - r]
            # zero-width spans contribute nothing (0/0 -> 0)
            temp = np.where(den > 0, vals[:, r] / np.where(den > 0, den, 1.0), 0.0)
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, d - r] * temp
        vals[:, d] = saved

    out = np.zeros((npts, k))
    cols = mu[:, None] - (order - 1) + np.arange(order)[None, :]
    out[np.arange(npts)[:, None], cols] = vals
    return out


def eval_uncentered(knots: KnotVector, t: float) -> np.ndarray:
    """All k uncentered elements at a single point (strict range check)."""
    return basis_matrix(knots, float(t), clamp=False)[0]


def _quadrature(knots: KnotVector) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on each distinct knot interval.

    ``order + 1`` nodes per interval: exact for products of two elements.
    """
    brk = np.unique(knots.padded)
    a, b = brk[:-1], brk[1:]
    xg, wg = leggauss(knots.order + 1)
    nodes = 0.5 * (a[:, None] + b[:, None]) + 0.5 * (b - a)[:, None] * xg[None, :]
    wts = 0.5 * (b - a)[:, None] * wg[None, :]
    return nodes.ravel(), wts.ravel()


@dataclass(frozen=True)
class CenteredSplineBasis:
    """Centered basis: first ``k - 1`` elements minus their interval means.

    Immutable; ``gram`` holds the pairwise integrals of the centered elements
    over the interval and ``gram_chol`` its lower Cholesky factor.
    """

    knots: KnotVector
    offsets: np.ndarray
    gram: np.ndarray
    gram_chol: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.knots.n_basis - 1

    @property
    def interval(self) -> tuple[float, float]:
        return (self.knots.boundary_lo, self.knots.boundary_hi)

    def evaluate(self, t, clamp: bool = False) -> np.ndarray:
        """Centered elements at ``t``; shape ``(len(t), dim)``."""
        full = basis_matrix(self.knots, t, clamp=clamp)
        return full[:, : self.dim] - self.offsets

    def block_norm(self, coef: np.ndarray) -> float:
        """Norm induced by the Gram matrix, ``sqrt(c' G c)``."""
        coef = np.asarray(coef, dtype=float)
        if coef.shape != (self.dim,):
            raise OutOfRange(f"coefficient block must have length {self.dim}")
        return float(np.linalg.norm(self.gram_chol.T @ coef))


def center(knots: KnotVector) -> CenteredSplineBasis:
    """Center the basis and drop the last element.

    Each retained element becomes ``B_s - mean(B_s)`` where the mean is taken
    over the interval, so each integrates to zero there.
    """
    k = knots.n_basis
    if k < 2:
        raise InvalidOrder("centering needs a basis dimension of at least 2")
    nodes, wts = _quadrature(knots)
    phi = basis_matrix(knots, nodes)
    length = knots.boundary_hi - knots.boundary_lo
    offsets = (wts @ phi)[: k - 1] / length
    phi_c = phi[:, : k - 1] - offsets
    g = (phi_c * wts[:, None]).T @ phi_c
    g = 0.5 * (g + g.T)
    chol = np.linalg.cholesky(g)
    return CenteredSplineBasis(knots=knots, offsets=offsets, gram=g, gram_chol=chol)


def gram(basis: CenteredSplineBasis) -> np.ndarray:
    """Pairwise integrals of the centered elements (positive definite)."""
    return basis.gram
