"""Partially linear additive model: data, design assembly, unpenalized fits.

The response is modeled as an intercept plus a linear form in the Z columns
plus a sum of smooth curves in the X columns, each curve expanded in a
centered B-spline basis so the intercept stays identifiable.  The preliminary
estimator is an MM-type fit: subsample candidates scored by the M-scale of
their residuals (S-stage), then weighted-least-squares iterations with the
bounded loss at the frozen scale (M-stage).  With the squared loss the same
entry point reduces to ordinary least squares.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import CenteredSplineBasis, center, make_knots
from .errors import (DegenerateSample, DimensionMismatch, NoConvergence,
                     SchemaError, SingularDesign)
from .loss import LossSpec, ScaleSpec, _m_scale_rows, default_scale, s_scale, weight

__all__ = [
    "Dataset",
    "DesignMatrix",
    "PlamFit",
    "load_dataset_csv",
    "build_bases",
    "build_design",
    "preliminary_fit",
    "predict",
    "predict_many",
    "eval_additive",
    "residuals",
]


@dataclass(frozen=True)
class Dataset:
    """Observations: response ``y``, linear covariates ``Z``, additive ``X``."""

    y: np.ndarray
    Z: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        Z = np.asarray(self.Z, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if X.ndim == 1:
            X = X[:, None]
        if Z.size == 0:
            Z = Z.reshape(y.size, 0)
        if X.size == 0:
            X = X.reshape(y.size, 0)
        if Z.shape[0] != y.size or X.shape[0] != y.size:
            raise DimensionMismatch("y, Z, X must have the same number of rows")
        for name, arr in (("y", y), ("Z", Z), ("X", X)):
            if not np.all(np.isfinite(arr)):
                raise SchemaError(f"{name} contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def load_dataset_csv(path, response: str, linear: list[str],
                     additive: list[str]) -> Dataset:
    """Read a header-row CSV into a Dataset, by column names."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        header = [h.strip() for h in header]
        rows = [row for row in reader if row and any(c.strip() for c in row)]
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    wanted = [response, *linear, *additive]
    index = {}
    for name in wanted:
        hits = [i for i, h in enumerate(header) if h == name]
        if not hits:
            raise SchemaError(f"{path}: column {name!r} not found in header")
        if len(hits) > 1:
            raise SchemaError(f"{path}: column {name!r} appears more than once")
        index[name] = hits[0]

    def column(name):
        j = index[name]
        out = np.empty(len(rows))
        for i, row in enumerate(rows):
            if j >= len(row) or not row[j].strip():
                raise SchemaError(f"{path}: row {i + 2} missing value for {name!r}")
            try:
                out[i] = float(row[j])
            except ValueError:
                raise SchemaError(
                    f"{path}: row {i + 2} column {name!r} is not numeric: {row[j]!r}")
        return out

    y = column(response)
    Z = np.column_stack([column(c) for c in linear]) if linear else np.empty((len(rows), 0))
    X = np.column_stack([column(c) for c in additive]) if additive else np.empty((len(rows), 0))
    return Dataset(y=y, Z=Z, X=X)


def _k_vector(k, p: int) -> np.ndarray:
    kv = np.asarray(k, dtype=int)
    if kv.ndim == 0:
        kv = np.full(p, int(kv))
    if kv.shape != (p,):
        raise DimensionMismatch(f"expected {p} basis dimensions, got shape {kv.shape}")
    return kv


def build_bases(X: np.ndarray, k, order: int = 4, placement: str = "uniform",
                interval=None) -> list[CenteredSplineBasis]:
    """One centered basis per additive column.

    ``interval`` may be None (observed range per column), a single pair
    applied to every column, or a sequence of pairs.
    """
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    kv = _k_vector(k, p)
    if interval is None or (np.ndim(interval) == 1 and len(interval) == 2):
        intervals = [interval] * p
    else:
        intervals = list(interval)
        if len(intervals) != p:
            raise DimensionMismatch("one interval per additive column required")
    out = []
    for j in range(p):
        knots = make_knots(X[:, j], int(kv[j]), order=order, placement=placement,
                           interval=intervals[j])
        out.append(center(knots))
    return out


@dataclass(frozen=True)
class DesignMatrix:
    """Stacked design: linear columns then one slice per additive block."""

    W: np.ndarray
    q: int
    blocks: list[slice]
    bases: list[CenteredSplineBasis] = field(repr=False)

    @property
    def n_params(self) -> int:
        return self.W.shape[1]


def build_design(data: Dataset, bases: list[CenteredSplineBasis]) -> DesignMatrix:
    """Rows ``(Z_i, B1(X_i1), ..., Bp(X_ip))`` with centered spline blocks."""
    if len(bases) != data.p:
        raise DimensionMismatch(f"need {data.p} bases, got {len(bases)}")
    parts = [data.Z]
    blocks = []
    offset = data.q
    for j, basis in enumerate(bases):
        V = basis.evaluate(data.X[:, j], clamp=True)
        parts.append(V)
        blocks.append(slice(offset, offset + basis.dim))
        offset += basis.dim
    W = np.hstack(parts)
    if not np.all(np.isfinite(W)):
        raise SingularDesign("design matrix contains non-finite entries")
    return DesignMatrix(W=W, q=data.q, blocks=blocks, bases=list(bases))


@dataclass
class PlamFit:
    """Fitted model; inactive components hold exactly-zero coefficients."""

    mu: float
    beta: np.ndarray
    c_blocks: list[np.ndarray]
    sigma: float
    bases: list[CenteredSplineBasis]
    active_linear: np.ndarray
    active_additive: np.ndarray
    k_used: np.ndarray
    lambdas_used: object = None
    objective: float | None = None
    converged: bool = True
    iterations: int = 0

    @property
    def q(self) -> int:
        return self.beta.size

    @property
    def p(self) -> int:
        return len(self.c_blocks)

    def coefficient_vector(self) -> np.ndarray:
        """Concatenated (beta, blocks), matching a DesignMatrix layout."""
        return np.concatenate([self.beta, *self.c_blocks]) if self.p or self.q else np.empty(0)


def predict_many(fit: PlamFit, Z: np.ndarray, X: np.ndarray, clamp: bool = True) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    X = np.asarray(X, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if X.ndim == 1:
        X = X[:, None]
    if Z.shape[1] != fit.q or X.shape[1] != fit.p:
        raise DimensionMismatch("covariate dimensions do not match the fit")
    out = np.full(Z.shape[0] if fit.q else X.shape[0], fit.mu, dtype=float)
    if fit.q:
        out += Z @ fit.beta
    for j, basis in enumerate(fit.bases):
        cj = fit.c_blocks[j]
        if np.any(cj != 0.0):
            out += basis.evaluate(X[:, j], clamp=clamp) @ cj
    return out


def predict(fit: PlamFit, z, x) -> float:
    """Prediction at a single covariate point."""
    z = np.atleast_2d(np.asarray(z, dtype=float)) if fit.q else np.empty((1, 0))
    x = np.atleast_2d(np.asarray(x, dtype=float)) if fit.p else np.empty((1, 0))
    return float(predict_many(fit, z, x)[0])


def eval_additive(fit: PlamFit, j: int, t, clamp: bool = True) -> np.ndarray:
    """The j-th fitted curve on a grid; exact zeros when the block is inactive."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if not 0 <= j < fit.p:
        raise DimensionMismatch(f"additive index {j} out of range")
    cj = fit.c_blocks[j]
    if not np.any(cj != 0.0):
        return np.zeros(t.shape)
    return fit.bases[j].evaluate(t, clamp=clamp) @ cj


def residuals(fit: PlamFit, data: Dataset) -> np.ndarray:
    return data.y - predict_many(fit, data.Z, data.X)


def _wls_batch(W: np.ndarray, wts: np.ndarray, y: np.ndarray, chunk: int = 128) -> np.ndarray:
    """Solve one weighted LS problem per row of ``wts``; NaN rows on failure."""
    n, m = W.shape
    C = wts.shape[0]
    out = np.full((C, m), np.nan)
    for s in range(0, C, chunk):
        wc = wts[s:s + chunk]
        Wb = wc[:, :, None] * W[None, :, :]
        A = np.matmul(np.swapaxes(Wb, 1, 2), W[None, :, :])
        rhs = np.matmul(wc * y[None, :], W)
        try:
            sol = np.linalg.solve(A, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            sol = np.empty((wc.shape[0], m))
            for i in range(wc.shape[0]):
                try:
                    sol[i] = np.linalg.solve(A[i], rhs[i])
                except np.linalg.LinAlgError:
                    sol[i] = np.nan
        out[s:s + chunk] = sol
    return out


def _subsample_candidates(W: np.ndarray, y: np.ndarray, n_sub: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Exact solutions on random row subsets of size m; NaN rows on failure."""
    n, m = W.shape
    idx = np.stack([rng.choice(n, size=m, replace=False) for _ in range(n_sub)])
    A = W[idx]
    b = y[idx]
    try:
        theta = np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        theta = np.empty((n_sub, m))
        for i in range(n_sub):
            try:
                theta[i] = np.linalg.solve(A[i], b[i])
            except np.linalg.LinAlgError:
                theta[i] = np.nan
    return theta


def _irls(W: np.ndarray, y: np.ndarray, theta0: np.ndarray, sigma: float,
          loss: LossSpec, tol: float, max_iter: int):
    """Weighted LS iterations at a fixed scale; returns (theta, iterations)."""
    theta = theta0.copy()
    WT = W.T
    for it in range(1, max_iter + 1):
        r = y - W @ theta
        w = weight(r / sigma, loss)
        if not np.any(w > 0):
            raise NoConvergence("all observations received zero weight")
        A = WT @ (w[:, None] * W)
        rhs = WT @ (w * y)
        try:
            theta_new = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            raise SingularDesign("weighted normal equations are singular")
        nrm = np.linalg.norm(theta)
        step = np.linalg.norm(theta_new - theta)
        theta = theta_new
        if nrm == 0.0 or step <= tol * nrm:
            return theta, it
    raise NoConvergence(f"IRLS did not converge in {max_iter} iterations")


def preliminary_fit(data: Dataset, k, loss: LossSpec = LossSpec(),
                    scale: ScaleSpec | None = None, *, order: int = 4,
                    placement: str = "uniform", interval=None,
                    seed=0, n_subsamples: int = 500, refine_steps: int = 2,
                    tol: float = 1e-8, max_iter: int = 500,
                    bases: list[CenteredSplineBasis] | None = None) -> PlamFit:
    """Unpenalized fit with an explicit intercept column.

    With the bounded loss this is an MM-type estimator: ``n_subsamples``
    random ``(q + K + 1)``-point least-squares candidates, each improved by
    ``refine_steps`` reweighting steps, are scored by the M-scale of their
    full-sample residuals; the best candidate fixes the residual scale and
    seeds the reweighting iterations.  With the squared loss the estimator is
    ordinary least squares and ``sigma`` is fixed at one: constant weights
    make the coefficients scale-free and the selection score cancels the
    scale for this family, so no residual scale estimate is involved.
    """
    if scale is None:
        scale = default_scale(loss)
    if bases is None:
        bases = build_bases(data.X, k, order=order, placement=placement, interval=interval)
    design = build_design(data, bases)
    kvec = np.array([b.dim + 1 for b in bases], dtype=int)
    n = data.n
    ones = np.ones((n, 1))
    W1 = np.hstack([ones, design.W])
    m = W1.shape[1]
    if n < 2 * m:
        raise SingularDesign(
            f"need at least {2 * m} observations to fit {m} parameters, got {n}")
    y = data.y

    if loss.family == "squared":
        theta, res, rank, _ = np.linalg.lstsq(W1, y, rcond=None)
        if rank < m:
            raise SingularDesign("design matrix is rank deficient")
        sigma = 1.0
        iters = 1
    else:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        theta_c = _subsample_candidates(W1, y, n_subsamples, rng)
        alive = np.all(np.isfinite(theta_c), axis=1)
        if not np.any(alive):
            raise SingularDesign("every subsample produced a singular system")
        for _ in range(refine_steps):
            Th = theta_c[alive]
            R = y[None, :] - Th @ W1.T
            s_approx = _m_scale_rows(R, scale, iters=12)
            ok = np.isfinite(s_approx) & (s_approx > 0)
            wts = np.zeros_like(R)
            wts[ok] = weight(R[ok] / s_approx[ok, None], scale.loss)
            new = _wls_batch(W1, wts, y)
            good = np.all(np.isfinite(new), axis=1)
            Th[good] = new[good]
            theta_c[alive] = Th
        R = y[None, :] - theta_c[alive] @ W1.T
        s_fin = _m_scale_rows(R, scale, iters=60)
        if not np.any(np.isfinite(s_fin)):
            raise NoConvergence("no subsample candidate yielded a finite scale")
        best = int(np.argmin(s_fin))
        theta_s = theta_c[alive][best]
        if s_fin[best] == 0.0:
            # perfect interpolation: nothing left to reweight
            sigma, theta, iters = 0.0, theta_s, 0
        else:
            sigma = s_scale(R[best], scale)
            theta, iters = _irls(W1, y, theta_s, sigma, loss, tol, max_iter)

    beta = theta[1:1 + data.q]
    c_blocks = [theta[1 + sl.start:1 + sl.stop] for sl in design.blocks]
    return PlamFit(
        mu=float(theta[0]), beta=beta, c_blocks=c_blocks, sigma=float(sigma),
        bases=list(bases), active_linear=np.ones(data.q, dtype=bool),
        active_additive=np.ones(data.p, dtype=bool), k_used=kvec,
        lambdas_used=None, objective=None, converged=True, iterations=iters)
