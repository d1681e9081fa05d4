"""Penalized fitting by local quadratic approximation and reweighting.

Each iteration majorizes the bounded loss by weighted least squares at the
current residuals and the folded concave penalty by a quadratic tangent at the
current coefficients, then solves the resulting linear system.  Coefficients
(or whole additive blocks) whose magnitude falls below a threshold are set to
exactly zero and stay out for the remaining iterations.  The residual scale is
frozen at the preliminary estimate throughout.

The reweighting uses weights standardized by their value at a zero residual,
so a perfect fit has unit curvature against the penalty term for every loss
family.  Equivalently, the solver minimizes ``mean(rho(r/sigma)) / w(0)``
plus the composite penalty: the classical convention that puts the squared
and bounded families on the same loss-versus-penalty footing (for the squared
family the standardized weights are identically one, which is what makes the
ridge closed form ``(X'X + 2 n kappa I)^{-1} X'y`` exact at sigma = 1).

Only penalty families with a finite quadratic tangent slope at nonzero points
take this path: scad, mcp, and the l1 family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import CenteredSplineBasis
from .errors import (DimensionMismatch, InvalidHyperparameter,
                     NonDifferentiableAtZero, SingularSystem)
from .loss import LossSpec, rho, weight
from .model import Dataset, DesignMatrix, PlamFit, build_design
from .penalty import (LQA_FAMILIES, LambdaVector, PenaltySpec,
                      composite_penalty, penalty_derivative)

__all__ = ["SolverOptions", "LqaMatrix", "lqa_matrix", "irls_step", "solve_penalized"]


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rule, zero threshold, and diagonal guard for the solver."""

    epsilon: float = 1e-6
    max_iter: int = 200
    zero_threshold: float = 1e-4
    ridge_floor: float = 1e-10

    def __post_init__(self):
        if self.epsilon <= 0 or self.max_iter < 1 or self.zero_threshold < 0:
            raise InvalidHyperparameter("solver options out of range")


@dataclass(frozen=True)
class LqaMatrix:
    """Quadratic penalty term anchored at the current coefficients.

    ``diag_linear`` holds one slope per linear coefficient and
    ``block_factors`` one scalar per additive block, multiplying that block's
    Gram matrix; ``dense`` is the assembled symmetric matrix.
    """

    diag_linear: np.ndarray
    block_factors: np.ndarray
    dense: np.ndarray


def _check_family(spec: PenaltySpec):
    if spec.family in LQA_FAMILIES:
        return
    if spec.family == "lq" and spec.q == 1.0:
        return
    raise InvalidHyperparameter(
        f"penalty family {spec.family!r} has no quadratic-approximation path")


def lqa_matrix(beta0: np.ndarray, blocks0: list[np.ndarray], lambdas: LambdaVector,
               spec: PenaltySpec, bases: list[CenteredSplineBasis]) -> LqaMatrix:
    """Tangent quadratic coefficients at the anchor ``(beta0, blocks0)``.

    Linear entries are ``p'(|b|; lam) / (2 |b|)``; each additive block gets
    the scalar ``p'(norm; lam) / (2 norm)`` on its Gram matrix, where the norm
    is the Gram-induced one at the anchor.  Entries with ``lam = 0`` are zero.
    Anchors at the origin with a positive lam must have been excluded upstream.
    """
    _check_family(spec)
    beta0 = np.asarray(beta0, dtype=float)
    q = beta0.size
    if lambdas.lambda1.size != q or lambdas.lambda2.size != len(blocks0):
        raise DimensionMismatch("lambda vector does not match the coefficient layout")
    if len(bases) != len(blocks0):
        raise DimensionMismatch("one basis per additive block required")

    diag = np.zeros(q)
    for s in range(q):
        lam = lambdas.lambda1[s]
        if lam == 0.0:
            continue
        mag = abs(beta0[s])
        if mag == 0.0:
            raise NonDifferentiableAtZero(
                "zero linear anchor with a positive penalty must be excluded")
        diag[s] = float(penalty_derivative(mag, lam, spec)) / (2.0 * mag)

    factors = np.zeros(len(blocks0))
    dims = [b.dim for b in bases]
    M = q + int(np.sum(dims))
    dense = np.zeros((M, M))
    dense[np.arange(q), np.arange(q)] = diag
    off = q
    for j, (d0, basis) in enumerate(zip(blocks0, bases)):
        dim = basis.dim
        lam = lambdas.lambda2[j]
        if lam > 0.0:
            nrm = basis.block_norm(np.asarray(d0, dtype=float))
            if nrm == 0.0:
                raise NonDifferentiableAtZero(
                    "zero additive anchor with a positive penalty must be excluded")
            factors[j] = float(penalty_derivative(nrm, lam, spec)) / (2.0 * nrm)
            dense[off:off + dim, off:off + dim] = factors[j] * basis.gram
        off += dim
    return LqaMatrix(diag_linear=diag, block_factors=factors, dense=dense)


def _guarded_solve(A: np.ndarray, rhs: np.ndarray, ridge_floor: float) -> np.ndarray:
    try:
        out = np.linalg.solve(A, rhs)
        if np.all(np.isfinite(out)):
            return out
    except np.linalg.LinAlgError:
        pass
    dim = A.shape[0]
    tr = float(np.trace(A))
    ridge = ridge_floor * (tr / dim if tr > 0 else 1.0)
    try:
        out = np.linalg.solve(A + ridge * np.eye(dim), rhs)
    except np.linalg.LinAlgError:
        raise SingularSystem("iteration system is singular even with the ridge guard")
    if not np.all(np.isfinite(out)):
        raise SingularSystem("iteration produced non-finite coefficients")
    return out


def irls_step(theta: np.ndarray, W: np.ndarray, y: np.ndarray, sigma: float,
              lqa: LqaMatrix, loss: LossSpec,
              opts: SolverOptions = SolverOptions()) -> np.ndarray:
    """One reweighting step of the penalized system.

    Solves ``(mean_i (w_i / sigma^2) W_i W_i' + 2 Sigma) theta = mean_i
    (w_i / sigma^2) W_i y_i`` with weights at the current residuals,
    standardized so that w(0) = 1 (see the module docstring).
    """
    theta = np.asarray(theta, dtype=float)
    n = y.size
    if W.shape != (n, theta.size):
        raise DimensionMismatch("design, response and coefficients disagree")
    if not sigma > 0:
        raise InvalidHyperparameter("sigma must be positive")
    r = y - W @ theta
    w = weight(r / sigma, loss) / float(weight(0.0, loss))
    if not np.any(w > 0):
        raise SingularSystem("all observations received zero weight")
    scale = 1.0 / (n * sigma**2)
    A = (W.T @ (w[:, None] * W)) * scale + 2.0 * lqa.dense
    rhs = (W.T @ (w * y)) * scale
    return _guarded_solve(A, rhs, opts.ridge_floor)


def solve_penalized(data: Dataset, bases: list[CenteredSplineBasis],
                    lambdas: LambdaVector, spec: PenaltySpec, init: PlamFit,
                    sigma_hat: float, loss: LossSpec = LossSpec(),
                    opts: SolverOptions = SolverOptions(),
                    design: DesignMatrix | None = None) -> PlamFit:
    """Penalized fit at a fixed tuning vector, warm-started at ``init``.

    The intercept is carried over from ``init`` and the response is centered
    by it; the scale stays frozen at ``sigma_hat``.  Returns a fit with exact
    zeros on the discarded components, the reached objective value, and a
    convergence flag (a fit that used all iterations is returned, flagged).
    """
    _check_family(spec)
    if not sigma_hat > 0:
        raise InvalidHyperparameter("sigma_hat must be positive")
    if design is None:
        design = build_design(data, bases)
    W = design.W
    q, p = data.q, data.p
    if lambdas.lambda1.size != q or lambdas.lambda2.size != p:
        raise DimensionMismatch("lambda vector does not match the model layout")
    y_c = data.y - init.mu
    n = data.n
    delta = opts.zero_threshold

    beta = np.asarray(init.beta, dtype=float).copy()
    blocks = [np.asarray(b, dtype=float).copy() for b in init.c_blocks]
    if beta.size != q or len(blocks) != p:
        raise DimensionMismatch("init does not match the model layout")
    for j, basis in enumerate(bases):
        if blocks[j].size != basis.dim:
            raise DimensionMismatch("init blocks do not match the bases")

    lin_active = np.ones(q, dtype=bool)
    add_active = np.ones(p, dtype=bool)
    for s in range(q):
        if lambdas.lambda1[s] > 0 and abs(beta[s]) < delta:
            lin_active[s] = False
            beta[s] = 0.0
    for j in range(p):
        if lambdas.lambda2[j] > 0 and bases[j].block_norm(blocks[j]) < delta:
            add_active[j] = False
            blocks[j][:] = 0.0

    def embed():
        return np.concatenate([beta, *blocks]) if q + p else np.empty(0)

    def active_columns():
        cols = [np.flatnonzero(lin_active)]
        for j in range(p):
            if add_active[j]:
                sl = design.blocks[j]
                cols.append(np.arange(sl.start, sl.stop))
        return np.concatenate(cols) if cols else np.empty(0, dtype=int)

    w0 = float(weight(0.0, loss))
    scale_w = 1.0 / (n * sigma_hat**2)
    squared = loss.family == "squared"
    if squared:
        # standardized weights are identically one: the cross products never change
        G_full = (W.T @ W) * scale_w
        g_full = (W.T @ y_c) * scale_w
    converged = False
    iterations = 0
    cols = active_columns()
    Wa = W[:, cols]
    dirty = False

    for it in range(1, opts.max_iter + 1):
        iterations = it
        theta_prev_full = embed()
        if dirty:
            cols = active_columns()
            Wa = W[:, cols]
            dirty = False
        if cols.size == 0:
            converged = True
            break

        sub_l1 = lambdas.lambda1[lin_active]
        sub_bases = [bases[j] for j in range(p) if add_active[j]]
        sub_blocks = [blocks[j] for j in range(p) if add_active[j]]
        sub_l2 = lambdas.lambda2[add_active]
        lqa = lqa_matrix(beta[lin_active], sub_blocks,
                         LambdaVector(sub_l1, sub_l2), spec, sub_bases)

        if squared:
            A = G_full[np.ix_(cols, cols)] + 2.0 * lqa.dense
            rhs = g_full[cols]
        else:
            theta_a = np.concatenate([beta[lin_active], *sub_blocks])
            r = y_c - Wa @ theta_a
            w = weight(r / sigma_hat, loss) / w0
            if not np.any(w > 0):
                raise SingularSystem("all observations received zero weight")
            A = (Wa.T @ (w[:, None] * Wa)) * scale_w + 2.0 * lqa.dense
            rhs = (Wa.T @ (w * y_c)) * scale_w
        theta_new = _guarded_solve(A, rhs, opts.ridge_floor)

        # scatter back
        nl = int(lin_active.sum())
        beta[lin_active] = theta_new[:nl]
        off = nl
        for j in range(p):
            if add_active[j]:
                d = bases[j].dim
                blocks[j][:] = theta_new[off:off + d]
                off += d

        # discard components that fell below the threshold (no re-entry)
        for s in np.flatnonzero(lin_active):
            if lambdas.lambda1[s] > 0 and abs(beta[s]) < delta:
                lin_active[s] = False
                beta[s] = 0.0
                dirty = True
        for j in np.flatnonzero(add_active):
            if lambdas.lambda2[j] > 0 and bases[j].block_norm(blocks[j]) < delta:
                add_active[j] = False
                blocks[j][:] = 0.0
                dirty = True

        theta_full = embed()
        prev_norm = np.linalg.norm(theta_prev_full)
        if prev_norm == 0.0 or np.linalg.norm(theta_full - theta_prev_full) <= opts.epsilon * prev_norm:
            converged = True
            break

    final_theta = embed()
    r_fin = y_c - W @ final_theta if final_theta.size else y_c.copy()
    objective = float(np.mean(rho(r_fin / sigma_hat, loss))) / w0 + composite_penalty(
        beta, blocks, lambdas, bases, spec)

    return PlamFit(
        mu=float(init.mu), beta=beta, c_blocks=blocks, sigma=float(sigma_hat),
        bases=list(bases), active_linear=lin_active, active_additive=add_active,
        k_used=np.array([b.dim + 1 for b in bases], dtype=int),
        lambdas_used=lambdas, objective=objective, converged=converged,
        iterations=iterations)
