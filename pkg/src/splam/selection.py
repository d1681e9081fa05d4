"""Choosing the penalty levels and the basis dimension.

Candidate fits are scored by a robust information criterion built from the
bounded loss at the frozen preliminary scale.  Penalty levels are searched on
a two-dimensional grid of adaptive multipliers at each basis dimension, and
the dimension itself walks a ladder from small to large, stopping at the
first value whose score fails to improve on its predecessor.
"""

from __future__ import annotations

import numpy as np

from .errors import NoConvergence, SplamError
from .loss import LossSpec, rho
from .model import Dataset, DesignMatrix, PlamFit, build_bases, build_design, preliminary_fit
from .penalty import LambdaVector, PenaltySpec, adaptive_lambdas
from .solver import SolverOptions, solve_penalized

__all__ = ["count_df", "rbic_lambda", "rbic_k", "default_k_grid", "select",
           "fit_unpenalized"]


def count_df(fit: PlamFit) -> tuple[int, int]:
    """Number of active linear terms and active additive components."""
    return int(np.sum(fit.active_linear)), int(np.sum(fit.active_additive))


def _residuals_fast(fit: PlamFit, data: Dataset, design: DesignMatrix | None) -> np.ndarray:
    if design is not None:
        return data.y - fit.mu - design.W @ fit.coefficient_vector()
    from .model import residuals
    return residuals(fit, data)


def rbic_lambda(fit: PlamFit, data: Dataset, loss: LossSpec = LossSpec(),
                design: DesignMatrix | None = None) -> float:
    """Information criterion for comparing fits across penalty levels.

    Lower is better.  The goodness term is the log of the summed loss at the
    frozen scale; the charge is one unit of log(n)/n per active linear term
    plus log(n/K) * K/n per active additive component, where K is the total
    spline coefficient count.  A perfect fit returns -inf.
    """
    r = _residuals_fast(fit, data, design)
    total = fit.sigma**2 * float(np.sum(rho(r / fit.sigma, loss)))
    if total <= 0.0:
        return -np.inf
    n = data.n
    K = int(sum(b.dim for b in fit.bases))
    df_c, df_n = count_df(fit)
    out = np.log(total) + df_c * np.log(n) / n
    if K > 0:
        out += df_n * np.log(n / K) * (K / n)
    return float(out)


def rbic_k(fit: PlamFit, data: Dataset, loss: LossSpec = LossSpec(),
           design: DesignMatrix | None = None) -> float:
    """Information criterion for comparing basis dimensions.

    Lower is better; the charge is log(n)/(2n) per spline coefficient
    counted over all additive components.  A perfect fit returns -inf.
    """
    r = _residuals_fast(fit, data, design)
    total = fit.sigma**2 * float(np.sum(rho(r / fit.sigma, loss)))
    if total <= 0.0:
        return -np.inf
    n = data.n
    return float(np.log(total) + np.log(n) / (2.0 * n) * float(np.sum(fit.k_used)))


def default_k_grid(n: int) -> np.ndarray:
    """Ladder of candidate basis dimensions for a sample of size n."""
    lo = int(np.ceil(max(n**0.2 / 2.0, 4.0)))
    hi = int(np.floor(8.0 + 2.0 * n**0.2))
    if hi < lo:
        hi = lo
    return np.arange(lo, hi + 1)


def _diag_row(stage, k, t1, t2, score, df_c, df_n, converged, error=""):
    return {"stage": stage, "k": int(k), "tilde1": t1, "tilde2": t2,
            "score": score, "df_linear": df_c, "df_additive": df_n,
            "converged": converged, "error": error}


def fit_unpenalized(data: Dataset, loss: LossSpec = LossSpec(), *,
                    k_grid=None, order: int = 4, placement: str = "uniform",
                    interval=None, seed: int = 0,
                    n_subsamples: int = 500) -> PlamFit:
    """Unpenalized fit with the basis dimension chosen on the ladder.

    Walks the dimension ladder with the dimension criterion on plain
    preliminary fits, stopping at the first value that fails to improve.
    """
    if k_grid is None:
        k_grid = default_k_grid(data.n)
    best = None
    best_score = np.inf
    prev = None
    for k in np.asarray(k_grid, dtype=int).ravel():
        try:
            fit = preliminary_fit(data, int(k), loss=loss, order=order,
                                  placement=placement, interval=interval,
                                  seed=seed, n_subsamples=n_subsamples)
            score = rbic_k(fit, data, loss)
        except (SplamError, np.linalg.LinAlgError):
            score, fit = np.inf, None
        if fit is not None and score < best_score:
            best, best_score = fit, score
        if prev is not None and np.isfinite(prev) and score >= prev and best is not None:
            break
        prev = score
    if best is None:
        raise NoConvergence("no usable dimension for the unpenalized fit")
    return best


def select(data: Dataset, tilde1_grid, tilde2_grid, *,
           loss: LossSpec = LossSpec(), spec: PenaltySpec = PenaltySpec("scad"),
           k_grid=None, order: int = 4, placement: str = "uniform",
           interval=None, seed: int = 0, n_subsamples: int = 500,
           opts: SolverOptions = SolverOptions(), adaptive: bool = True,
           diagnostics: list | None = None) -> PlamFit:
    """Penalized fit with data-driven penalty levels and basis dimension.

    At each dimension on the ladder a preliminary unpenalized fit provides
    the scale, the warm start, and the adaptive penalty weights; every pair
    from the two multiplier grids is then solved and scored, the best pair
    kept (ties go to fewer active components, then the earlier grid point).
    The ladder stops at the first dimension that fails to improve on the
    previous one.  Returns the winning fit; per-cell scores can be captured
    through ``diagnostics``.
    """
    t1_grid = np.asarray(tilde1_grid, dtype=float).ravel()
    t2_grid = np.asarray(tilde2_grid, dtype=float).ravel()
    if t1_grid.size == 0 or t2_grid.size == 0:
        raise ValueError("multiplier grids must be non-empty")
    if k_grid is None:
        k_grid = default_k_grid(data.n)
    k_grid = np.asarray(k_grid, dtype=int).ravel()

    best_fit = None
    best_score = np.inf
    prev_score = None

    for k in k_grid:
        score_k, fit_k = _evaluate_dimension(
            data, int(k), t1_grid, t2_grid, loss, spec, order, placement,
            interval, seed, n_subsamples, opts, adaptive, diagnostics)
        if fit_k is not None and score_k < best_score:
            best_fit = fit_k
            best_score = score_k
        if prev_score is not None and np.isfinite(prev_score) and score_k >= prev_score:
            if best_fit is not None:
                break
        prev_score = score_k

    if best_fit is None:
        raise NoConvergence("no usable fit on the basis dimension ladder")
    return best_fit


def _evaluate_dimension(data, k, t1_grid, t2_grid, loss, spec, order, placement,
                        interval, seed, n_subsamples, opts, adaptive,
                        diagnostics):
    try:
        bases = build_bases(data.X, k, order=order, placement=placement,
                            interval=interval)
        prelim = preliminary_fit(data, k, loss=loss, order=order,
                                 placement=placement, interval=interval,
                                 seed=seed, n_subsamples=n_subsamples,
                                 bases=bases)
    except (SplamError, np.linalg.LinAlgError) as exc:
        if diagnostics is not None:
            diagnostics.append(_diag_row("dimension", k, np.nan, np.nan,
                                         np.inf, 0, 0, False, str(exc)))
        return np.inf, None

    design = build_design(data, bases)
    norms = np.array([bases[j].block_norm(prelim.c_blocks[j])
                      for j in range(data.p)])

    best = None          # (score, df_total, fit)
    for t1 in t1_grid:
        for t2 in t2_grid:
            if adaptive:
                lam = adaptive_lambdas(float(t1), float(t2), prelim.beta, norms)
            else:
                lam = LambdaVector(np.full(data.q, float(t1)),
                                   np.full(data.p, float(t2)),
                                   tildes=(float(t1), float(t2)))
            try:
                fit = solve_penalized(data, bases, lam, spec, prelim,
                                      prelim.sigma, loss=loss, opts=opts,
                                      design=design)
            except (SplamError, np.linalg.LinAlgError) as exc:
                if diagnostics is not None:
                    diagnostics.append(_diag_row("penalty", k, float(t1),
                                                 float(t2), np.inf, 0, 0,
                                                 False, str(exc)))
                continue
            score = rbic_lambda(fit, data, loss, design=design)
            df_c, df_n = count_df(fit)
            if diagnostics is not None:
                diagnostics.append(_diag_row("penalty", k, float(t1), float(t2),
                                             score, df_c, df_n, fit.converged))
            key = (score, df_c + df_n)
            if best is None or key < (best[0], best[1]):
                best = (score, df_c + df_n, fit)

    if best is None:
        if diagnostics is not None:
            diagnostics.append(_diag_row("dimension", k, np.nan, np.nan,
                                         np.inf, 0, 0, False,
                                         "no penalty cell produced a fit"))
        return np.inf, None

    fit_k = best[2]
    score_k = rbic_k(fit_k, data, loss, design=design)
    if diagnostics is not None:
        t1w, t2w = fit_k.lambdas_used.tildes
        df_c, df_n = count_df(fit_k)
        diagnostics.append(_diag_row("dimension", k, t1w, t2w, score_k,
                                     df_c, df_n, fit_k.converged))
    return score_k, fit_k
