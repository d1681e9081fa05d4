"""Monte Carlo study: contaminated data generation, error metrics, aggregation.

The study design has ten linear covariates with an autoregressive correlation
structure and ten uniform additive covariates, four active components in each
part, and eight error schemes ranging from clean gaussian noise to heavy
tails, scale and location mixtures, and replaced covariate rows.  Each
replication owns an independent random substream so any single replication
can be reproduced in isolation and results do not depend on scheduling.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from math import ceil

import numpy as np
from scipy.stats import trim_mean
from threadpoolctl import threadpool_limits

from .errors import DimensionMismatch, SplamError
from .loss import LossSpec
from .model import Dataset, PlamFit, build_bases, eval_additive
from .selection import default_k_grid, fit_unpenalized, select

__all__ = [
    "SimConfig", "StudyResult", "z_covariance", "true_eta", "gen_sample",
    "selection_metrics", "gmse", "rase", "oracle_fit", "paper_lambda_grid",
    "run_study", "write_table", "write_rows_csv", "write_aggregates_csv",
]

SCENARIOS = ("c0", "c1", "c2", "c3", "c4", "c5", "c6", "c7")
METHODS = ("robust", "ls")
N_LINEAR = 10
N_ADDITIVE = 10
TRUE_BETA = np.array([3.0, 1.5, 2.0, -1.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
TRUE_LINEAR_SUPPORT = TRUE_BETA != 0.0
TRUE_ADDITIVE_SUPPORT = np.array([True] * 4 + [False] * 6)


@dataclass(frozen=True)
class SimConfig:
    """Settings of one study cell: sample size, error scheme, replications."""

    n: int = 200
    contamination: str = "c0"
    replications: int = 100
    seed: int = 0
    beta_true: tuple = tuple(TRUE_BETA)
    sigma_true: float = 1.0
    mu_true: float = 0.0
    ar_rho: float = 0.5

    def __post_init__(self):
        if self.contamination.lower() not in SCENARIOS:
            raise ValueError(f"unknown contamination scheme {self.contamination!r}")
        if self.replications < 1 or self.n < 1:
            raise ValueError("replications and n must be at least 1")
        object.__setattr__(self, "contamination", self.contamination.lower())


def z_covariance(rho: float = 0.5, q: int = N_LINEAR) -> np.ndarray:
    """Covariance with entries rho^|i-j| and unit diagonal."""
    idx = np.arange(q)
    return rho ** np.abs(np.subtract.outer(idx, idx)).astype(float)


def true_eta(j: int, x):
    """Value of the j-th true additive component (zero-based index).

    The first four components are a centered line, parabola, cubic, and sine
    wave, each integrating to zero over [0, 1]; the rest are identically zero.
    """
    x = np.asarray(x, dtype=float)
    if j == 0:
        out = 5.0 * x - 2.5
    elif j == 1:
        out = 3.0 * (2.0 * x - 1.0) ** 2 - 1.0
    elif j == 2:
        out = 60.0 * x**3 - 90.0 * x**2 + 30.0 * x
    elif j == 3:
        out = 2.0 * np.sin(np.pi * x) - 4.0 / np.pi
    else:
        out = np.zeros_like(x)
    return out if out.ndim else float(out)


def _additive_signal(X: np.ndarray) -> np.ndarray:
    total = np.zeros(X.shape[0])
    for j in range(min(4, X.shape[1])):
        total += true_eta(j, X[:, j])
    return total


def gen_sample(cfg: SimConfig, rep: int) -> Dataset:
    """One replication's dataset, from its own random substream.

    The error schemes: c0 clean gaussian; c1 heavy tails (t with 3 df); c2
    and c3 scale mixtures; c4 and c5 location mixtures; c6 and c7 replace a
    random 5% or 10% of the linear covariate rows by the point (20, ..., 20)
    after the response has been built from the clean rows.
    """
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, rep)))
    n = cfg.n
    beta = np.asarray(cfg.beta_true, dtype=float)
    q = beta.size
    cov = z_covariance(cfg.ar_rho, q)
    L = np.linalg.cholesky(cov)

    G = rng.standard_normal((n, q))
    Z = G @ L.T
    X = rng.uniform(size=(n, N_ADDITIVE))

    scheme = cfg.contamination
    if scheme == "c1":
        z = rng.standard_normal(n)
        w = rng.chisquare(3, n)
        u = z / np.sqrt(w / 3.0)
    elif scheme == "c2":
        z = rng.standard_normal(n)
        pick = rng.random(n) < 0.10
        u = z * np.where(pick, 5.0, 1.0)
    elif scheme == "c3":
        z = rng.standard_normal(n)
        pick = rng.random(n) < 0.05
        u = z * np.where(pick, 10.0, 1.0)
    elif scheme == "c4":
        z = rng.standard_normal(n)
        pick = rng.random(n) < 0.05
        u = z + np.where(pick, 15.0, 0.0)
    elif scheme == "c5":
        z = rng.standard_normal(n)
        pick = rng.random(n) < 0.15
        u = z + np.where(pick, 15.0, 0.0)
    else:
        u = rng.standard_normal(n)

    y = cfg.mu_true + Z @ beta + _additive_signal(X) + cfg.sigma_true * u

    if scheme in ("c6", "c7"):
        frac = 0.05 if scheme == "c6" else 0.10
        rows = rng.choice(n, size=ceil(frac * n), replace=False)
        Z = Z.copy()
        Z[rows] = 20.0
    return Dataset(y, Z, X)


def selection_metrics(fit: PlamFit) -> dict:
    """Support recovery counts against the known truth.

    For each part: the number of true zeros estimated as zero, the number of
    true nonzeros estimated as zero, and an exact-support indicator.
    """
    lin_act = np.asarray(fit.active_linear, dtype=bool)
    add_act = np.asarray(fit.active_additive, dtype=bool)
    if lin_act.size != N_LINEAR or add_act.size != N_ADDITIVE:
        raise DimensionMismatch("fit does not match the study layout")
    c_lin = int(np.sum(~lin_act & ~TRUE_LINEAR_SUPPORT))
    ic_lin = int(np.sum(~lin_act & TRUE_LINEAR_SUPPORT))
    cf_lin = int(np.array_equal(lin_act, TRUE_LINEAR_SUPPORT))
    c_add = int(np.sum(~add_act & ~TRUE_ADDITIVE_SUPPORT))
    ic_add = int(np.sum(~add_act & TRUE_ADDITIVE_SUPPORT))
    cf_add = int(np.array_equal(add_act, TRUE_ADDITIVE_SUPPORT))
    return {
        "c_linear": c_lin, "ic_linear": ic_lin, "cf_linear": cf_lin,
        "c_additive": c_add, "ic_additive": ic_add, "cf_additive": cf_add,
        "c_complete": c_lin + c_add, "ic_complete": ic_lin + ic_add,
        "cf_complete": cf_lin * cf_add,
    }


def gmse(beta_hat: np.ndarray, beta_true: np.ndarray, sigma_z: np.ndarray) -> float:
    """Quadratic form of the coefficient error in the covariate covariance."""
    bh = np.asarray(beta_hat, dtype=float)
    bt = np.asarray(beta_true, dtype=float)
    sigma_z = np.asarray(sigma_z, dtype=float)
    if bh.shape != bt.shape or bh.ndim != 1 or sigma_z.shape != (bh.size, bh.size):
        raise DimensionMismatch("coefficient vectors and covariance disagree")
    d = bh - bt
    return float(d @ sigma_z @ d)


def rase(fit: PlamFit, m: int = 1000) -> float:
    """Root average squared error of all fitted curves on an even grid."""
    grid = np.linspace(0.0, 1.0, m)
    total = 0.0
    for j in range(fit.p):
        diff = eval_additive(fit, j, grid, clamp=True) - true_eta(j, grid)
        total += float(np.sum(diff**2))
    return float(np.sqrt(total / m))


def oracle_fit(data: Dataset, cfg: SimConfig, loss: LossSpec = LossSpec(),
               seed: int = 0, n_subsamples: int = 500) -> PlamFit:
    """Unpenalized fit on the true support, embedded in the full layout.

    Only the four active linear covariates and four active additive
    covariates enter the fit; everything else is exactly zero with the true
    activity pattern on the flags.
    """
    lin_idx = np.flatnonzero(TRUE_LINEAR_SUPPORT)
    add_idx = np.flatnonzero(TRUE_ADDITIVE_SUPPORT)
    sub = Dataset(data.y, data.Z[:, lin_idx], data.X[:, add_idx])
    fit = fit_unpenalized(sub, loss, k_grid=default_k_grid(data.n),
                          interval=(0.0, 1.0), seed=seed,
                          n_subsamples=n_subsamples)

    k = int(fit.k_used[0])
    bases = build_bases(data.X, k, interval=(0.0, 1.0))
    beta = np.zeros(N_LINEAR)
    beta[lin_idx] = fit.beta
    blocks = [np.zeros(b.dim) for b in bases]
    for pos, j in enumerate(add_idx):
        blocks[j] = fit.c_blocks[pos].copy()
    return PlamFit(
        mu=fit.mu, beta=beta, c_blocks=blocks, sigma=fit.sigma, bases=bases,
        active_linear=TRUE_LINEAR_SUPPORT.copy(),
        active_additive=TRUE_ADDITIVE_SUPPORT.copy(),
        k_used=np.full(N_ADDITIVE, k), converged=fit.converged,
        iterations=fit.iterations)


def paper_lambda_grid(n: int, method: str) -> tuple[np.ndarray, np.ndarray]:
    """Default multiplier grids for the study, by sample size and method."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if n >= 400:
        if method == "robust":
            t1 = np.round(np.arange(3, 8) * 0.05, 10)       # 0.15 .. 0.35
            t2 = np.round(np.arange(1, 6) * 0.05, 10)       # 0.05 .. 0.25
        else:
            t1 = np.round(np.arange(1, 8) * 0.05, 10)       # 0.05 .. 0.35
            t2 = np.round(np.arange(1, 9) * 0.05, 10)       # 0.05 .. 0.40
    else:
        t1 = np.round(np.arange(1, 8) * 0.05, 10)           # 0.05 .. 0.35
        t2 = np.round(np.arange(4, 11) * 0.05, 10)          # 0.20 .. 0.50
    return t1, t2


ROW_COLUMNS = [
    "rep", "method", "contamination", "n", "k_used", "tilde1", "tilde2",
    "c_linear", "ic_linear", "cf_linear", "c_additive", "ic_additive",
    "cf_additive", "c_complete", "ic_complete", "cf_complete",
    "gmse", "rase", "oracle_gmse", "oracle_rase", "converged", "status",
]

_METRIC_KEYS = ["c_linear", "ic_linear", "cf_linear", "c_additive",
                "ic_additive", "cf_additive", "c_complete", "ic_complete",
                "cf_complete", "gmse", "rase", "oracle_gmse", "oracle_rase"]


def _seed_for(cfg: SimConfig, rep: int, tag: int) -> int:
    return int(np.random.SeedSequence((cfg.seed, rep, tag)).generate_state(1)[0])


def _run_replication(cfg: SimConfig, rep: int, method: str, t1_grid, t2_grid,
                     k_grid, n_subsamples: int, with_oracle: bool = True) -> dict:
    loss = LossSpec("squared") if method == "ls" else LossSpec()
    row = {"rep": rep, "method": method, "contamination": cfg.contamination,
           "n": cfg.n, "k_used": np.nan, "tilde1": np.nan, "tilde2": np.nan,
           "converged": False, "status": "ok"}
    for key in _METRIC_KEYS:
        row[key] = np.nan
    with threadpool_limits(limits=1):
        data = gen_sample(cfg, rep)
        cov = z_covariance(cfg.ar_rho, len(cfg.beta_true))
        try:
            fit = select(data, t1_grid, t2_grid, loss=loss, k_grid=k_grid,
                         interval=(0.0, 1.0), seed=_seed_for(cfg, rep, 1),
                         n_subsamples=n_subsamples)
            row.update(selection_metrics(fit))
            row["gmse"] = gmse(fit.beta, np.asarray(cfg.beta_true), cov)
            row["rase"] = rase(fit)
            row["k_used"] = int(fit.k_used[0])
            row["tilde1"], row["tilde2"] = fit.lambdas_used.tildes
            row["converged"] = bool(fit.converged)
        except (SplamError, np.linalg.LinAlgError) as exc:
            row["status"] = f"fit failed: {exc}"
            return row
        if not with_oracle:
            return row
        try:
            orc = oracle_fit(data, cfg, loss=loss,
                             seed=_seed_for(cfg, rep, 2),
                             n_subsamples=n_subsamples)
            row["oracle_gmse"] = gmse(orc.beta, np.asarray(cfg.beta_true), cov)
            row["oracle_rase"] = rase(orc)
        except (SplamError, np.linalg.LinAlgError) as exc:
            row["status"] = f"oracle failed: {exc}"
    return row


@dataclass
class StudyResult:
    """Per-replication rows and per-method aggregates of one study cell."""

    config: SimConfig
    rows: list
    aggregates: list


def _aggregate(cfg: SimConfig, method: str, rows: list) -> dict:
    ok = [r for r in rows if r["status"] == "ok"]
    agg = {"method": method, "contamination": cfg.contamination, "n": cfg.n,
           "replications": len(rows), "failed": len(rows) - len(ok)}
    for key in _METRIC_KEYS:
        vals = np.array([r[key] for r in ok], dtype=float)
        agg[f"mean_{key}"] = float(np.mean(vals)) if vals.size else np.nan
        agg[f"sd_{key}"] = float(np.std(vals, ddof=1)) if vals.size > 1 else np.nan
    for key in ("gmse", "oracle_gmse"):
        vals = np.array([r[key] for r in ok], dtype=float)
        vals = vals[np.isfinite(vals)]
        agg[f"trimmed_{key}"] = float(trim_mean(vals, 0.1)) if vals.size else np.nan
    return agg


def run_study(cfg: SimConfig, methods=METHODS, grids=None, k_grid=None,
              threads: int = 1, n_subsamples: int = 500,
              with_oracle: bool = True) -> StudyResult:
    """All replications of one study cell for the requested methods.

    ``grids`` maps a method name to its pair of multiplier grids; methods not
    in the map get the defaults for the sample size.  With ``threads`` above
    one the replications run in separate processes; results are identical to
    a serial run because every replication owns its substream and rows are
    ordered by method and replication before aggregation.
    """
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    grids = dict(grids or {})
    tasks = []
    for method in methods:
        t1, t2 = grids.get(method) or paper_lambda_grid(cfg.n, method)
        for rep in range(cfg.replications):
            tasks.append((cfg, rep, method, np.asarray(t1, dtype=float),
                          np.asarray(t2, dtype=float), k_grid, n_subsamples,
                          with_oracle))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_replication_star, tasks, chunksize=1))
    else:
        rows = [_run_replication(*t) for t in tasks]

    order = {m: i for i, m in enumerate(methods)}
    rows.sort(key=lambda r: (order[r["method"]], r["rep"]))
    aggregates = [_aggregate(cfg, m, [r for r in rows if r["method"] == m])
                  for m in methods]
    return StudyResult(config=cfg, rows=rows, aggregates=aggregates)


def _run_replication_star(args):
    return _run_replication(*args)


def _format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_table(path: str, columns: list, rows: list):
    """Write dict rows as CSV with a fixed column order and stable formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for r in rows:
            writer.writerow([_format_cell(r[c]) for c in columns])


def write_rows_csv(rows: list, path: str):
    """Per-replication results, one row per (method, replication)."""
    write_table(path, ROW_COLUMNS, rows)


def write_aggregates_csv(aggregates: list, path: str):
    """Study-level summary, one row per method."""
    if not aggregates:
        raise ValueError("nothing to write")
    write_table(path, list(aggregates[0].keys()), aggregates)
