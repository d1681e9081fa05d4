"""Command line surface: fit a model from CSV, run the study, evaluate splits.

Configuration can come from a flat JSON file (--config) and from flags; a
flag given on the command line wins over the config file, which wins over the
built-in defaults.  Errors are reported as one JSON record on stderr and the
exit code states the failure class: 2 for usage problems, 3 for data and
schema problems, 4 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import (DegenerateSample, InvalidHyperparameter, InvalidOrder,
                     SchemaError, SplamError, ZeroMAD)
from .loss import LossSpec, robust_standardize
from .model import Dataset, PlamFit, eval_additive, load_dataset_csv, predict_many
from .penalty import PenaltySpec
from .selection import fit_unpenalized, select
from .simulation import (SimConfig, run_study, write_aggregates_csv,
                         write_rows_csv, write_table)

__all__ = ["main", "cmd_fit", "cmd_simulate", "cmd_evaluate"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class UsageError(ValueError):
    """Bad flag or config value."""


DEFAULTS = {
    "config": None,
    "input": None,
    "out_prefix": "splam",
    "response": None,
    "linear": "",
    "additive": "",
    "loss": "tukey",
    "c": 4.685,
    "penalty": "scad",
    "a": 3.7,
    "gamma": 3.0,
    "adaptive": True,
    "tilde1": "",
    "tilde2": "",
    "k_grid": "auto",
    "placement": "quantile",
    "standardize": False,
    "seed": 0,
    "threads": 1,
    "subsamples": 500,
    # simulate
    "n": 200,
    "reps": 100,
    "contamination": "c0",
    "method": "rob",
    # evaluate
    "holdout": 100,
    "splits": 50,
    "methods": "penalized-rob,penalized-ls,unpenalized-rob,unpenalized-ls",
}

_DATA_ERRORS = (SchemaError, ZeroMAD, DegenerateSample, OSError)


def _as_list(value, cast=str):
    """Accept a comma string or a JSON list; empty means 'not given'."""
    if value is None:
        return []
    if isinstance(value, (list, tuple, np.ndarray)):
        return [cast(v) for v in value]
    text = str(value).strip()
    if not text:
        return []
    return [cast(part.strip()) for part in text.split(",") if part.strip()]


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "1", "yes", "on"):
        return True
    if text in ("false", "0", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {value!r}")


def _merge_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    given = {k: v for k, v in vars(args).items() if v is not None}
    path = given.pop("config", None)
    if path is not None:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    given.pop("command", None)
    cfg.update(given)
    return cfg


def _loss_from(cfg: dict) -> LossSpec:
    family = str(cfg["loss"]).lower()
    if family not in ("tukey", "squared"):
        raise UsageError(f"unknown loss family {cfg['loss']!r}")
    return LossSpec(family, c=float(cfg["c"])) if family == "tukey" else LossSpec("squared")


def _penalty_from(cfg: dict) -> PenaltySpec | None:
    family = str(cfg["penalty"]).lower()
    if family == "none":
        return None
    if family not in ("scad", "mcp", "l1"):
        raise UsageError(f"penalty family {cfg['penalty']!r} is not supported here")
    try:
        return PenaltySpec(family, a=float(cfg["a"]), gamma=float(cfg["gamma"]))
    except (InvalidHyperparameter, InvalidOrder) as exc:
        raise UsageError(str(exc))


def _k_grid_from(cfg: dict):
    raw = cfg["k_grid"]
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "auto")):
        return None
    ks = _as_list(raw, int)
    if not ks or any(k < 2 for k in ks):
        raise UsageError("k_grid must be 'auto' or a list of integers >= 2")
    return ks


def _tilde_grids_from(cfg: dict):
    t1 = _as_list(cfg["tilde1"], float)
    t2 = _as_list(cfg["tilde2"], float)
    if not t1:
        t1 = [round(0.01 * i, 10) for i in range(11)]        # 0, 0.01, ..., 0.1
    if not t2:
        t2 = [round(0.1 * i, 10) for i in range(21)]         # 0, 0.1, ..., 2.0
    if any(v < 0 for v in t1 + t2):
        raise UsageError("penalty multipliers must be nonnegative")
    return t1, t2


def _columns_from(cfg: dict):
    response = cfg["response"]
    if not response:
        raise UsageError("a response column is required")
    linear = _as_list(cfg["linear"])
    additive = _as_list(cfg["additive"])
    if not linear and not additive:
        raise UsageError("at least one covariate column is required")
    all_names = [response] + linear + additive
    if len(set(all_names)) != len(all_names):
        raise UsageError("response, linear, and additive columns must be disjoint")
    return response, linear, additive


def _is_binary(col: np.ndarray) -> bool:
    return np.unique(col).size == 2


def _standardize_train(y, Z, X, names_linear, names_additive, response):
    """Center and scale all non-binary columns by train median and MAD.

    Returns transformed arrays and the per-column constants; binary columns
    (exactly two distinct values) pass through untouched.
    """
    constants = {}
    y_out, center, scale = robust_standardize(y)
    constants[response] = {"center": float(center), "scale": float(scale)}
    Z_out = np.array(Z, dtype=float, copy=True)
    for i, name in enumerate(names_linear):
        if _is_binary(Z[:, i]):
            continue
        Z_out[:, i], center, scale = robust_standardize(Z[:, i])
        constants[name] = {"center": float(center), "scale": float(scale)}
    X_out = np.array(X, dtype=float, copy=True)
    for j, name in enumerate(names_additive):
        if _is_binary(X[:, j]):
            continue
        X_out[:, j], center, scale = robust_standardize(X[:, j])
        constants[name] = {"center": float(center), "scale": float(scale)}
    return y_out, Z_out, X_out, constants


def _apply_constants(arr: np.ndarray, names, constants) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    for i, name in enumerate(names):
        c = constants.get(name)
        if c is not None:
            out[:, i] = (out[:, i] - c["center"]) / c["scale"]
    return out


def _fit_one(data: Dataset, cfg: dict, loss: LossSpec, spec: PenaltySpec | None,
             seed: int) -> PlamFit:
    k_grid = _k_grid_from(cfg)
    placement = str(cfg["placement"]).lower()
    if placement not in ("uniform", "quantile"):
        raise UsageError(f"unknown knot placement {cfg['placement']!r}")
    if spec is None:
        return fit_unpenalized(data, loss, k_grid=k_grid, placement=placement,
                               seed=seed, n_subsamples=int(cfg["subsamples"]))
    t1, t2 = _tilde_grids_from(cfg)
    return select(data, t1, t2, loss=loss, spec=spec, k_grid=k_grid,
                  placement=placement, seed=seed,
                  n_subsamples=int(cfg["subsamples"]),
                  adaptive=_as_bool(cfg["adaptive"]))


def _fit_report(fit: PlamFit, names, constants, grid_points: int = 200) -> dict:
    response, linear, additive = names
    curves = []
    for j in range(fit.p):
        lo, hi = fit.bases[j].interval
        grid = np.linspace(lo, hi, grid_points)
        curves.append({
            "column": additive[j],
            "active": bool(fit.active_additive[j]),
            "x": [float(v) for v in grid],
            "values": [float(v) for v in eval_additive(fit, j, grid)],
        })
    tildes = fit.lambdas_used.tildes if fit.lambdas_used is not None else None
    return {
        "response": response,
        "mu": float(fit.mu),
        "linear": [
            {"column": linear[s], "coefficient": float(fit.beta[s]),
             "active": bool(fit.active_linear[s])}
            for s in range(fit.q)
        ],
        "sigma": float(fit.sigma),
        "k_used": int(fit.k_used[0]) if fit.k_used.size else None,
        "tilde1": None if tildes is None else float(tildes[0]),
        "tilde2": None if tildes is None else float(tildes[1]),
        "converged": bool(fit.converged),
        "standardization": constants,
        "curves": curves,
    }


def cmd_fit(cfg: dict) -> int:
    """Fit one model from a CSV file; write a JSON report and residuals."""
    if not cfg["input"]:
        raise UsageError("an input CSV is required")
    response, linear, additive = _columns_from(cfg)
    data = load_dataset_csv(cfg["input"], response, linear, additive)
    constants = {}
    if _as_bool(cfg["standardize"]):
        y, Z, X, constants = _standardize_train(
            data.y, data.Z, data.X, linear, additive, response)
        data = Dataset(y, Z, X)
    loss = _loss_from(cfg)
    spec = _penalty_from(cfg)
    fit = _fit_one(data, cfg, loss, spec, int(cfg["seed"]))

    report = _fit_report(fit, (response, linear, additive), constants)
    prefix = str(cfg["out_prefix"])
    with open(f"{prefix}_fit.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    fitted = predict_many(fit, data.Z, data.X)
    rows = [{"index": i, "response": data.y[i], "fitted": fitted[i],
             "residual": data.y[i] - fitted[i]} for i in range(data.n)]
    write_table(f"{prefix}_residuals.csv",
                ["index", "response", "fitted", "residual"], rows)
    return EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    """Run one study cell; write per-replication and aggregate CSVs."""
    method_key = str(cfg["method"]).lower()
    method_map = {"rob": ("robust",), "robust": ("robust",), "ls": ("ls",),
                  "both": ("robust", "ls")}
    if method_key not in method_map:
        raise UsageError(f"unknown method {cfg['method']!r}")
    methods = method_map[method_key]
    try:
        sim_cfg = SimConfig(n=int(cfg["n"]), contamination=str(cfg["contamination"]),
                            replications=int(cfg["reps"]), seed=int(cfg["seed"]))
    except ValueError as exc:
        raise UsageError(str(exc))
    t1 = _as_list(cfg["tilde1"], float)
    t2 = _as_list(cfg["tilde2"], float)
    grids = None
    if t1 and t2:
        grids = {m: (t1, t2) for m in methods}
    elif t1 or t2:
        raise UsageError("give both tilde1 and tilde2, or neither")

    result = run_study(sim_cfg, methods=methods, grids=grids,
                       k_grid=_k_grid_from(cfg), threads=int(cfg["threads"]),
                       n_subsamples=int(cfg["subsamples"]))
    prefix = str(cfg["out_prefix"])
    write_rows_csv(result.rows, f"{prefix}_replications.csv")
    write_aggregates_csv(result.aggregates, f"{prefix}_aggregate.csv")
    total = len(result.rows)
    ok = sum(1 for r in result.rows if r["status"] == "ok")
    return EXIT_OK if ok >= 0.9 * total else EXIT_NUMERIC


EVAL_METHODS = ("penalized-rob", "penalized-ls", "unpenalized-rob",
                "unpenalized-ls")


def _loss_for_eval(method: str, c: float) -> LossSpec:
    return LossSpec("tukey", c=c) if method.endswith("rob") else LossSpec("squared")


def cmd_evaluate(cfg: dict) -> int:
    """Repeated train/holdout prediction comparison; write split and summary CSVs."""
    if not cfg["input"]:
        raise UsageError("an input CSV is required")
    response, linear, additive = _columns_from(cfg)
    methods = [m.strip().lower() for m in _as_list(cfg["methods"])]
    for m in methods:
        if m not in EVAL_METHODS:
            raise UsageError(f"unknown evaluation method {m!r}")
    if not methods:
        raise UsageError("at least one evaluation method is required")
    data = load_dataset_csv(cfg["input"], response, linear, additive)
    holdout = int(cfg["holdout"])
    splits = int(cfg["splits"])
    if holdout < 1 or holdout >= data.n:
        raise UsageError("holdout size must be positive and smaller than the sample")
    if splits < 1:
        raise UsageError("at least one split is required")
    standardize = _as_bool(cfg["standardize"])
    seed = int(cfg["seed"])
    spec = _penalty_from(cfg)
    if spec is None:
        raise UsageError("evaluation of penalized methods needs a penalty family")

    rows = []
    for split in range(splits):
        rng = np.random.default_rng(np.random.SeedSequence((seed, split)))
        perm = rng.permutation(data.n)
        test_idx, train_idx = perm[:holdout], perm[holdout:]
        y_tr, Z_tr, X_tr = data.y[train_idx], data.Z[train_idx], data.X[train_idx]
        y_te, Z_te, X_te = data.y[test_idx], data.Z[test_idx], data.X[test_idx]
        constants = {}
        if standardize:
            y_tr, Z_tr, X_tr, constants = _standardize_train(
                y_tr, Z_tr, X_tr, linear, additive, response)
            resp_c = constants[response]
            y_te = (y_te - resp_c["center"]) / resp_c["scale"]
            Z_te = _apply_constants(Z_te, linear, constants)
            X_te = _apply_constants(X_te, additive, constants)
        train = Dataset(y_tr, Z_tr, X_tr)
        for method in methods:
            loss = _loss_for_eval(method, float(cfg["c"]))
            row = {"split": split, "method": method, "mape": np.nan,
                   "size": np.nan, "k_used": np.nan, "status": "ok"}
            try:
                if method.startswith("penalized"):
                    fit = _fit_one(train, cfg, loss, spec, seed=seed * 1009 + split)
                else:
                    fit = _fit_one(train, cfg, loss, None, seed=seed * 1009 + split)
                pred = predict_many(fit, Z_te, X_te)
                row["mape"] = float(np.median(np.abs(y_te - pred)))
                row["size"] = int(np.sum(fit.active_linear) + np.sum(fit.active_additive))
                row["k_used"] = int(fit.k_used[0]) if fit.k_used.size else 0
            except (SplamError, np.linalg.LinAlgError) as exc:
                row["status"] = f"failed: {exc}"
            rows.append(row)

    prefix = str(cfg["out_prefix"])
    write_table(f"{prefix}_splits.csv",
                ["split", "method", "mape", "size", "k_used", "status"], rows)
    summary = []
    for method in methods:
        ok = [r for r in rows if r["method"] == method and r["status"] == "ok"]
        mapes = np.array([r["mape"] for r in ok], dtype=float)
        sizes = np.array([r["size"] for r in ok], dtype=float)
        summary.append({
            "method": method,
            "splits": splits,
            "failed": splits - len(ok),
            "mean_mape": float(np.mean(mapes)) if mapes.size else np.nan,
            "sd_mape": float(np.std(mapes, ddof=1)) if mapes.size > 1 else np.nan,
            "av_size": float(np.mean(sizes)) if sizes.size else np.nan,
        })
    write_table(f"{prefix}_summary.csv",
                ["method", "splits", "failed", "mean_mape", "sd_mape", "av_size"],
                summary)
    total = len(rows)
    ok_count = sum(1 for r in rows if r["status"] == "ok")
    return EXIT_OK if ok_count >= 0.9 * total else EXIT_NUMERIC


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", help="flat JSON config file")
    sub.add_argument("--out-prefix", dest="out_prefix",
                     help="prefix for all output files")
    sub.add_argument("--loss", help="loss family: tukey or squared")
    sub.add_argument("--c", type=float, help="bounded loss tuning constant")
    sub.add_argument("--penalty", help="penalty family: scad, mcp, l1, or none")
    sub.add_argument("--a", type=float, help="scad shape parameter")
    sub.add_argument("--gamma", type=float, help="mcp shape parameter")
    sub.add_argument("--adaptive", action=argparse.BooleanOptionalAction,
                     default=None, help="scale penalties by the preliminary fit")
    sub.add_argument("--tilde1", help="comma list of linear penalty multipliers")
    sub.add_argument("--tilde2", help="comma list of additive penalty multipliers")
    sub.add_argument("--k-grid", dest="k_grid",
                     help="'auto' or a comma list of basis dimensions")
    sub.add_argument("--placement", help="knot placement: quantile or uniform")
    sub.add_argument("--seed", type=int, help="random seed")
    sub.add_argument("--threads", type=int, help="worker process count")
    sub.add_argument("--subsamples", type=int,
                     help="subsample count for the preliminary fit")


def _add_data_args(sub: argparse.ArgumentParser):
    sub.add_argument("--input", help="input CSV path")
    sub.add_argument("--response", help="response column name")
    sub.add_argument("--linear", help="comma list of linear covariate columns")
    sub.add_argument("--additive", help="comma list of additive covariate columns")
    sub.add_argument("--standardize", action=argparse.BooleanOptionalAction,
                     default=None,
                     help="center and scale non-binary columns by median and mad")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splam",
        description="Sparse partially linear additive models with a bounded loss")
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", help="fit one model from a CSV file")
    _add_common(fit)
    _add_data_args(fit)

    sim = commands.add_parser("simulate", help="run one Monte Carlo study cell")
    _add_common(sim)
    sim.add_argument("--n", type=int, help="sample size")
    sim.add_argument("--reps", type=int, help="replication count")
    sim.add_argument("--contamination", help="error scheme c0..c7")
    sim.add_argument("--method", help="rob, ls, or both")

    ev = commands.add_parser("evaluate",
                             help="repeated train/holdout prediction comparison")
    _add_common(ev)
    _add_data_args(ev)
    ev.add_argument("--holdout", type=int, help="holdout size per split")
    ev.add_argument("--splits", type=int, help="number of random splits")
    ev.add_argument("--methods", help="comma list from: " + ", ".join(EVAL_METHODS))
    return parser


def _error_record(exc: Exception, code: int) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc),
                       "exit_code": code})


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"fit": cmd_fit, "simulate": cmd_simulate, "evaluate": cmd_evaluate}
    try:
        cfg = _merge_config(args)
        return handlers[args.command](cfg)
    except UsageError as exc:
        print(_error_record(exc, EXIT_USAGE), file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(_error_record(exc, EXIT_DATA), file=sys.stderr)
        return EXIT_DATA
    except (SplamError, np.linalg.LinAlgError) as exc:
        print(_error_record(exc, EXIT_NUMERIC), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
