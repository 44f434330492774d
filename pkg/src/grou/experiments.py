"""Config-driven Monte Carlo experiments and the real-data fitting pipeline.

Every runner consumes a validated :class:`~grou.config.ExperimentConfig` and
returns a :class:`ResultTable`: a data frame plus metadata carrying the
config hash, seed, runtime and excluded-path accounting.  Paths use
independent random streams seeded by ``(master_seed, path_index)`` and are
reduced in path-index order, so the output bytes do not depend on the worker
count.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy import stats

from .config import ExperimentConfig
from .errors import ConfigError, MissingGraph, NumericalError, ParseError
from .estimators import FilterConfig, ls_estimator, psi_mle, rem, theta_mle
from .graphs import unvec
from .lasso import LassoConfig, fit_adaptive_lasso
from .noise import LevySpec
from .recovery import decompose_noise, default_eta, fit_ghyp, preprocess, recover_increments
from .simulate import ObservationGrid, SampledPath, simulate_path

__all__ = [
    "ResultTable",
    "path_rng",
    "run_experiment",
    "run_bootstrap",
    "run_normality",
    "run_topology",
    "run_sigma_sweep",
    "run_beta_sweep",
    "run_mesh_sweep",
    "run_fit_data",
]


@dataclass
class ResultTable:
    """Experiment output: a frame of rows plus reproducibility metadata."""

    frame: pd.DataFrame
    metadata: dict = field(default_factory=dict)

    def save(self, outdir, name: str) -> None:
        """Write ``<name>.csv``, a long-format twin and ``<name>.meta.json``.

        The config hash is embedded as a column so every table is traceable
        to the exact configuration that produced it; runtime lives only in
        the metadata file so the CSVs stay byte-identical across reruns.
        """
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        frame = self.frame.copy()
        frame["config_hash"] = self.metadata.get("config_hash", "")
        frame.to_csv(outdir / f"{name}.csv", index=False)
        self.long_format().to_csv(outdir / f"{name}_long.csv", index=False)
        with open(outdir / f"{name}.meta.json", "w") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True, default=str)

    def long_format(self) -> pd.DataFrame:
        """Plot-ready (variable, value, group) layout."""
        id_col = self.metadata.get("id_column")
        frame = self.frame
        if id_col is None or id_col not in frame.columns:
            frame = frame.reset_index().rename(columns={"index": "row"})
            id_col = "row"
        value_cols = [c for c in frame.columns if c != id_col and pd.api.types.is_numeric_dtype(frame[c])]
        long = frame.melt(id_vars=[id_col], value_vars=value_cols, var_name="variable", value_name="value")
        return long.rename(columns={id_col: "group"})[["variable", "value", "group"]]


def path_rng(master_seed: int, path_index: int) -> np.random.Generator:
    """Independent stream per Monte Carlo path."""
    return np.random.default_rng([master_seed, path_index])


def _n_threads(threads: Optional[int]) -> int:
    if threads is not None:
        return max(1, threads)
    env = os.environ.get("GROU_THREADS")
    return max(1, int(env)) if env else 1


def _map_paths(worker: Callable, n_paths: int, threads: Optional[int]):
    """Run ``worker(path_index)`` for every path, preserving index order."""
    n_workers = _n_threads(threads)
    if n_workers <= 1:
        return [worker(i) for i in range(n_paths)]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(worker, range(n_paths), chunksize=max(1, n_paths // (4 * n_workers))))


def _base_metadata(cfg: ExperimentConfig, started: float, n_paths: int, n_excluded: int) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "experiment": cfg.experiment,
        "master_seed": cfg.master_seed,
        "runtime_seconds": round(time.time() - started, 3),
        "n_paths": n_paths,
        "n_succeeded": n_paths - n_excluded,
        "n_excluded": n_excluded,
    }


def _make_grid(cfg: ExperimentConfig, rng: np.random.Generator, n_obs=None, delta=None) -> ObservationGrid:
    n_obs = n_obs if n_obs is not None else cfg.n_obs
    delta = delta if delta is not None else cfg.delta
    if cfg.grid_kind == "jitter":
        return ObservationGrid.jittered(n_obs, delta, rng, jitter=cfg.jitter)
    return ObservationGrid.uniform(n_obs, delta)


# --- per-path workers (top level so process pools can pickle them) ---------


def _simulate_for(cfg: ExperimentConfig, index: int, multiplier: Optional[float] = None) -> SampledPath:
    an = cfg.graph()
    q = cfg.true_q(an)
    spec = cfg.noise()
    if multiplier is not None:
        spec = spec.with_multiplier(multiplier * spec.multiplier)
    rng = path_rng(cfg.master_seed, index)
    grid = _make_grid(cfg, rng)
    return simulate_path(q, spec, grid, rng, refinement=cfg.refinement)


def _bootstrap_worker(cfg_raw: dict, ladder: tuple, index: int):
    cfg = ExperimentConfig.from_dict(cfg_raw)
    an = cfg.graph()
    f = FilterConfig(cfg.beta)
    try:
        path = _simulate_for(cfg, index)
        out = []
        for n in ladder:
            report = theta_mle(path.prefix(n), an, f, report_sigma=False)
            out.append(report.point)
        return np.asarray(out)
    except NumericalError:
        return None


def _normality_worker(cfg_raw: dict, index: int):
    cfg = ExperimentConfig.from_dict(cfg_raw)
    an = cfg.graph()
    f = FilterConfig(cfg.beta)
    try:
        path = _simulate_for(cfg, index)
        report = theta_mle(path, an, f, report_sigma=True)
        return report.point, report.acov, report.diagnostics["T_N"]
    except NumericalError:
        return None


def _sigma_sweep_worker(cfg_raw: dict, multiplier: float, index: int):
    cfg = ExperimentConfig.from_dict(cfg_raw)
    an = cfg.graph()
    q_true = cfg.true_q(an)
    f = FilterConfig(cfg.beta)
    try:
        path = _simulate_for(cfg, index, multiplier=multiplier)
        mle = theta_mle(path, an, f, report_sigma=False)
        q_mle = unvec(np.asarray(psi_point_from_theta(mle.point, an)))
        ls = ls_estimator(path)
        delta = cfg.delta
        return rem(q_mle, q_true, delta), rem(ls.point, q_true, delta)
    except NumericalError:
        return None


def psi_point_from_theta(theta: np.ndarray, an) -> np.ndarray:
    """vec of the dynamics matrix implied by a graph-level estimate.

    Near-breakdown estimates may fall outside the admissible region, and the
    error metric still needs the assembled matrix, so no validation here.
    """
    from .graphs import vec

    t1, t2 = float(theta[0]), float(theta[1])
    return vec(t2 * np.eye(an.d) + t1 * an.entries)


def _beta_sweep_worker(cfg_raw: dict, betas: tuple, index: int):
    cfg = ExperimentConfig.from_dict(cfg_raw)
    an = cfg.graph()
    try:
        path = _simulate_for(cfg, index)
        return np.asarray(
            [theta_mle(path, an, FilterConfig(float(b)), report_sigma=False).point for b in betas]
        )
    except NumericalError:
        return None


def _mesh_sweep_worker(cfg_raw: dict, meshes: tuple, index: int):
    cfg = ExperimentConfig.from_dict(cfg_raw)
    an = cfg.graph()
    q_true = cfg.true_q(an)
    f = FilterConfig(cfg.beta)
    try:
        path = _simulate_for(cfg, index)
        out = []
        for delta_fit in meshes:
            refit = SampledPath(
                grid=ObservationGrid(np.arange(path.n) * float(delta_fit)),
                values=path.values,
            )
            mle = theta_mle(refit, an, f, report_sigma=False)
            q_mle = unvec(psi_point_from_theta(mle.point, an))
            ls = ls_estimator(refit)
            out.append((rem(q_mle, q_true, float(delta_fit)), rem(ls.point, q_true, float(delta_fit))))
        return np.asarray(out)
    except NumericalError:
        return None


def _topology_worker(cfg_raw: dict, kind: str, index: int):
    raw = dict(cfg_raw)
    raw["graph"] = {"kind": kind}
    cfg_topo = ExperimentConfig.from_dict(raw)
    an = cfg_topo.graph()
    q_true = cfg_topo.true_q(an)
    f = FilterConfig(cfg_topo.beta)
    try:
        path = _simulate_for(cfg_topo, index)
        report = theta_mle(path, an, f, report_sigma=False)
        q_mle = unvec(psi_point_from_theta(report.point, an))
        return report.point, rem(q_mle, q_true, cfg_topo.delta)
    except NumericalError:
        return None


# --- runners ----------------------------------------------------------------


def run_bootstrap(cfg: ExperimentConfig, threads: Optional[int] = None) -> ResultTable:
    """Bias table over a ladder of sample sizes, estimated on path prefixes."""
    started = time.time()
    ladder = tuple(int(n) for n in cfg.raw.get("ladder", [500, 4500, 8500, 12500]))
    theta_true = np.asarray(cfg.true_parameters()["theta"])
    results = _map_paths(partial(_bootstrap_worker, cfg.raw, ladder), cfg.n_paths, threads)
    kept = [r for r in results if r is not None]
    n_excluded = cfg.n_paths - len(kept)
    if not kept:
        raise NumericalError("every bootstrap path failed")
    estimates = np.stack(kept)  # (paths, ladder, 2)
    rows = []
    for j, n in enumerate(ladder):
        block = estimates[:, j, :]
        mean = block.mean(axis=0)
        sd = block.std(axis=0, ddof=1) if block.shape[0] > 1 else np.array([np.nan, np.nan])
        bias = mean - theta_true
        rows.append(
            {
                "N": n,
                "mean_theta1": mean[0],
                "sd_theta1": sd[0],
                "bias_theta1": bias[0],
                "pct_bias_theta1": 100.0 * bias[0] / abs(theta_true[0]),
                "mean_theta2": mean[1],
                "sd_theta2": sd[1],
                "bias_theta2": bias[1],
                "pct_bias_theta2": 100.0 * bias[1] / abs(theta_true[1]),
                "n_used": block.shape[0],
            }
        )
    frame = pd.DataFrame(rows)
    metadata = _base_metadata(cfg, started, cfg.n_paths, n_excluded)
    metadata["id_column"] = "N"
    log_n = np.log(np.asarray(ladder, dtype=float))
    for comp, col in ((1, "bias_theta1"), (2, "bias_theta2")):
        abs_bias = np.abs(frame[col].to_numpy())
        if np.all(abs_bias > 0) and len(ladder) > 1:
            slope = float(np.polyfit(log_n, np.log(abs_bias), 1)[0])
            metadata[f"log_bias_slope_theta{comp}"] = -slope
    return ResultTable(frame=frame, metadata=metadata)


def run_normality(cfg: ExperimentConfig, threads: Optional[int] = None) -> ResultTable:
    """Kolmogorov-Smirnov checks of the standardised estimation errors."""
    started = time.time()
    theta_true = np.asarray(cfg.true_parameters()["theta"])
    results = _map_paths(partial(_normality_worker, cfg.raw), cfg.n_paths, threads)
    kept = [r for r in results if r is not None]
    n_excluded = cfg.n_paths - len(kept)
    if len(kept) < 3:
        raise NumericalError("too few paths succeeded for a normality check")
    z_scores = []
    for point, acov, t_n in kept:
        w, v = np.linalg.eigh(acov)
        inv_sqrt = (v / np.sqrt(np.clip(w, 1e-300, None))) @ v.T
        z_scores.append(np.sqrt(t_n) * inv_sqrt @ (point - theta_true))
    z = np.stack(z_scores)
    rows = []
    for comp in range(2):
        stat, pvalue = stats.kstest(z[:, comp], "norm")
        rows.append(
            {
                "component": f"theta{comp + 1}",
                "ks_statistic": float(stat),
                "p_value": float(pvalue),
                "mean_z": float(z[:, comp].mean()),
                "sd_z": float(z[:, comp].std(ddof=1)),
                "n_used": z.shape[0],
            }
        )
    frame = pd.DataFrame(rows)
    metadata = _base_metadata(cfg, started, cfg.n_paths, n_excluded)
    metadata["id_column"] = "component"
    return ResultTable(frame=frame, metadata=metadata)


def run_topology(cfg: ExperimentConfig, threads: Optional[int] = None) -> ResultTable:
    """Estimator spread and error across graph topologies."""
    started = time.time()
    topologies = list(cfg.raw["topologies"])
    theta_true = np.asarray(cfg.true_parameters()["theta"])
    rows = []
    total_excluded = 0
    for kind in topologies:
        results = _map_paths(partial(_topology_worker, cfg.raw, kind), cfg.n_paths, threads)
        kept = [r for r in results if r is not None]
        total_excluded += cfg.n_paths - len(kept)
        if not kept:
            continue
        points = np.stack([p for p, _ in kept])
        rems = np.asarray([r for _, r in kept])
        rows.append(
            {
                "topology": kind,
                "mean_theta1": points[:, 0].mean(),
                "sd_theta1": points[:, 0].std(ddof=1) if len(kept) > 1 else np.nan,
                "bias_theta1": points[:, 0].mean() - theta_true[0],
                "mean_theta2": points[:, 1].mean(),
                "sd_theta2": points[:, 1].std(ddof=1) if len(kept) > 1 else np.nan,
                "bias_theta2": points[:, 1].mean() - theta_true[1],
                "median_rem": float(np.median(rems)),
                "n_used": len(kept),
            }
        )
    frame = pd.DataFrame(rows)
    metadata = _base_metadata(cfg, started, cfg.n_paths * len(topologies), total_excluded)
    metadata["id_column"] = "topology"
    return ResultTable(frame=frame, metadata=metadata)


def run_sigma_sweep(cfg: ExperimentConfig, threads: Optional[int] = None) -> ResultTable:
    """Median transition-space error of the filtered estimator vs least squares."""
    started = time.time()
    sigmas = [float(s) for s in cfg.raw["sigmas"]]
    rows = []
    total_excluded = 0
    for sigma_mult in sigmas:
        results = _map_paths(partial(_sigma_sweep_worker, cfg.raw, sigma_mult), cfg.n_paths, threads)
        kept = [r for r in results if r is not None]
        total_excluded += cfg.n_paths - len(kept)
        if not kept:
            continue
        rem_mle = np.asarray([a for a, _ in kept])
        rem_ls = np.asarray([b for _, b in kept])
        rows.append(
            {
                "sigma": sigma_mult,
                "rem_mle_median": float(np.median(rem_mle)),
                "rem_mle_q25": float(np.quantile(rem_mle, 0.25)),
                "rem_mle_q75": float(np.quantile(rem_mle, 0.75)),
                "rem_ls_median": float(np.median(rem_ls)),
                "rem_ls_q25": float(np.quantile(rem_ls, 0.25)),
                "rem_ls_q75": float(np.quantile(rem_ls, 0.75)),
                "n_used": len(kept),
            }
        )
    frame = pd.DataFrame(rows)
    metadata = _base_metadata(cfg, started, cfg.n_paths * len(sigmas), total_excluded)
    metadata["id_column"] = "sigma"
    return ResultTable(frame=frame, metadata=metadata)


def run_beta_sweep(cfg: ExperimentConfig, threads: Optional[int] = None) -> ResultTable:
    """Estimation bias against the filter exponent on a shared path set."""
    started = time.time()
    betas = tuple(float(b) for b in cfg.raw["betas"])
    theta_true = np.asarray(cfg.true_parameters()["theta"])
    results = _map_paths(partial(_beta_sweep_worker, cfg.raw, betas), cfg.n_paths, threads)
    kept = [r for r in results if r is not None]
    n_excluded = cfg.n_paths - len(kept)
    if not kept:
        raise NumericalError("every beta-sweep path failed")
    estimates = np.stack(kept)  # (paths, betas, 2)
    rows = []
    for j, beta in enumerate(betas):
        block = estimates[:, j, :]
        rows.append(
            {
                "beta": beta,
                "bias_theta1": block[:, 0].mean() - theta_true[0],
                "bias_theta2": block[:, 1].mean() - theta_true[1],
                "sd_theta1": block[:, 0].std(ddof=1) if block.shape[0] > 1 else np.nan,
                "sd_theta2": block[:, 1].std(ddof=1) if block.shape[0] > 1 else np.nan,
                "n_used": block.shape[0],
            }
        )
    frame = pd.DataFrame(rows)
    metadata = _base_metadata(cfg, started, cfg.n_paths, n_excluded)
    metadata["id_column"] = "beta"
    return ResultTable(frame=frame, metadata=metadata)


def run_mesh_sweep(cfg: ExperimentConfig, threads: Optional[int] = None) -> ResultTable:
    """Error against the mesh size assumed at fitting time.

    Paths are generated at the configured mesh; each fit pretends the grid
    has a different spacing, and errors are scored at that assumed spacing.
    """
    started = time.time()
    meshes = tuple(float(m) for m in cfg.raw["meshes"])
    results = _map_paths(partial(_mesh_sweep_worker, cfg.raw, meshes), cfg.n_paths, threads)
    kept = [r for r in results if r is not None]
    n_excluded = cfg.n_paths - len(kept)
    if not kept:
        raise NumericalError("every mesh-sweep path failed")
    blocks = np.stack(kept)  # (paths, meshes, 2)
    rows = []
    for j, delta_fit in enumerate(meshes):
        rows.append(
            {
                "delta_fit": delta_fit,
                "rem_mle_median": float(np.median(blocks[:, j, 0])),
                "rem_ls_median": float(np.median(blocks[:, j, 1])),
                "n_used": blocks.shape[0],
            }
        )
    frame = pd.DataFrame(rows)
    metadata = _base_metadata(cfg, started, cfg.n_paths, n_excluded)
    metadata["id_column"] = "delta_fit"
    metadata["delta_true"] = cfg.delta
    return ResultTable(frame=frame, metadata=metadata)


def read_series_csv(path) -> SampledPath:
    """Parse a CSV with a leading time column and d value columns."""
    try:
        frame = pd.read_csv(path)
    except Exception as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if frame.shape[1] < 2:
        raise ParseError(f"{path}: need a time column plus at least one value column")
    times = frame.iloc[:, 0].to_numpy(dtype=float)
    value_cols = [c for c in frame.columns[1:] if not str(c).startswith(("c_", "j_", "config_hash"))]
    values = frame[value_cols].to_numpy(dtype=float).T
    if not np.all(np.isfinite(values)):
        raise ParseError(f"{path}: non-finite values in the series")
    return SampledPath(grid=ObservationGrid(times), values=values)


def run_fit_data(cfg: ExperimentConfig, csv_path=None) -> dict:
    """End-to-end pipeline on a data file.

    Steps: optional trend/seasonal removal, dynamics fit (graph-level,
    node-level, or adaptive-lasso when no graph is available), noise
    increment recovery, realised-variance decomposition, and an optional
    mixture fit.  Returns the artifacts keyed by name.
    """
    csv_path = csv_path or cfg.raw.get("data")
    path = read_series_csv(csv_path)
    period = cfg.raw.get("period")
    if period:
        cleaned = preprocess(path.values, int(period))
        path = SampledPath(grid=path.grid, values=cleaned)

    f = FilterConfig(cfg.beta)
    estimator_kind = cfg.raw.get("estimator", "theta")
    artifacts: dict = {}
    use_lasso = bool(cfg.raw.get("adaptive_lasso", False))
    an = None
    if "graph" in cfg.raw:
        an = cfg.graph(d=path.d)
        if an.d != path.d:
            raise ConfigError(f"graph has d={an.d} but data has d={path.d}")
    elif not use_lasso:
        raise MissingGraph("no adjacency supplied; set 'graph' or 'adaptive_lasso': true")

    if use_lasso:
        fit = fit_adaptive_lasso(path, f, LassoConfig(lambda_=cfg.raw.get("lambda")))
        artifacts["sparse_fit"] = fit
        from .graphs import row_normalize

        an = row_normalize(fit.support_adjacency())
        artifacts["report"] = theta_mle(path, an, f) if estimator_kind == "theta" else psi_mle(path, f)
        q_hat = _report_q(artifacts["report"], an)
    else:
        artifacts["report"] = theta_mle(path, an, f) if estimator_kind == "theta" else psi_mle(path, f)
        q_hat = _report_q(artifacts["report"], an)

    beta_scalar = float(f.beta_vector(path.d).mean())
    inc = recover_increments(path, q_hat)
    eta = cfg.eta if cfg.eta is not None else default_eta(inc, beta_scalar)
    artifacts["increments"] = inc
    artifacts["decomposition"] = decompose_noise(inc, eta=eta, beta=beta_scalar)
    if cfg.raw.get("fit_ghyp", False):
        artifacts["ghyp"] = fit_ghyp(inc, restrict_symmetric=bool(cfg.raw.get("restrict_symmetric", False)))
    return artifacts


def _report_q(report, an) -> np.ndarray:
    if report.kind == "theta":
        t1, t2 = report.point
        return t2 * np.eye(an.d) + t1 * an.entries
    return unvec(report.point)


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> ResultTable:
    """Dispatch a table-producing experiment by its configured kind."""
    runners = {
        "bootstrap": run_bootstrap,
        "normality": run_normality,
        "topology": run_topology,
        "sigma_sweep": run_sigma_sweep,
        "beta_sweep": run_beta_sweep,
        "mesh_sweep": run_mesh_sweep,
    }
    if cfg.experiment not in runners:
        raise ConfigError(f"run_experiment does not handle {cfg.experiment!r}")
    return runners[cfg.experiment](cfg, threads=threads)
