"""Command-line harness.

    grou simulate   --config cfg.json --out dir [--seed S] [--threads K]
    grou estimate   --config cfg.json --out dir [--data series.csv]
    grou bootstrap  --config cfg.json --out dir [--seed S] [--threads K]
    grou sweep      --config cfg.json --out dir [--seed S] [--threads K]
    grou fit-data   --config cfg.json --out dir [--data series.csv]

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical failure.
``--threads`` falls back to the GROU_THREADS environment variable, then 1.
Unless ``--no-figures`` is given, table-producing commands also render
matplotlib figures next to the CSV output.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ExperimentConfig
from .errors import ConfigError, GrouError, MissingGraph, ParseError
from .estimators import FilterConfig, psi_mle, theta_mle
from .experiments import (
    _simulate_for,
    read_series_csv,
    run_experiment,
    run_fit_data,
)
from .recovery import eta_diagnostic

TABLE_EXPERIMENTS = ("bootstrap", "normality", "topology", "sigma_sweep", "beta_sweep", "mesh_sweep")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grou", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "simulate paths and write them as CSV"),
        ("estimate", "fit the dynamics on a series CSV"),
        ("bootstrap", "run the bias-table experiment"),
        ("sweep", "run the experiment named in the config (sigma/beta/mesh/normality/topology)"),
        ("fit-data", "full pipeline: fit, recover increments, decompose noise"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--threads", type=int, default=None, help="worker count (default GROU_THREADS or 1)")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
        if name in ("estimate", "fit-data"):
            p.add_argument("--data", default=None, help="series CSV (overrides config 'data')")
    return parser


def _load_config(args) -> ExperimentConfig:
    raw = json.loads(Path(args.config).read_text())
    if args.seed is not None:
        raw["master_seed"] = args.seed
    return ExperimentConfig.from_dict(raw)


def _cmd_simulate(cfg: ExperimentConfig, args) -> None:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for index in range(cfg.n_paths):
        path = _simulate_for(cfg, index)
        path.to_csv(outdir / f"path_{index:04d}.csv")
    print(f"wrote {cfg.n_paths} path(s) to {outdir}")


def _cmd_estimate(cfg: ExperimentConfig, args) -> None:
    csv_path = args.data or cfg.raw.get("data")
    if not csv_path:
        raise ConfigError("estimate needs --data or a 'data' field in the config")
    path = read_series_csv(csv_path)
    if "graph" not in cfg.raw:
        raise MissingGraph("estimate needs a 'graph' in the config")
    an = cfg.graph(d=path.d)
    f = FilterConfig(cfg.beta)
    kind = cfg.raw.get("estimator", "theta")
    report = theta_mle(path, an, f) if kind == "theta" else psi_mle(path, f)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "estimate.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    print(f"wrote {outdir / 'estimate.json'}")


def _cmd_table_experiment(cfg: ExperimentConfig, args) -> None:
    if cfg.experiment not in TABLE_EXPERIMENTS:
        raise ConfigError(
            f"command expects one of {TABLE_EXPERIMENTS} in the config, got {cfg.experiment!r}"
        )
    table = run_experiment(cfg, threads=args.threads)
    table.save(args.out, cfg.experiment)
    written = [f"{cfg.experiment}.csv", f"{cfg.experiment}_long.csv", f"{cfg.experiment}.meta.json"]
    if not args.no_figures:
        from .report import render_table_figure

        written += [Path(p).name for p in render_table_figure(table, args.out, cfg.experiment)]
    print(f"wrote {', '.join(written)} to {args.out}")


def _cmd_fit_data(cfg: ExperimentConfig, args) -> None:
    artifacts = run_fit_data(cfg, csv_path=args.data)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "estimate.json", "w") as fh:
        json.dump(artifacts["report"].to_dict(), fh, indent=2)
    dec = artifacts["decomposition"]
    with open(outdir / "noise_decomposition.json", "w") as fh:
        json.dump(dec.to_dict(), fh, indent=2)
    inc = artifacts["increments"]
    import pandas as pd

    frame = pd.DataFrame(inc.values.T, columns=[f"dL{i}" for i in range(inc.d)])
    frame.insert(0, "time", inc.times[:-1])
    frame.to_csv(outdir / "increments.csv", index=False)
    if "sparse_fit" in artifacts:
        with open(outdir / "sparse_fit.json", "w") as fh:
            json.dump(artifacts["sparse_fit"].to_dict(), fh, indent=2)
    if "ghyp" in artifacts:
        with open(outdir / "ghyp.json", "w") as fh:
            json.dump(artifacts["ghyp"].to_dict(), fh, indent=2)
    import numpy as np

    diag_grid = np.quantile(inc.norms() / inc.mesh**dec.beta, np.linspace(0.05, 0.995, 25))
    diag = eta_diagnostic(inc, dec.beta, diag_grid)
    diag.to_csv(outdir / "eta_diagnostic.csv", index=False)
    if not args.no_figures:
        from .report import render_eta_diagnostic

        render_eta_diagnostic(diag, outdir)
    print(f"wrote pipeline artifacts to {outdir}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "simulate":
            _cmd_simulate(cfg, args)
        elif args.command == "estimate":
            _cmd_estimate(cfg, args)
        elif args.command in ("bootstrap", "sweep"):
            _cmd_table_experiment(cfg, args)
        elif args.command == "fit-data":
            _cmd_fit_data(cfg, args)
    except (ConfigError, ParseError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except GrouError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
