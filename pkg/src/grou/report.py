"""Figure rendering for experiment tables.

Plots are written next to the delimited output by the CLI report path; the
core modules never import matplotlib, so library users without a plotting
stack pay nothing.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .experiments import ResultTable


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def render_table_figure(table: ResultTable, outdir, name: str) -> list[str]:
    """Render the figure(s) matching the experiment kind; returns file paths."""
    experiment = table.metadata.get("experiment", "")
    renderer = {
        "bootstrap": _render_bootstrap,
        "normality": _render_normality,
        "topology": _render_topology,
        "sigma_sweep": _render_sigma_sweep,
        "beta_sweep": _render_beta_sweep,
        "mesh_sweep": _render_mesh_sweep,
    }.get(experiment)
    if renderer is None:
        return []
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    target = outdir / f"{name}.png"
    renderer(table, target)
    return [str(target)]


def _save(fig, target):
    fig.tight_layout()
    fig.savefig(target, dpi=150)
    import matplotlib.pyplot as plt

    plt.close(fig)


def _render_bootstrap(table: ResultTable, target) -> None:
    plt = _pyplot()
    frame = table.frame
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].loglog(frame["N"], frame["bias_theta1"].abs(), "o-", label="network effect")
    axes[0].loglog(frame["N"], frame["bias_theta2"].abs(), "s-", label="momentum effect")
    axes[0].set_xlabel("N")
    axes[0].set_ylabel("|bias|")
    axes[0].legend()
    axes[1].errorbar(frame["N"], frame["mean_theta2"], yerr=frame["sd_theta2"], fmt="s-")
    axes[1].set_xscale("log")
    axes[1].set_xlabel("N")
    axes[1].set_ylabel("momentum estimate")
    _save(fig, target)


def _render_normality(table: ResultTable, target) -> None:
    plt = _pyplot()
    frame = table.frame
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(frame["component"], frame["p_value"])
    ax.axhline(0.01, color="red", linestyle="--", label="1% level")
    ax.set_ylabel("KS p-value")
    ax.legend()
    _save(fig, target)


def _render_topology(table: ResultTable, target) -> None:
    plt = _pyplot()
    frame = table.frame
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    x = np.arange(len(frame))
    axes[0].bar(x - 0.2, frame["sd_theta1"], width=0.4, label="network effect")
    axes[0].bar(x + 0.2, frame["sd_theta2"], width=0.4, label="momentum effect")
    axes[0].set_xticks(x, frame["topology"])
    axes[0].set_ylabel("estimator sd")
    axes[0].legend()
    axes[1].bar(x, frame["median_rem"])
    axes[1].set_xticks(x, frame["topology"])
    axes[1].set_ylabel("median REM")
    _save(fig, target)


def _render_sigma_sweep(table: ResultTable, target) -> None:
    plt = _pyplot()
    frame = table.frame
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(frame["sigma"], frame["rem_mle_q25"], frame["rem_mle_q75"], alpha=0.25)
    ax.plot(frame["sigma"], frame["rem_mle_median"], "o-", label="filtered MLE")
    ax.plot(frame["sigma"], frame["rem_ls_median"], "s-", label="least squares")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("noise multiplier")
    ax.set_ylabel("median REM")
    ax.legend()
    _save(fig, target)


def _render_beta_sweep(table: ResultTable, target) -> None:
    plt = _pyplot()
    frame = table.frame
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(frame["beta"], frame["bias_theta1"], "o-", label="network effect")
    ax.plot(frame["beta"], frame["bias_theta2"], "s-", label="momentum effect")
    ax.axhline(0.0, color="gray", linewidth=0.8)
    ax.set_xlabel("filter exponent")
    ax.set_ylabel("bias")
    ax.legend()
    _save(fig, target)


def _render_mesh_sweep(table: ResultTable, target) -> None:
    plt = _pyplot()
    frame = table.frame
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(frame["delta_fit"], frame["rem_mle_median"], "o-", label="filtered MLE")
    ax.loglog(frame["delta_fit"], frame["rem_ls_median"], "s-", label="least squares")
    delta_true = table.metadata.get("delta_true")
    if delta_true:
        ax.axvline(delta_true, color="gray", linestyle="--", label="generating mesh")
    ax.set_xlabel("mesh assumed at fit time")
    ax.set_ylabel("median REM")
    ax.legend()
    _save(fig, target)


def render_eta_diagnostic(frame, outdir, name: str = "eta_diagnostic") -> list[str]:
    """Coverage-vs-cutoff curves for the jump threshold diagnostic."""
    plt = _pyplot()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    target = outdir / f"{name}.png"
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].plot(frame["eta"], frame["jump_probability"], "o-")
    axes[0].set_xlabel("cutoff multiplier")
    axes[0].set_ylabel("jump probability")
    axes[1].plot(frame["eta"], frame["continuous_coverage"], "o-", label="continuous")
    axes[1].plot(frame["eta"], frame["jump_coverage"], "s-", label="jump")
    axes[1].set_xlabel("cutoff multiplier")
    axes[1].set_ylabel("variance coverage")
    axes[1].legend()
    _save(fig, target)
    return [str(target)]
