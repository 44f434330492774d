"""Experiment configuration: JSON schema, validation and hashing.

A config is a JSON object with an ``experiment`` discriminator and a
mandatory ``master_seed`` (reproducibility is not optional).  The documented
schema lives in the README; this module turns the raw dict into a validated
:class:`ExperimentConfig` and derives the graph, noise spec and dynamics
matrix from it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .graphs import NormalizedAdjacency, make_topology, q_from_psi, q_from_theta, row_normalize
from .noise import LevySpec

EXPERIMENTS = (
    "simulate",
    "bootstrap",
    "normality",
    "topology",
    "beta_sweep",
    "sigma_sweep",
    "mesh_sweep",
    "fit_data",
)

DEFAULT_LADDER = (500, 4500, 8500, 12500)


def _require(data: dict, key: str, experiment: str):
    if key not in data:
        raise ConfigError(f"experiment {experiment!r} requires field {key!r}")
    return data[key]


def sigma_from_spec(spec, d: int) -> np.ndarray:
    """Covariance matrix from a scalar (s^2 I), matrix, or decay spec.

    The decay form ``{"kind": "exp_decay", "scale": s, "rate": r}`` builds
    ``s^2 * r^|i-j|``, a simple stand-in for spatially correlated noise.
    """
    if isinstance(spec, (int, float)):
        return float(spec) ** 2 * np.eye(d)
    if isinstance(spec, list):
        m = np.asarray(spec, dtype=float)
        if m.shape != (d, d):
            raise ConfigError(f"sigma matrix has shape {m.shape}, expected ({d}, {d})")
        return m
    if isinstance(spec, dict) and spec.get("kind") == "exp_decay":
        s = float(spec["scale"])
        r = float(spec["rate"])
        if not 0 <= r < 1:
            raise ConfigError(f"exp_decay rate must be in [0, 1), got {r}")
        idx = np.arange(d)
        return s * s * r ** np.abs(idx[:, None] - idx[None, :])
    raise ConfigError(f"cannot interpret sigma spec {spec!r}")


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` keeps the original dict."""

    experiment: str
    master_seed: int
    raw: dict = field(repr=False)

    d: Optional[int] = None
    n_obs: Optional[int] = None
    delta: Optional[float] = None
    n_paths: Optional[int] = None
    refinement: int = 8
    grid_kind: str = "uniform"
    jitter: float = 0.4
    beta: float = 0.4999
    eta: Optional[float] = None

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        experiment = data.get("experiment")
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
        if "master_seed" not in data:
            raise ConfigError("master_seed is required (reproducibility is mandatory)")
        cfg = ExperimentConfig(
            experiment=experiment,
            master_seed=int(data["master_seed"]),
            raw=data,
        )
        cfg.refinement = int(data.get("refinement", 8))
        cfg.grid_kind = data.get("grid", "uniform")
        cfg.jitter = float(data.get("jitter", 0.4))
        cfg.beta = data.get("beta", 0.4999)
        cfg.eta = data.get("eta")
        if cfg.grid_kind not in ("uniform", "jitter"):
            raise ConfigError(f"grid must be 'uniform' or 'jitter', got {cfg.grid_kind!r}")
        if cfg.refinement < 1:
            raise ConfigError("refinement must be >= 1")

        if experiment != "fit_data":
            cfg.d = int(_require(data, "d", experiment))
            cfg.n_obs = int(_require(data, "n_obs", experiment))
            cfg.delta = float(_require(data, "delta", experiment))
            cfg.n_paths = int(data.get("n_paths", 50))
            for name, value in (("d", cfg.d), ("n_obs", cfg.n_obs), ("n_paths", cfg.n_paths)):
                if value < 1:
                    raise ConfigError(f"{name} must be positive, got {value}")
            if cfg.delta <= 0:
                raise ConfigError(f"delta must be positive, got {cfg.delta}")
            _require(data, "noise", experiment)
            if "theta" not in data and "psi" not in data:
                raise ConfigError(f"experiment {experiment!r} needs true parameters ('theta' or 'psi')")

        if experiment == "bootstrap":
            ladder = data.get("ladder", list(DEFAULT_LADDER))
            if not ladder or any(int(n) < 2 for n in ladder):
                raise ConfigError("bootstrap ladder must be a nonempty list of sample sizes >= 2")
            if max(int(n) for n in ladder) > cfg.n_obs:
                raise ConfigError("bootstrap ladder exceeds n_obs")
        if experiment == "sigma_sweep" and not data.get("sigmas"):
            raise ConfigError("sigma_sweep requires a nonempty 'sigmas' grid")
        if experiment == "beta_sweep":
            betas = data.get("betas")
            if not betas:
                raise ConfigError("beta_sweep requires a nonempty 'betas' grid")
            if any(not 0.0 < float(b) < 0.5 for b in betas):
                raise ConfigError("every beta in the sweep must lie in (0, 1/2)")
        if experiment == "mesh_sweep" and not data.get("meshes"):
            raise ConfigError("mesh_sweep requires a nonempty 'meshes' grid")
        if experiment == "topology" and not data.get("topologies"):
            raise ConfigError("topology experiment requires a nonempty 'topologies' list")
        if experiment == "fit_data":
            _require(data, "data", experiment)
            if "graph" not in data and not data.get("adaptive_lasso", False):
                # validated again at run time against the CSV, but fail early
                raise ConfigError("fit_data needs a 'graph' or 'adaptive_lasso': true")
        return cfg

    @staticmethod
    def from_file(path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return ExperimentConfig.from_dict(data)

    # -- derived objects --------------------------------------------------

    def graph(self, d: Optional[int] = None) -> NormalizedAdjacency:
        spec = self.raw.get("graph", {"kind": "complete"})
        kind = spec.get("kind")
        if kind is None:
            raise ConfigError("graph spec needs a 'kind'")
        a = make_topology(kind, d=spec.get("d", d if d is not None else self.d), path=spec.get("path"))
        return row_normalize(a)

    def noise(self, d: Optional[int] = None) -> LevySpec:
        d = d if d is not None else self.d
        data = dict(self.raw["noise"])
        data["sigma"] = sigma_from_spec(data.get("sigma", 0.0), d)
        jump = data.get("jump")
        if jump is not None and jump.get("kind") == "compound_poisson":
            jump = dict(jump)
            heights = dict(jump["heights"])
            if heights.get("kind") == "gaussian":
                heights["cov"] = sigma_from_spec(heights["cov"], d).tolist()
            jump["heights"] = heights
            data["jump"] = jump
        return LevySpec.from_dict(data)

    def true_parameters(self) -> dict:
        if "theta" in self.raw:
            theta = self.raw["theta"]
            if len(theta) != 2:
                raise ConfigError("theta must be [theta1, theta2]")
            return {"theta": (float(theta[0]), float(theta[1]))}
        return {"psi": np.asarray(self.raw["psi"], dtype=float)}

    def true_q(self, an: NormalizedAdjacency) -> np.ndarray:
        params = self.true_parameters()
        if "theta" in params:
            t1, t2 = params["theta"]
            return q_from_theta(t1, t2, an)
        return q_from_psi(params["psi"], an)

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]
