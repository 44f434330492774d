"""Samplers for the driving noise increments.

Three families are supported, all with zero drift:

* pure Brownian motion with covariance ``sigma``;
* Brownian motion plus a compound Poisson jump part with Gaussian or
  heavy-tailed mean-variance-mixture jump heights;
* a normal inverse-Gaussian Levy motion (inverse-Gaussian subordinated
  Brownian motion), the infinite-activity case.

Every sampler takes an explicit ``numpy.random.Generator`` and is pure given
it, so Monte Carlo workers can run on independent streams.  A scalar
``multiplier`` rescales the generated increments, which is how the noise
amplitude sweeps are driven.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, NotPSD

__all__ = [
    "GhypParams",
    "GaussianJumps",
    "GhypJumps",
    "CompoundPoisson",
    "GhypMotion",
    "LevySpec",
    "IncrementMatrix",
    "cholesky_psd",
    "sample_brownian",
    "sample_ig",
    "sample_ghyp",
    "generate_increments",
]

_PSD_TOL = 1e-10


def cholesky_psd(sigma: np.ndarray) -> np.ndarray:
    """Lower-triangular-like factor L with L @ L.T = sigma.

    Falls back to an eigenvalue factorisation for semidefinite input; raises
    :class:`NotPSD` if an eigenvalue is negative beyond tolerance.
    """
    sigma = np.asarray(sigma, dtype=float)
    if not np.allclose(sigma, sigma.T, atol=1e-12, rtol=1e-9):
        raise NotPSD("covariance matrix is not symmetric")
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(sigma)
    scale = max(abs(w[-1]), 1.0)
    if w[0] < -_PSD_TOL * scale:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} is negative beyond tolerance")
    return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class GhypParams:
    """Mean-variance mixture with a unit-mean inverse-Gaussian mixing variable.

    At unit time the law is ``w * gamma + sqrt(w) * B Z`` with
    ``w ~ IG(mean=1, shape=ig_shape)``, ``Z ~ N(0, I)`` and
    ``B @ B.T = scatter``.  Over an interval ``dt`` the mixing variable is
    drawn from ``IG(mean=dt, shape=ig_shape * dt^2)``, the infinitely
    divisible convention for the inverse-Gaussian subordinated subfamily.
    The full mixing-index family is out of scope; only this subfamily is
    exposed.
    """

    gamma: np.ndarray
    scatter: np.ndarray
    ig_shape: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.atleast_1d(np.asarray(self.gamma, dtype=float)))
        object.__setattr__(self, "scatter", np.asarray(self.scatter, dtype=float))
        if self.ig_shape <= 0:
            raise ConfigError(f"ig_shape must be positive, got {self.ig_shape}")
        cholesky_psd(self.scatter)  # validates PSD

    @property
    def d(self) -> int:
        return self.gamma.size

    @property
    def near_gaussian(self) -> bool:
        """Mixing variance 1/ig_shape is negligible: the fit degenerated."""
        return self.ig_shape > 1e6

    def to_dict(self) -> dict:
        return {
            "kind": "ghyp",
            "gamma": self.gamma.tolist(),
            "scatter": self.scatter.tolist(),
            "ig_shape": self.ig_shape,
        }

    @staticmethod
    def from_dict(data: dict) -> "GhypParams":
        return GhypParams(
            gamma=np.asarray(data["gamma"], dtype=float),
            scatter=np.asarray(data["scatter"], dtype=float),
            ig_shape=float(data.get("ig_shape", 1.0)),
        )


@dataclass(frozen=True)
class GaussianJumps:
    """Zero-mean Gaussian jump heights with covariance ``cov``."""

    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        cholesky_psd(self.cov)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        l = cholesky_psd(self.cov)
        return (l @ rng.standard_normal((self.cov.shape[0], n))).T

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "cov": self.cov.tolist()}


@dataclass(frozen=True)
class GhypJumps:
    """Jump heights drawn from the unit-time mixture law of ``params``."""

    params: GhypParams

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return _ghyp_draws(self.params, np.ones(n), rng)

    def to_dict(self) -> dict:
        return {"kind": "ghyp_heights", "params": self.params.to_dict()}


@dataclass(frozen=True)
class CompoundPoisson:
    """Finite-activity jump part: arrivals at rate ``intensity`` per unit time.

    ``jump_count_mode`` controls how jump counts are attached to grid
    intervals:

    * ``"poisson"`` (default): one d-dimensional compound Poisson process,
      i.e. a Poisson(intensity * dt) count per interval with full
      d-dimensional height vectors at common arrival times;
    * ``"per_component"``: an independent Poisson stream per component with
      heights from the corresponding marginal;
    * ``"median_count"``: draw one Poisson(intensity * T) count per component,
      take the median across components, and place that many d-dimensional
      jumps uniformly over the horizon.
    """

    intensity: float
    heights: GaussianJumps | GhypJumps
    jump_count_mode: str = "poisson"

    def __post_init__(self):
        if self.intensity <= 0:
            raise ConfigError(f"jump intensity must be positive, got {self.intensity}")
        if self.jump_count_mode not in ("poisson", "per_component", "median_count"):
            raise ConfigError(f"unknown jump_count_mode {self.jump_count_mode!r}")

    def to_dict(self) -> dict:
        return {
            "kind": "compound_poisson",
            "intensity": self.intensity,
            "heights": self.heights.to_dict(),
            "jump_count_mode": self.jump_count_mode,
        }


@dataclass(frozen=True)
class GhypMotion:
    """Infinite-activity pure-jump Levy motion from the mixture subfamily."""

    params: GhypParams

    def to_dict(self) -> dict:
        return {"kind": "ghyp", "params": self.params.to_dict()}


@dataclass(frozen=True)
class LevySpec:
    """Driving-noise description: Brownian covariance, jump part, amplitude.

    ``sigma`` is the d x d Brownian covariance (may be zero for a pure-jump
    noise).  ``jump`` is ``None``, a :class:`CompoundPoisson` or a
    :class:`GhypMotion`.  ``multiplier`` rescales the generated increments.
    The drift is always zero.
    """

    sigma: np.ndarray
    jump: Optional[CompoundPoisson | GhypMotion] = None
    multiplier: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))
        cholesky_psd(self.sigma)
        if self.multiplier < 0:
            raise ConfigError(f"multiplier must be >= 0, got {self.multiplier}")

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    def with_multiplier(self, multiplier: float) -> "LevySpec":
        return LevySpec(sigma=self.sigma, jump=self.jump, multiplier=multiplier)

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma.tolist(),
            "jump": None if self.jump is None else self.jump.to_dict(),
            "multiplier": self.multiplier,
        }

    @staticmethod
    def from_dict(data: dict) -> "LevySpec":
        jump = data.get("jump")
        jump_obj: Optional[CompoundPoisson | GhypMotion] = None
        if jump is not None:
            kind = jump["kind"]
            if kind == "compound_poisson":
                heights = jump["heights"]
                if heights["kind"] == "gaussian":
                    h: GaussianJumps | GhypJumps = GaussianJumps(np.asarray(heights["cov"], dtype=float))
                elif heights["kind"] == "ghyp_heights":
                    h = GhypJumps(GhypParams.from_dict(heights["params"]))
                else:
                    raise ConfigError(f"unknown jump height kind {heights['kind']!r}")
                jump_obj = CompoundPoisson(
                    intensity=float(jump["intensity"]),
                    heights=h,
                    jump_count_mode=jump.get("jump_count_mode", "poisson"),
                )
            elif kind == "ghyp":
                jump_obj = GhypMotion(GhypParams.from_dict(jump["params"]))
            else:
                raise ConfigError(f"unknown jump kind {kind!r}")
        return LevySpec(
            sigma=np.asarray(data["sigma"], dtype=float),
            jump=jump_obj,
            multiplier=float(data.get("multiplier", 1.0)),
        )


@dataclass
class IncrementMatrix:
    """Noise increments per grid interval, with the Brownian part kept aside.

    Column k holds the increment over ``[t_k, t_{k+1})``.  ``continuous`` is
    the Brownian contribution (after the multiplier); ``values - continuous``
    is exactly the jump contribution, so downstream consumers can split the
    two without re-simulation.
    """

    times: np.ndarray
    values: np.ndarray
    continuous: np.ndarray

    @property
    def jumps(self) -> np.ndarray:
        return self.values - self.continuous


def sample_brownian(sigma: np.ndarray, dt: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from N(0, dt * sigma); a (d,) vector, or (d, size) when requested."""
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    l = cholesky_psd(sigma) * np.sqrt(dt)
    if size is None:
        return l @ rng.standard_normal(sigma.shape[0])
    return l @ rng.standard_normal((sigma.shape[0], size))


def sample_ig(mean, shape, rng: np.random.Generator, size: int | None = None):
    """Inverse-Gaussian draws via the transformation-with-roots method.

    Uses one chi-square and one uniform variate per draw; exact and
    rejection-free.  ``mean`` and ``shape`` may be scalars or arrays
    broadcasting against ``size``.
    """
    mean = np.asarray(mean, dtype=float)
    shape = np.asarray(shape, dtype=float)
    if np.any(mean <= 0) or np.any(shape <= 0):
        raise ConfigError("inverse-Gaussian mean and shape must be positive")
    scalar = size is None and mean.ndim == 0 and shape.ndim == 0
    n = size if size is not None else np.broadcast(mean, shape).shape or 1
    nu = rng.standard_normal(n) ** 2
    ratio = mean / shape
    x = mean * (1.0 + 0.5 * ratio * nu - 0.5 * np.sqrt(4.0 * ratio * nu + (ratio * nu) ** 2))
    u = rng.uniform(size=n)
    out = np.where(u <= mean / (mean + x), x, mean**2 / x)
    return float(out[0]) if scalar else out


def _ghyp_draws(params: GhypParams, dts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Increments of the mixture Levy motion over intervals ``dts``; (n, d)."""
    dts = np.asarray(dts, dtype=float)
    n = dts.size
    w = sample_ig(dts, params.ig_shape * dts**2, rng, size=n)
    b = cholesky_psd(params.scatter)
    z = rng.standard_normal((params.d, n))
    return (w[:, None] * params.gamma[None, :]) + np.sqrt(w)[:, None] * (b @ z).T


def sample_ghyp(params: GhypParams, dt: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw mixture Levy-motion increments over an interval of length ``dt``."""
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    n = 1 if size is None else size
    draws = _ghyp_draws(params, np.full(n, dt), rng)
    return draws[0] if size is None else draws.T


def _compound_poisson_increments(
    cp: CompoundPoisson, dts: np.ndarray, d: int, rng: np.random.Generator
) -> np.ndarray:
    """Aggregate jump increments per interval; returns (d, n_intervals)."""
    n = dts.size
    out = np.zeros((n, d))
    if cp.jump_count_mode == "poisson":
        counts = rng.poisson(cp.intensity * dts)
        total = int(counts.sum())
        if total:
            heights = cp.heights.sample(total, rng)
            np.add.at(out, np.repeat(np.arange(n), counts), heights)
    elif cp.jump_count_mode == "per_component":
        for i in range(d):
            counts = rng.poisson(cp.intensity * dts)
            total = int(counts.sum())
            if total:
                heights = cp.heights.sample(total, rng)
                np.add.at(out[:, i], np.repeat(np.arange(n), counts), heights[:, i])
    else:  # median_count: the common-count convention over the whole horizon
        horizon = float(dts.sum())
        count = int(np.median(rng.poisson(cp.intensity * horizon, size=d)))
        if count:
            edges = np.concatenate([[0.0], np.cumsum(dts)])
            positions = rng.uniform(0.0, horizon, size=count)
            idx = np.clip(np.searchsorted(edges, positions, side="right") - 1, 0, n - 1)
            heights = cp.heights.sample(count, rng)
            np.add.at(out, idx, heights)
    return out.T


def generate_increments(spec: LevySpec, times: np.ndarray, rng: np.random.Generator) -> IncrementMatrix:
    """Generate noise increments for every interval of a strictly increasing grid.

    The Brownian part is recorded separately so the exact jump/continuous
    split is available to simulation oracles.  The multiplier scales both
    parts.
    """
    times = np.asarray(times, dtype=float)
    dts = np.diff(times)
    if np.any(dts <= 0):
        raise ConfigError("time grid must be strictly increasing")
    d = spec.d
    n = dts.size
    if np.any(spec.sigma):
        brownian = cholesky_psd(spec.sigma) @ rng.standard_normal((d, n)) * np.sqrt(dts)[None, :]
    else:
        brownian = np.zeros((d, n))
    jumps = np.zeros((d, n))
    if isinstance(spec.jump, CompoundPoisson):
        jumps = _compound_poisson_increments(spec.jump, dts, d, rng)
    elif isinstance(spec.jump, GhypMotion):
        jumps = _ghyp_draws(spec.jump.params, dts, rng).T
    values = spec.multiplier * (brownian + jumps)
    continuous = spec.multiplier * brownian
    return IncrementMatrix(times=times, values=values, continuous=continuous)
