"""Path simulation on arbitrary strictly increasing observation grids.

The process solves ``dY = -Q Y dt + dL`` and satisfies the exact recursion
``Y_{t+dt} = exp(-Q dt) Y_t + integral(exp(-Q (s - t)) dL_s)``.  The
stochastic integral has no closed form once jumps are present, so each
observation interval is refined into ``refinement`` equal sub-steps and the
integral is approximated by the raw noise increment on each sub-step (error
O(sub-step) per step).  Alongside the observations the simulator stores the
continuous-martingale and jump increments per observation interval; their sum
reconstructs the observed increments to machine precision, which is what the
unfiltered-estimator oracle consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, InvalidDynamics, MissingOracle
from .noise import LevySpec, generate_increments

__all__ = [
    "ObservationGrid",
    "SampledPath",
    "matrix_exp",
    "simulate_path",
    "stationary_init",
    "subsample_path",
]


def matrix_exp(m: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring with a Pade approximant)."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"matrix exponential needs a square matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ConfigError("matrix exponential needs finite entries")
    return expm(m)


@dataclass(frozen=True)
class ObservationGrid:
    """Strictly increasing times ``t_0 = 0 < ... < t_{N-1}``.

    ``mesh`` is the largest spacing and ``horizon`` the total span; both drive
    the filter thresholds and the estimator normalisations.
    """

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ConfigError("grid needs at least two time points")
        if np.any(np.diff(times) <= 0):
            raise ConfigError("grid times must be strictly increasing")
        object.__setattr__(self, "times", times)
        times.setflags(write=False)

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def spacings(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def mesh(self) -> float:
        return float(np.max(self.spacings))

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def is_uniform(self) -> bool:
        dts = self.spacings
        return bool(np.allclose(dts, dts[0], rtol=1e-9, atol=0.0))

    @staticmethod
    def uniform(n: int, delta: float) -> "ObservationGrid":
        if n < 2 or delta <= 0:
            raise ConfigError(f"uniform grid needs n >= 2 and delta > 0, got n={n}, delta={delta}")
        return ObservationGrid(np.arange(n) * delta)

    @staticmethod
    def jittered(n: int, delta: float, rng: np.random.Generator, jitter: float = 0.4) -> "ObservationGrid":
        """Uniform grid with interior points shifted by U(-jitter, jitter) * delta.

        Jitter below 0.5 keeps the grid strictly increasing.
        """
        if not 0 <= jitter < 0.5:
            raise ConfigError(f"jitter fraction must be in [0, 0.5), got {jitter}")
        times = np.arange(n) * delta
        times[1:-1] += rng.uniform(-jitter * delta, jitter * delta, size=n - 2)
        return ObservationGrid(times)


@dataclass
class SampledPath:
    """Observations on a grid, optionally with the simulation-only oracle parts.

    ``values`` is d x N.  When simulated, ``oracle_continuous`` holds the
    continuous-martingale increments per observation interval (d x (N-1)) and
    ``oracle_jumps`` the jump increments; real data carries neither.
    """

    grid: ObservationGrid
    values: np.ndarray
    oracle_continuous: Optional[np.ndarray] = None
    oracle_jumps: Optional[np.ndarray] = None
    oracle_brownian: Optional[np.ndarray] = None

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def require_oracle(self) -> np.ndarray:
        if self.oracle_continuous is None:
            raise MissingOracle("path has no stored continuous-part increments (real data?)")
        return self.oracle_continuous

    def prefix(self, n: int) -> "SampledPath":
        """First ``n`` observations, oracle parts truncated to match."""
        if n < 2 or n > self.n:
            raise ConfigError(f"prefix length must be in [2, {self.n}], got {n}")

        def cut(inc):
            return None if inc is None else inc[:, : n - 1]

        return SampledPath(
            grid=ObservationGrid(self.grid.times[:n]),
            values=self.values[:, :n],
            oracle_continuous=cut(self.oracle_continuous),
            oracle_jumps=cut(self.oracle_jumps),
            oracle_brownian=cut(self.oracle_brownian),
        )

    def to_csv(self, path) -> None:
        """Write time, values and (when present) oracle increment columns.

        Oracle columns carry a ``c_``/``j_`` prefix; row k holds the increment
        of the interval starting at t_k, so their last row is empty.
        """
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["time"] + [f"y{i}" for i in range(self.d)]
            if self.oracle_continuous is not None:
                header += [f"c_y{i}" for i in range(self.d)]
                header += [f"j_y{i}" for i in range(self.d)]
            writer.writerow(header)
            for k in range(self.n):
                row = [repr(float(self.grid.times[k]))] + [repr(float(v)) for v in self.values[:, k]]
                if self.oracle_continuous is not None:
                    if k < self.n - 1:
                        row += [repr(float(v)) for v in self.oracle_continuous[:, k]]
                        row += [repr(float(v)) for v in self.oracle_jumps[:, k]]
                    else:
                        row += [""] * (2 * self.d)
                writer.writerow(row)

    @staticmethod
    def from_csv(path) -> "SampledPath":
        import csv

        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            value_cols = [i for i, name in enumerate(header) if name.startswith("y")]
            cont_cols = [i for i, name in enumerate(header) if name.startswith("c_y")]
            jump_cols = [i for i, name in enumerate(header) if name.startswith("j_y")]
            times, values, cont, jumps = [], [], [], []
            for row in reader:
                times.append(float(row[0]))
                values.append([float(row[i]) for i in value_cols])
                if cont_cols and row[cont_cols[0]] != "":
                    cont.append([float(row[i]) for i in cont_cols])
                    jumps.append([float(row[i]) for i in jump_cols])
        return SampledPath(
            grid=ObservationGrid(np.asarray(times)),
            values=np.asarray(values).T,
            oracle_continuous=np.asarray(cont).T if cont else None,
            oracle_jumps=np.asarray(jumps).T if jumps else None,
        )


def _check_mean_reverting(q: np.ndarray) -> None:
    eigs = np.linalg.eigvals(q)
    if np.min(eigs.real) <= 0.0:
        raise InvalidDynamics(
            f"dynamics matrix has an eigenvalue with real part {np.min(eigs.real):.3e} <= 0; "
            "the transition matrix would not be a contraction"
        )


def _refined_times(times: np.ndarray, m: int) -> np.ndarray:
    """Each observation interval split into m equal sub-intervals."""
    if m == 1:
        return times
    lengths = np.diff(times)
    offsets = np.arange(m) / m
    fine = times[:-1, None] + lengths[:, None] * offsets[None, :]
    return np.append(fine.ravel(), times[-1])


def _transition_cache(q: np.ndarray, dts: np.ndarray) -> np.ndarray:
    """exp(-q * dt) for every dt, computed once per distinct spacing."""
    cache: dict[float, np.ndarray] = {}
    out = np.empty((dts.size, q.shape[0], q.shape[1]))
    for k, dt in enumerate(dts):
        key = float(dt)
        if key not in cache:
            cache[key] = matrix_exp(-q * key)
        out[k] = cache[key]
    return out


def _ar_loop(transitions: np.ndarray, increments: np.ndarray, y0: np.ndarray) -> np.ndarray:
    d, n_steps = increments.shape
    path = np.empty((d, n_steps + 1))
    path[:, 0] = y0
    y = y0.copy()
    for k in range(n_steps):
        y = transitions[k] @ y + increments[:, k]
        path[:, k + 1] = y
    return path


def _ar_uniform(transition: np.ndarray, increments: np.ndarray, y0: np.ndarray) -> Optional[np.ndarray]:
    """Diagonalised recursion: d decoupled scalar filters instead of a loop.

    Returns ``None`` when the transition matrix is too ill-conditioned to
    diagonalise reliably, in which case the caller falls back to the loop.
    """
    from scipy.signal import lfilter

    d = transition.shape[0]
    w, v = np.linalg.eig(transition)
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond > 1e8:
        return None
    v_inv = np.linalg.inv(v)
    u = v_inv @ increments
    z0 = v_inv @ y0.astype(complex)
    n_steps = increments.shape[1]
    path_eig = np.empty((d, n_steps + 1), dtype=complex)
    path_eig[:, 0] = z0
    for i in range(d):
        zi = np.array([w[i] * z0[i]])
        path_eig[i, 1:], _ = lfilter(np.array([1.0 + 0j]), np.array([1.0, -w[i]]), u[i], zi=zi)
    return (v @ path_eig).real


def simulate_path(
    q: np.ndarray,
    spec: LevySpec,
    grid: ObservationGrid,
    rng: np.random.Generator,
    refinement: int = 8,
    y0: Optional[np.ndarray] = None,
) -> SampledPath:
    """Simulate the process on ``grid`` via the refined transition recursion.

    ``y0=None`` draws the initial state from a stationary burn-in.  The
    returned path carries the per-interval continuous/jump increment split as
    the oracle for the unfiltered estimator.
    """
    q = np.asarray(q, dtype=float)
    if refinement < 1:
        raise ConfigError(f"refinement must be >= 1, got {refinement}")
    _check_mean_reverting(q)
    d = q.shape[0]
    if spec.d != d:
        raise ConfigError(f"noise dimension {spec.d} does not match dynamics dimension {d}")
    if y0 is None:
        y0 = stationary_init(q, spec, rng)
    y0 = np.asarray(y0, dtype=float)

    fine_times = _refined_times(grid.times, refinement)
    inc = generate_increments(spec, fine_times, rng)
    dts = np.diff(fine_times)

    path = None
    if np.allclose(dts, dts[0], rtol=1e-9, atol=0.0):
        path = _ar_uniform(matrix_exp(-q * float(dts.mean())), inc.values, y0)
    if path is None:
        path = _ar_loop(_transition_cache(q, dts), inc.values, y0)

    m = refinement
    values = path[:, ::m]
    n_obs = grid.n
    oracle_jumps = inc.jumps.reshape(d, n_obs - 1, m).sum(axis=2)
    oracle_brownian = inc.continuous.reshape(d, n_obs - 1, m).sum(axis=2)
    obs_increments = np.diff(values, axis=1)
    oracle_continuous = obs_increments - oracle_jumps
    return SampledPath(
        grid=grid,
        values=values,
        oracle_continuous=oracle_continuous,
        oracle_jumps=oracle_jumps,
        oracle_brownian=oracle_brownian,
    )


def stationary_init(q: np.ndarray, spec: LevySpec, rng: np.random.Generator) -> np.ndarray:
    """Terminal state of a burn-in run of twenty relaxation times from zero.

    The relaxation time is the reciprocal of the smallest eigenvalue of the
    symmetric part of ``q``; the residual initialisation bias exp(-20) is far
    below Monte Carlo noise.
    """
    q = np.asarray(q, dtype=float)
    _check_mean_reverting(q)
    sym_eigs = np.linalg.eigvalsh(0.5 * (q + q.T))
    lam_min = float(sym_eigs[0])
    lam_max = float(sym_eigs[-1])
    if lam_min <= 0.0:
        raise InvalidDynamics("symmetric part of the dynamics matrix is not positive definite")
    horizon = 20.0 / lam_min
    dt = 0.05 / lam_max
    n_steps = int(np.ceil(horizon / dt))
    times = np.arange(n_steps + 1) * dt
    inc = generate_increments(spec, times, rng)
    transition = matrix_exp(-q * dt)
    y = np.zeros(q.shape[0])
    for k in range(n_steps):
        y = transition @ y + inc.values[:, k]
    return y


def subsample_path(path: SampledPath, step: int) -> SampledPath:
    """Keep every ``step``-th observation, aggregating oracle increments.

    Produces the same underlying trajectory observed on a coarser grid, which
    is what mesh-ladder comparisons pair against the original.
    """
    if step < 1 or (path.n - 1) % step != 0:
        raise ConfigError(f"step {step} must divide the {path.n - 1} intervals")
    values = path.values[:, ::step]
    grid = ObservationGrid(path.grid.times[::step])

    def agg(inc):
        if inc is None:
            return None
        return inc.reshape(path.d, (path.n - 1) // step, step).sum(axis=2)

    return SampledPath(
        grid=grid,
        values=values,
        oracle_continuous=agg(path.oracle_continuous),
        oracle_jumps=agg(path.oracle_jumps),
        oracle_brownian=agg(path.oracle_brownian),
    )
