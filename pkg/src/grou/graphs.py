"""Graph topologies and the two graph parametrisations of the dynamics matrix.

A graph on ``d`` nodes is a binary symmetric adjacency matrix with zero
diagonal.  Row-normalising it by the node degrees (floored at one, so rows of
isolated nodes are all zero) gives the averaging operator that appears in both
dynamics parametrisations:

* two-parameter form:  ``Q = theta2 * I + theta1 * Abar``
* node-level form:     ``Q = (I + Abar) ⊙ unvec(psi)``

where ``vec``/``unvec`` use column stacking, i.e. ``psi[d*(j-1)+i]`` is matrix
entry ``(i, j)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadDimension, InvalidPsi, InvalidTheta, ParseError

__all__ = [
    "NormalizedAdjacency",
    "validate_adjacency",
    "row_normalize",
    "rho",
    "theta_is_valid",
    "psi_is_valid",
    "q_from_theta",
    "q_from_psi",
    "make_topology",
    "load_edge_list",
    "save_edge_list",
    "vec",
    "unvec",
]


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stack a square matrix into a vector."""
    return np.asarray(m).flatten(order="F")


def unvec(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec`: reshape a length-d^2 vector into d x d."""
    x = np.asarray(x)
    d = int(round(np.sqrt(x.size)))
    if d * d != x.size:
        raise ValueError(f"length {x.size} is not a perfect square")
    return x.reshape((d, d), order="F")


def validate_adjacency(a: np.ndarray) -> np.ndarray:
    """Check binary symmetric zero-diagonal structure; returns a float copy."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise BadDimension(f"adjacency must be square, got shape {a.shape}")
    if not np.all((a == 0.0) | (a == 1.0)):
        raise ParseError("adjacency entries must be 0 or 1")
    if np.any(np.diag(a) != 0.0):
        raise ParseError("adjacency diagonal must be zero")
    if not np.array_equal(a, a.T):
        raise ParseError("adjacency must be symmetric (undirected links)")
    return a.copy()


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Row-normalised adjacency together with the degree floor.

    ``degrees[i] = max(1, sum_j a_ij)`` and ``entries[i, j] = a_ij / degrees[i]``.
    Rows of isolated nodes are all zero.
    """

    adjacency: np.ndarray
    entries: np.ndarray
    degrees: np.ndarray

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    def __post_init__(self):
        self.entries.setflags(write=False)
        self.adjacency.setflags(write=False)
        self.degrees.setflags(write=False)


def row_normalize(a: np.ndarray) -> NormalizedAdjacency:
    """Build the row-normalised adjacency with degrees floored at one."""
    a = validate_adjacency(a)
    degrees = np.maximum(1, a.sum(axis=1)).astype(int)
    entries = a / degrees[:, None]
    return NormalizedAdjacency(adjacency=a, entries=entries, degrees=degrees)


def rho(an: NormalizedAdjacency) -> float:
    """Contraction weight ``d / sum_ij(a_ij / n_i)``, zero for an empty graph."""
    total = float(an.entries.sum())
    if total == 0.0:
        return 0.0
    return an.d / total


def theta_is_valid(theta1: float, theta2: float) -> bool:
    """Admissibility of the two-parameter dynamics: theta2 > max(0, |theta1|)."""
    return theta2 > 0.0 and theta2 > abs(theta1)


def psi_is_valid(psi: np.ndarray, an: NormalizedAdjacency) -> bool:
    """Row-dominance admissibility of the node-level dynamics vector.

    Requires, for every node i, a positive diagonal entry strictly larger than
    the degree-scaled absolute row sum: ``M[i,i] > sum_{j!=i} |M[i,j]| / n_i``
    with ``M = unvec(psi)``.
    """
    m = unvec(np.asarray(psi, dtype=float))
    if m.shape[0] != an.d:
        raise BadDimension(f"psi implies d={m.shape[0]}, graph has d={an.d}")
    diag = np.diag(m)
    off = np.sum(np.abs(m), axis=1) - np.abs(diag)
    return bool(np.all(diag > 0.0) and np.all(diag > off / an.degrees))


def q_from_theta(theta1: float, theta2: float, an: NormalizedAdjacency) -> np.ndarray:
    """Assemble ``Q = theta2 * I + theta1 * Abar``."""
    if not theta_is_valid(theta1, theta2):
        raise InvalidTheta(f"(theta1, theta2)=({theta1}, {theta2}) violates theta2 > 0, theta2 > |theta1|")
    return theta2 * np.eye(an.d) + theta1 * an.entries


def q_from_psi(psi: np.ndarray, an: NormalizedAdjacency) -> np.ndarray:
    """Assemble ``Q = (I + Abar) ⊙ unvec(psi)``.

    The diagonal of Q equals the diagonal of ``unvec(psi)``; off-diagonal
    entry (i, j) is ``psi[d*(j-1)+i] * a_ij / n_i``.
    """
    psi = np.asarray(psi, dtype=float)
    if not psi_is_valid(psi, an):
        raise InvalidPsi("psi violates the row-dominance condition")
    return (np.eye(an.d) + an.entries) * unvec(psi)


def _polymer(d: int) -> np.ndarray:
    a = np.zeros((d, d))
    idx = np.arange(d - 1)
    a[idx, idx + 1] = 1.0
    a[idx + 1, idx] = 1.0
    return a


def _lattice(d: int) -> np.ndarray:
    # g x g grid with 4-neighbour connectivity plus one pendant node attached
    # to the (0, 0) corner; deterministic attachment for reproducibility.
    g = int(round(np.sqrt(d - 1)))
    if g < 1 or g * g + 1 != d:
        raise BadDimension(f"lattice needs d = g^2 + 1 nodes, got d={d}")
    a = np.zeros((d, d))
    node = lambda r, c: r * g + c
    for r in range(g):
        for c in range(g):
            if c + 1 < g:
                a[node(r, c), node(r, c + 1)] = a[node(r, c + 1), node(r, c)] = 1.0
            if r + 1 < g:
                a[node(r, c), node(r + 1, c)] = a[node(r + 1, c), node(r, c)] = 1.0
    pendant = d - 1
    a[pendant, node(0, 0)] = a[node(0, 0), pendant] = 1.0
    return a


def _complete(d: int) -> np.ndarray:
    a = np.ones((d, d)) - np.eye(d)
    return a


def make_topology(kind: str, d: int | None = None, path: str | Path | None = None) -> np.ndarray:
    """Return the adjacency matrix of a named topology.

    ``kind`` is one of ``polymer`` (path graph), ``lattice`` (square grid plus
    one pendant node, so d = g^2 + 1), ``complete`` or ``file`` (edge list at
    ``path``).
    """
    if kind == "file":
        if path is None:
            raise ParseError("topology kind 'file' requires a path")
        return load_edge_list(path)
    if d is None or d < 1:
        raise BadDimension(f"node count must be >= 1, got {d}")
    if kind == "polymer":
        return _polymer(d)
    if kind == "lattice":
        return _lattice(d)
    if kind == "complete":
        return _complete(d)
    raise ParseError(f"unknown topology kind {kind!r}")


def load_edge_list(path: str | Path) -> np.ndarray:
    """Parse an undirected edge list: one ``i j`` pair per line, 0-based."""
    pairs = []
    max_node = -1
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 'i j', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-integer node index") from exc
        if i < 0 or j < 0:
            raise ParseError(f"{path}:{lineno}: negative node index")
        if i == j:
            raise ParseError(f"{path}:{lineno}: self-loop {i}-{j} not allowed")
        pairs.append((i, j))
        max_node = max(max_node, i, j)
    if max_node < 0:
        raise ParseError(f"{path}: no edges found")
    a = np.zeros((max_node + 1, max_node + 1))
    for i, j in pairs:
        a[i, j] = a[j, i] = 1.0
    return a


def save_edge_list(a: np.ndarray, path: str | Path) -> None:
    """Write an adjacency matrix as an edge list (each edge once, i < j)."""
    a = validate_adjacency(a)
    lines = [f"{i} {j}" for i, j in zip(*np.nonzero(np.triu(a)))]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
