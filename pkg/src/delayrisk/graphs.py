"""Communication graphs, Laplacians and their spectra.

Agents are labelled ``1..n`` everywhere in the public API (edge lists,
failure sets, CLI output). Array row/column ``i - 1`` belongs to agent ``i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    ConnectivityError,
    DegenerateGraphError,
    InvalidEdgeError,
    InvalidLaplacianError,
    NumericalError,
    ParameterError,
)

GRAPH_KINDS = ("path", "pcycle", "complete", "custom")


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected, simple, connected graph with positive edge weights.

    Each edge is stored once as ``(i, j, w)`` with ``i < j`` (1-based).
    Validation happens at construction.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ParameterError(f"agent count must be a positive integer, got {n!r}")
        seen = set()
        normalized = []
        for edge in self.edges:
            if len(edge) != 3:
                raise InvalidEdgeError(f"edge {edge!r} is not an (i, j, w) triple")
            i, j, w = int(edge[0]), int(edge[1]), float(edge[2])
            if not (1 <= i <= n and 1 <= j <= n):
                raise InvalidEdgeError(f"edge ({i}, {j}) has an endpoint outside 1..{n}")
            if i == j:
                raise InvalidEdgeError(f"self-loop at agent {i}")
            if not (w > 0.0 and math.isfinite(w)):
                raise InvalidEdgeError(f"edge ({i}, {j}) has non-positive or non-finite weight {w}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise InvalidEdgeError(f"duplicate edge {key}")
            seen.add(key)
            normalized.append((key[0], key[1], w))
        normalized.sort()
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", tuple(normalized))
        if not is_connected(self.n, self.edges):
            raise ConnectivityError(f"graph on {self.n} agents is not connected")

    def adjacency(self) -> np.ndarray:
        """Dense symmetric weight matrix ``K`` with ``K[i-1, j-1] = w``."""
        K = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            K[i - 1, j - 1] = w
            K[j - 1, i - 1] = w
        return K


def is_connected(n, edges) -> bool:
    if n == 1:
        return True
    if not edges:
        return False
    rows = np.array([e[0] - 1 for e in edges])
    cols = np.array([e[1] - 1 for e in edges])
    A = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(n, n))
    count, _ = connected_components(A, directed=False)
    return count == 1


def _circulant_edges(n, p):
    edges = set()
    for i in range(n):
        for d in range(1, p + 1):
            a, b = i, (i + d) % n
            edges.add((min(a, b) + 1, max(a, b) + 1))
    return [(i, j, 1.0) for i, j in sorted(edges)]


def build_graph(kind: str, n: int, p: int | None = None, edges=None) -> WeightedGraph:
    """Build one of the named unit-weight topologies or validate a custom one.

    Parameters
    ----------
    kind : {"path", "pcycle", "complete", "custom"}
    n : int
        Number of agents, at least 2.
    p : int, optional
        Neighbourhood radius of the ``pcycle`` circulant: agent ``i`` links to
        ``i +/- 1, ..., i +/- p`` modulo ``n``. Requires ``1 <= p <= (n-1)//2``.
    edges : iterable of (i, j, w), optional
        Edge list for ``custom`` graphs, 1-based.
    """
    if kind not in GRAPH_KINDS:
        raise ParameterError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ParameterError(f"n must be an integer >= 2, got {n!r}")
    if kind == "path":
        return WeightedGraph(n, tuple((i, i + 1, 1.0) for i in range(1, n)))
    if kind == "complete":
        return WeightedGraph(
            n, tuple((i, j, 1.0) for i in range(1, n + 1) for j in range(i + 1, n + 1))
        )
    if kind == "pcycle":
        if p is None or not isinstance(p, (int, np.integer)) or not 1 <= p <= (n - 1) // 2:
            raise ParameterError(f"pcycle needs 1 <= p <= {(n - 1) // 2} for n={n}, got p={p!r}")
        return WeightedGraph(n, tuple(_circulant_edges(n, int(p))))
    if edges is None:
        raise ParameterError("custom graphs need an edge list")
    return WeightedGraph(n, tuple(tuple(e) for e in edges))


def read_edge_list(path) -> WeightedGraph:
    """Parse an edge-list file.

    Format: a required ``n <count>`` header, then one ``i j w`` edge per line
    (1-based, whitespace separated). ``#`` starts a comment.
    """
    n = None
    edges = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if fields[0] == "n":
            if n is not None or len(fields) != 2:
                raise ParameterError(f"{path}:{lineno}: malformed or repeated 'n' header")
            n = int(fields[1])
            continue
        if n is None:
            raise ParameterError(f"{path}:{lineno}: edge before the 'n <count>' header")
        if len(fields) != 3:
            raise InvalidEdgeError(f"{path}:{lineno}: expected 'i j w', got {line!r}")
        try:
            edges.append((int(fields[0]), int(fields[1]), float(fields[2])))
        except ValueError as exc:
            raise InvalidEdgeError(f"{path}:{lineno}: {exc}") from None
    if n is None:
        raise ParameterError(f"{path}: missing 'n <count>' header")
    return WeightedGraph(n, tuple(edges))


def write_edge_list(g: WeightedGraph, path) -> None:
    lines = [f"n {g.n}"] + [f"{i} {j} {w!r}" for i, j, w in g.edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def laplacian(g: WeightedGraph) -> np.ndarray:
    """Graph Laplacian ``L = D - K``; rows sum to zero."""
    K = g.adjacency()
    L = -K
    # diagonal as the negated off-diagonal row sum keeps row sums at exactly 0
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


@dataclass(frozen=True)
class SpectralData:
    """Ascending Laplacian eigenvalues and matching orthonormal eigenvectors.

    ``Q[:, k]`` pairs with ``lambdas[k]``. ``lambdas[0]`` is clamped to 0 and
    ``Q[:, 0]`` is the positive constant vector.
    """

    lambdas: np.ndarray
    Q: np.ndarray

    @property
    def n(self) -> int:
        return len(self.lambdas)

    @property
    def lambda_max(self) -> float:
        return float(self.lambdas[-1])


def spectral(L: np.ndarray, rtol: float = 1e-9) -> SpectralData:
    """Eigendecomposition ``L = Q diag(lambdas) Q^T`` with a deterministic sign convention.

    The first eigenvector is made entrywise positive; every other eigenvector
    has its largest-magnitude entry made positive. Within a repeated
    eigenvalue the basis is whatever LAPACK returns.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise InvalidLaplacianError(f"Laplacian must be square, got shape {L.shape}")
    if not np.array_equal(L, L.T):
        raise InvalidLaplacianError("Laplacian is not symmetric")
    try:
        lambdas, Q = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolve failed: {exc}") from exc
    lam_max = abs(lambdas[-1])
    if abs(lambdas[0]) > rtol * lam_max:
        raise InvalidLaplacianError(
            f"smallest eigenvalue {lambdas[0]:.3e} is not zero relative to {lam_max:.3e}"
        )
    lambdas = lambdas.copy()
    lambdas[0] = 0.0
    Q = Q.copy()
    if Q[:, 0].sum() < 0:
        Q[:, 0] *= -1.0
    for k in range(1, Q.shape[1]):
        if Q[np.argmax(np.abs(Q[:, k])), k] < 0:
            Q[:, k] *= -1.0
    lambdas.setflags(write=False)
    Q.setflags(write=False)
    return SpectralData(lambdas, Q)


def max_stable_delay(s: SpectralData) -> float:
    """Largest admissible delay, ``pi / (2 lambda_max)`` (exclusive)."""
    if not s.lambda_max > 0.0:
        raise DegenerateGraphError("largest Laplacian eigenvalue is zero; no delay bound exists")
    return math.pi / (2.0 * s.lambda_max)
