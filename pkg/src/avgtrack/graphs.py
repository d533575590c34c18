"""Undirected graph topology, Laplacian algebra, and the expected network
under random link failures.

Nodes are 0-indexed internally.  Text files label nodes 1..N and are
translated at the boundary (see ``parse_graph_text``).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "ConfigurationError",
    "Graph",
    "DropModel",
    "WeightedLaplacian",
    "laplacian",
    "expected_laplacian",
    "symmetric_eigen",
    "jacobi_eigh",
    "is_connected",
    "normalize_edge",
    "parse_graph_text",
    "load_graph_file",
]

Edge = tuple[int, int]

# Off-diagonal Frobenius norm at which a Jacobi sweep is considered converged,
# relative to max(1, ||A||_F).
_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 100


class ConfigurationError(ValueError):
    """A graph, drop model, or scenario field is structurally invalid."""


def normalize_edge(i: int, j: int) -> Edge:
    """Return the unordered pair (i, j) as a (low, high) tuple."""
    if i == j:
        raise ConfigurationError(f"self-loop on node {i} is not allowed")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes 0..node_count-1.

    Edges are stored as sorted (low, high) pairs with no duplicates and no
    self-loops; the adjacency matrix is symmetric 0/1 with zero diagonal.
    """

    node_count: int
    edges: tuple[Edge, ...]

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise ConfigurationError("graph needs at least one node")
        seen: set[Edge] = set()
        for i, j in self.edges:
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise ConfigurationError(f"edge ({i}, {j}) references a missing node")
            if i >= j:
                raise ConfigurationError(f"edge ({i}, {j}) must be stored as (low, high)")
            if (i, j) in seen:
                raise ConfigurationError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        """Build a graph from arbitrary (i, j) pairs, normalizing order."""
        normalized = sorted({normalize_edge(i, j) for i, j in edges})
        return cls(node_count, tuple(normalized))

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count))
        for i, j in self.edges:
            a[i, j] = 1.0
            a[j, i] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.node_count)
        for i, j in self.edges:
            d[i] += 1.0
            d[j] += 1.0
        return d

    def max_degree(self) -> float:
        return float(self.degrees().max()) if self.node_count else 0.0

    def neighbor_lists(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.node_count)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs


@dataclass(frozen=True)
class DropModel:
    """Per-edge Bernoulli failure probabilities, keyed on (low, high) pairs.

    A link fails (contributes nothing this step) with probability p in
    [0, 1); p = 1 would disconnect the edge permanently and is rejected.
    """

    probabilities: dict[Edge, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for edge, p in self.probabilities.items():
            i, j = edge
            if normalize_edge(i, j) != edge:
                raise ConfigurationError(f"drop-model key {edge} must be a (low, high) pair")
            if not (0.0 <= p < 1.0):
                raise ConfigurationError(
                    f"drop probability for edge {edge} must lie in [0, 1), got {p}"
                )

    @classmethod
    def uniform(cls, graph: Graph, p: float) -> "DropModel":
        return cls({edge: float(p) for edge in graph.edges})

    def probability(self, i: int, j: int) -> float:
        edge = normalize_edge(i, j)
        try:
            return self.probabilities[edge]
        except KeyError:
            raise ConfigurationError(f"no drop probability configured for edge {edge}") from None

    def covers(self, graph: Graph) -> bool:
        return set(self.probabilities) == set(graph.edges)


@dataclass(frozen=True)
class WeightedLaplacian:
    """Symmetric matrix with zero row sums, nonpositive off-diagonal entries,
    and nonnegative diagonal.  Holds nominal, realized, and expected
    Laplacians alike."""

    size: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        if entries.shape != (self.size, self.size):
            raise ConfigurationError(
                f"laplacian entries must be {self.size}x{self.size}, got {entries.shape}"
            )
        scale = max(1.0, float(np.abs(entries).max(initial=0.0)))
        if np.abs(entries - entries.T).max(initial=0.0) > 1e-12 * scale:
            raise ConfigurationError("laplacian entries must be symmetric")
        row_sums = entries.sum(axis=1)
        if np.abs(row_sums).max(initial=0.0) > 1e-12 * max(1.0, scale):
            raise ConfigurationError("laplacian rows must sum to zero")
        off = entries - np.diag(np.diag(entries))
        if off.max(initial=0.0) > 1e-12 * scale:
            raise ConfigurationError("off-diagonal laplacian entries must be nonpositive")
        if np.diag(entries).min(initial=0.0) < -1e-12 * scale:
            raise ConfigurationError("diagonal laplacian entries must be nonnegative")

    def max_diagonal(self) -> float:
        """Largest diagonal entry: the maximum (expected) degree."""
        return float(np.diag(self.entries).max()) if self.size else 0.0


def laplacian(graph: Graph) -> WeightedLaplacian:
    """Nominal Laplacian D - A of the graph."""
    a = graph.adjacency()
    entries = np.diag(a.sum(axis=1)) - a
    return WeightedLaplacian(graph.node_count, entries)


def expected_laplacian(graph: Graph, drops: DropModel) -> WeightedLaplacian:
    """Expectation of the per-step realized Laplacian under the drop model.

    Off-diagonal entry (i, j) is -(1 - p_ij) for each edge; the diagonal
    carries the matching row sums, so rows sum to zero exactly.
    """
    if not drops.covers(graph):
        missing = set(graph.edges) - set(drops.probabilities)
        extra = set(drops.probabilities) - set(graph.edges)
        parts = []
        if missing:
            parts.append(f"missing probabilities for edges {sorted(missing)}")
        if extra:
            parts.append(f"probabilities for non-edges {sorted(extra)}")
        raise ConfigurationError("drop model does not match graph: " + "; ".join(parts))
    w = np.zeros((graph.node_count, graph.node_count))
    for (i, j), p in drops.probabilities.items():
        w[i, j] = 1.0 - p
        w[j, i] = 1.0 - p
    entries = np.diag(w.sum(axis=1)) - w
    return WeightedLaplacian(graph.node_count, entries)


def jacobi_eigh(matrix: np.ndarray, max_sweeps: int = _JACOBI_MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a real symmetric matrix.

    Givens rotations zero out off-diagonal entries sweep by sweep until the
    off-diagonal Frobenius norm drops below 1e-12 * max(1, ||A||_F).  Chosen
    for unconditional robustness on symmetric input at the target scale
    (dense, N <= 256).

    Returns (eigenvalues ascending, eigenvectors as matching columns).
    """
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return np.array([a[0, 0]]), v
    tol = _JACOBI_TOL * max(1.0, float(np.linalg.norm(a)))
    skip = tol / (10.0 * n * n)
    for _ in range(max_sweeps):
        off = float(np.sqrt(np.sum(np.square(a)) - np.sum(np.square(np.diag(a)))))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    else:
        raise ArithmeticError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    return values[order], v[:, order]


def symmetric_eigen(
    matrix: "WeightedLaplacian | np.ndarray", with_vectors: bool = False
) -> "np.ndarray | tuple[np.ndarray, np.ndarray]":
    """Eigenvalues (ascending) of a symmetric matrix, optionally with an
    orthonormal eigenvector per column.

    Raises ValueError if the input is not symmetric.
    """
    a = matrix.entries if isinstance(matrix, WeightedLaplacian) else np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if np.abs(a - a.T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError("symmetric_eigen requires a symmetric matrix")
    values, vectors = jacobi_eigh(a)
    if with_vectors:
        return values, vectors
    return values


def is_connected(graph: Graph) -> bool:
    """Structural connectivity by traversal from node 0.

    Traversal rather than a spectral test: the second-smallest Laplacian
    eigenvalue near zero is numerically fragile, so the spectral view is
    used only as a cross-check in tests.
    """
    if graph.node_count == 1:
        return True
    nbrs = graph.neighbor_lists()
    seen = [False] * graph.node_count
    seen[0] = True
    queue = deque([0])
    reached = 1
    while queue:
        u = queue.popleft()
        for w in nbrs[u]:
            if not seen[w]:
                seen[w] = True
                reached += 1
                queue.append(w)
    return reached == graph.node_count


def connected_pattern(entries: np.ndarray) -> bool:
    """Connectivity of the sparsity pattern of a symmetric matrix (nonzero
    off-diagonal entries are treated as edges)."""
    n = entries.shape[0]
    if n == 1:
        return True
    edges = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if entries[i, j] != 0.0
    ]
    return is_connected(Graph.from_edges(n, edges))


def parse_graph_text(text: str, source: str = "<string>") -> tuple[Graph, "DropModel | None"]:
    """Parse the graph text format.

    First meaningful line: the node count N.  Each following line is one
    edge, either "i j" or "i j p" with 1-indexed node labels and an optional
    drop probability p in [0, 1).  Blank lines and '#' comments are ignored.

    Returns the graph and, when any line carried a probability, a DropModel
    covering every edge (edges without an explicit p default to 0).
    """
    node_count: int | None = None
    edges: list[Edge] = []
    probs: dict[Edge, float] = {}
    saw_probability = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if node_count is None:
            if len(tokens) != 1:
                raise ConfigurationError(f"{source}:{lineno}: expected the node count alone")
            try:
                node_count = int(tokens[0])
            except ValueError:
                raise ConfigurationError(f"{source}:{lineno}: node count must be an integer") from None
            if node_count < 1:
                raise ConfigurationError(f"{source}:{lineno}: node count must be positive")
            continue
        if len(tokens) not in (2, 3):
            raise ConfigurationError(f"{source}:{lineno}: expected 'i j' or 'i j p'")
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ConfigurationError(f"{source}:{lineno}: node labels must be integers") from None
        if not (1 <= i <= node_count and 1 <= j <= node_count):
            raise ConfigurationError(f"{source}:{lineno}: node labels must lie in 1..{node_count}")
        edge = normalize_edge(i - 1, j - 1)
        if edge in probs:
            raise ConfigurationError(f"{source}:{lineno}: duplicate edge {i} {j}")
        p = 0.0
        if len(tokens) == 3:
            try:
                p = float(tokens[2])
            except ValueError:
                raise ConfigurationError(f"{source}:{lineno}: drop probability must be a number") from None
            if not (0.0 <= p < 1.0):
                raise ConfigurationError(
                    f"{source}:{lineno}: drop probability must lie in [0, 1), got {p}"
                )
            saw_probability = True
        edges.append(edge)
        probs[edge] = p
    if node_count is None:
        raise ConfigurationError(f"{source}: empty graph file (node count missing)")
    graph = Graph(node_count, tuple(sorted(edges)))
    drops = DropModel(dict(probs)) if saw_probability else None
    return graph, drops


def load_graph_file(path) -> tuple[Graph, "DropModel | None"]:
    """Read and parse a graph text file; errors name the file and line."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_graph_text(fh.read(), source=str(path))
