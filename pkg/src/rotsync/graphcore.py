"""Measurement graphs, information-weighted Laplacians and their spectra.

Nodes are 0-based internally; the CLI converts from the 1-based file format.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph

from .errors import DimensionMismatchError, GraphError, IllPosedError, InvalidSourceError
from .noise import DEFAULT_QUAD, NoiseModel, QuadratureSpec, info_weight

MAX_DENSE_NODES = 5000


@dataclass(frozen=True)
class MeasurementGraph:
    """Undirected graph with one noise model per edge.

    ``edges`` holds ``(i, j, model)`` triples with ``i < j``. Pairs given as
    ``(j, i)`` are normalized; a pair listed twice in either order is rejected.
    """

    N: int
    edges: tuple
    anchors: tuple = ()
    n: int = 3

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise GraphError(f"node count must be a positive integer, got {self.N}")
        seen = set()
        normalized = []
        for e in self.edges:
            if len(e) != 3:
                raise GraphError(f"edge must be (i, j, model), got {e!r}")
            i, j, model = int(e[0]), int(e[1]), e[2]
            if not (0 <= i < self.N and 0 <= j < self.N):
                raise GraphError(f"edge ({i}, {j}) references a node outside 0..{self.N - 1}")
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not isinstance(model, NoiseModel):
                raise GraphError(f"edge ({i}, {j}) needs a NoiseModel, got {type(model).__name__}")
            if model.n != self.n:
                raise DimensionMismatchError(
                    f"edge ({i}, {j}) has a model on SO({model.n}), graph is SO({self.n})"
                )
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"duplicate measurement for pair {key}")
            seen.add(key)
            normalized.append((key[0], key[1], model))
        anchors = tuple(sorted({int(a) for a in self.anchors}))
        if len(anchors) != len(tuple(self.anchors)):
            raise GraphError("anchor list contains duplicates")
        for a in anchors:
            if not 0 <= a < self.N:
                raise GraphError(f"anchor {a} outside 0..{self.N - 1}")
        object.__setattr__(self, "edges", tuple(normalized))
        object.__setattr__(self, "anchors", anchors)

    @property
    def M(self) -> int:
        return len(self.edges)

    @property
    def pairs(self) -> np.ndarray:
        if not self.edges:
            return np.zeros((0, 2), dtype=int)
        return np.array([(i, j) for i, j, _ in self.edges], dtype=int)

    def with_anchors(self, anchors: Iterable[int]) -> "MeasurementGraph":
        return MeasurementGraph(self.N, self.edges, tuple(anchors), self.n)

    def neighbors(self, i: int) -> list:
        return sorted([b if a == i else a for a, b, _ in self.edges if i in (a, b)])

    @classmethod
    def uniform_model(cls, N, pairs, model: NoiseModel, anchors=()) -> "MeasurementGraph":
        """Graph where every edge carries the same noise model."""
        return cls(N, tuple((int(i), int(j), model) for i, j in pairs), tuple(anchors), model.n)


@dataclass(frozen=True)
class WeightedLaplacian:
    N: int
    matrix: np.ndarray
    weights: np.ndarray
    pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))


@dataclass(frozen=True)
class MaskedLaplacian:
    N: int
    matrix: np.ndarray
    anchors: tuple
    base: WeightedLaplacian


def laplacian_from_weights(N: int, pairs, weights) -> WeightedLaplacian:
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if len(weights) != len(pairs):
        raise GraphError("one weight per edge is required")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise GraphError("edge weights must be finite and non-negative")
    L = np.zeros((N, N))
    if len(pairs):
        i, j = pairs[:, 0], pairs[:, 1]
        np.add.at(L, (i, j), -weights)
        np.add.at(L, (j, i), -weights)
        np.add.at(L, (i, i), weights)
        np.add.at(L, (j, j), weights)
    return WeightedLaplacian(N, L, weights, pairs)


def edge_weights(g: MeasurementGraph, spec: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """Information weight of every edge; each distinct model is integrated once."""
    cache = {}
    out = np.empty(g.M)
    for k, (_, _, model) in enumerate(g.edges):
        if model not in cache:
            cache[model] = info_weight(model, spec)
        out[k] = cache[model]
    return out


def build_laplacian(g: MeasurementGraph, spec: QuadratureSpec = DEFAULT_QUAD) -> WeightedLaplacian:
    return laplacian_from_weights(g.N, g.pairs, edge_weights(g, spec))


def mask_anchors(L: WeightedLaplacian, anchors: Sequence[int]) -> MaskedLaplacian:
    anchors = tuple(sorted({int(a) for a in anchors}))
    for a in anchors:
        if not 0 <= a < L.N:
            raise GraphError(f"anchor {a} outside 0..{L.N - 1}")
    LA = L.matrix.copy()
    if anchors:
        idx = np.array(anchors)
        LA[idx, :] = 0.0
        LA[:, idx] = 0.0
    return MaskedLaplacian(L.N, LA, anchors, L)


def _components(matrix: np.ndarray) -> np.ndarray:
    """Component labels of the graph whose edges are the nonzero off-diagonals."""
    adj = scipy.sparse.csr_matrix((matrix != 0) & ~np.eye(len(matrix), dtype=bool))
    _, labels = scipy.sparse.csgraph.connected_components(adj, directed=False)
    return labels


def connected_components(L: WeightedLaplacian) -> np.ndarray:
    """Component label per node; zero-weight edges count as absent."""
    return _components(L.matrix)


def is_connected(L: WeightedLaplacian) -> bool:
    return L.N <= 1 or len(np.unique(connected_components(L))) == 1


def unanchored_components(L: WeightedLaplacian, anchors: Sequence[int]) -> list:
    """Labels of components that contain no anchor."""
    labels = connected_components(L)
    anchored = {labels[a] for a in anchors}
    return sorted(set(labels.tolist()) - anchored)


@dataclass(frozen=True)
class SpectralKernel:
    """Eigendecomposition of a (possibly masked) Laplacian, with its pseudoinverse.

    Eigenvalues at or below ``cutoff = N * eps * lambda_max`` are treated as zero.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    cutoff: float
    source: str
    anchors: tuple = ()

    @property
    def N(self) -> int:
        return len(self.eigenvalues)

    @property
    def rank(self) -> int:
        return int(np.sum(self.eigenvalues > self.cutoff))

    @property
    def nullity(self) -> int:
        return self.N - self.rank

    @property
    def inverse_eigenvalues(self) -> np.ndarray:
        lam = self.eigenvalues
        keep = lam > self.cutoff
        out = np.zeros_like(lam)
        out[keep] = 1.0 / lam[keep]
        return out

    @property
    def pinv(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.inverse_eigenvalues) @ V.T

    def matrix(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def spectral_kernel(L) -> SpectralKernel:
    if isinstance(L, MaskedLaplacian):
        source, anchors = "masked", L.anchors
    elif isinstance(L, WeightedLaplacian):
        source, anchors = "plain", ()
    else:
        raise TypeError("spectral_kernel expects a WeightedLaplacian or MaskedLaplacian")
    if L.N > MAX_DENSE_NODES:
        raise GraphError(
            f"N={L.N} exceeds the dense eigensolver limit of {MAX_DENSE_NODES} nodes"
        )
    A = L.matrix
    try:
        # the divide-and-conquer driver resolves near-zero eigenvalues to ~eps * lambda_max;
        # the default MRRR driver can leave them two orders of magnitude larger
        lam, V = scipy.linalg.eigh(A, driver="evd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise IllPosedError(f"eigendecomposition failed: {exc}") from None
    lam_max = max(float(np.max(np.abs(lam))), 0.0) if len(lam) else 0.0
    cutoff = L.N * np.finfo(float).eps * lam_max
    lam = np.where(np.abs(lam) <= cutoff, 0.0, lam)
    return SpectralKernel(lam, V, cutoff, source, tuple(anchors))


def trace_pinv(k: SpectralKernel) -> float:
    return float(np.sum(k.inverse_eigenvalues))


def fiedler_pair(k: SpectralKernel):
    """Second-smallest eigenvalue of a plain Laplacian and its eigenvector."""
    if k.source != "plain":
        raise InvalidSourceError("the Fiedler value is defined for the plain Laplacian only")
    if k.N < 2:
        raise GraphError("the Fiedler value needs at least two nodes")
    return float(k.eigenvalues[1]), k.eigenvectors[:, 1].copy()


def fiedler_value(k: SpectralKernel) -> float:
    return fiedler_pair(k)[0]


def _check_node(k, i, name="node"):
    if int(i) != i or not 0 <= i < k.N:
        raise GraphError(f"{name} {i} outside 0..{k.N - 1}")
    return int(i)


def ectd_quad(k: SpectralKernel, i: int, j: int) -> float:
    """Squared commute-time distance (e_i - e_j)^T L^+ (e_i - e_j)."""
    i, j = _check_node(k, i), _check_node(k, j)
    if i == j:
        raise GraphError("ectd_quad needs two distinct nodes")
    diff = k.eigenvectors[i] - k.eigenvectors[j]
    return float(np.sum(diff * diff * k.inverse_eigenvalues))


def anchored_diag(k: SpectralKernel, i: int) -> float:
    """(L_A^+)_ii for a masked kernel; anchors give 0."""
    i = _check_node(k, i)
    if k.source != "masked":
        raise InvalidSourceError("anchored_diag needs a kernel of the masked Laplacian")
    if i in k.anchors:
        return 0.0
    v = k.eigenvectors[i]
    return float(np.sum(v * v * k.inverse_eigenvalues))


def random_walk_pinv(L: WeightedLaplacian, anchors: Sequence[int]) -> np.ndarray:
    """L_A^+ via the random-walk form (J (I - D^-1 A) J)^+ D^-1.

    J is the diagonal selector of the non-anchor nodes. Every node needs
    positive degree.
    """
    deg = np.diag(L.matrix).copy()
    if np.any(deg <= 0):
        raise IllPosedError("random-walk form needs every node to have positive degree")
    adj = np.diag(deg) - L.matrix
    P = adj / deg[:, None]
    J = np.ones(L.N)
    J[list(anchors)] = 0.0
    T = J[:, None] * (np.eye(L.N) - P) * J[None, :]
    return np.linalg.pinv(T) / deg[None, :]
