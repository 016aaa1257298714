# == graph.py ==#

from __future__ import annotations

from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from typing_extensions import TypeAlias

from .exceptions import EigenSolverFailure, InvalidEdge, InvalidTopology, NotConnected, ShapeMismatch

__all__: Tuple[str, ...] = (
    'CONNECTIVITY_TOL',
    'Graph',
    'LaplacianBundle',
    'from_edges',
    'kron_apply',
    'laplacian_bundle',
    'random_connected',
    'ring',
)

# Fiedler values at or below this are treated as a disconnected graph.
CONNECTIVITY_TOL = 1e-8

EdgeLike: TypeAlias = Union[Tuple[int, int], Tuple[int, int, float], Sequence[float]]


class Graph:
    """An undirected, weighted, connected communication topology.

    Agents are indexed ``0 .. n_agents - 1`` internally. The public constructors
    :func:`ring` and :func:`from_edges` take the 1-based indices used by the
    config files.

    Parameters
    ----------
    n_agents: :class:`int`
        The number of agents N.
    weights: Dict[Tuple[:class:`int`, :class:`int`], :class:`float`]
        Edge weights keyed by 0-based ``(i, j)`` pairs with ``i < j``.

    Attributes
    ----------
    n_agents: :class:`int`
        The number of agents N.
    edges: Tuple[Tuple[:class:`int`, :class:`int`, :class:`float`], ...]
        Sorted 0-based ``(i, j, a_ij)`` triples with ``i < j``.
    """

    __slots__: Tuple[str, ...] = ('n_agents', 'edges', '_fiedler')

    def __init__(self, n_agents: int, weights: Dict[Tuple[int, int], float]) -> None:
        if n_agents < 1:
            raise InvalidTopology(f'A graph needs at least one agent, got {n_agents}.')
        for (i, j), w in weights.items():
            if not (0 <= i < j < n_agents):
                raise InvalidEdge((i + 1, j + 1, w), f'endpoints must satisfy 1 <= i < j <= {n_agents}')
            if not w > 0:
                raise InvalidEdge((i + 1, j + 1, w), 'weights must be strictly positive')

        self.n_agents: int = n_agents
        self.edges: Tuple[Tuple[int, int, float], ...] = tuple(
            (i, j, float(w)) for (i, j), w in sorted(weights.items())
        )

        # a single agent is trivially connected
        self._fiedler = np.inf
        if n_agents > 1:
            self._fiedler = float(np.linalg.eigvalsh(self.laplacian())[1])
            if self._fiedler <= CONNECTIVITY_TOL:
                raise NotConnected(self._fiedler)

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__} n_agents: {self.n_agents}, edges: {len(self.edges)}>'

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n_agents == other.n_agents and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.n_agents, self.edges))

    @property
    def fiedler(self) -> float:
        """:class:`float`: The second-smallest Laplacian eigenvalue (``inf`` for a single agent)."""
        return self._fiedler

    def adjacency(self) -> np.ndarray:
        """Returns the dense symmetric adjacency matrix ``[a_ij]``."""
        a = np.zeros((self.n_agents, self.n_agents))
        for i, j, w in self.edges:
            a[i, j] = a[j, i] = w
        return a

    def laplacian(self) -> np.ndarray:
        """Returns the dense Laplacian, degree matrix minus adjacency."""
        a = self.adjacency()
        return np.diag(a.sum(axis=1)) - a

    def neighbors(self, agent: int) -> List[int]:
        """Returns the sorted 0-based neighbors of ``agent``."""
        out = [j for i, j, _ in self.edges if i == agent] + [i for i, j, _ in self.edges if j == agent]
        return sorted(out)


class LaplacianBundle(NamedTuple):
    """The Laplacian of a :class:`Graph` together with every spectral quantity the dynamics use.

    All arrays are read-only.

    Attributes
    ----------
    L: :class:`numpy.ndarray`
        The N x N Laplacian.
    lambda_max_L: :class:`float`
        Largest eigenvalue of L.
    lambda_max_LtL: :class:`float`
        Largest eigenvalue of LᵀL.
    fiedler: :class:`float`
        Second-smallest eigenvalue of L.
    gamma: :class:`numpy.ndarray`
        The positive definite matrix Γ = L⁺ + (1/N)𝟙𝟙ᵀ, satisfying LΓ = ΓL = Π.
    pi: :class:`numpy.ndarray`
        The centering projector Π = I - (1/N)𝟙𝟙ᵀ.
    eigenvalues: :class:`numpy.ndarray`
        Ascending eigenvalues of L.
    eigenvectors: :class:`numpy.ndarray`
        Orthonormal eigenvectors of L as columns; column 0 spans the consensus direction.
    """

    L: np.ndarray
    lambda_max_L: float
    lambda_max_LtL: float
    fiedler: float
    gamma: np.ndarray
    pi: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n_agents(self) -> int:
        return self.L.shape[0]

    @property
    def disagreement_basis(self) -> np.ndarray:
        """:class:`numpy.ndarray`: N x (N-1) orthonormal basis of the zero-sum subspace 𝟙⊥."""
        return self.eigenvectors[:, 1:]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def ring(n: int) -> Graph:
    """Builds the cycle graph on ``n`` agents with unit weights.

    Raises
    ------
    InvalidTopology
        If ``n < 3``.
    """
    if n < 3:
        raise InvalidTopology(f'A ring needs at least 3 agents, got {n}.')
    weights = {}
    for i in range(n):
        j = (i + 1) % n
        weights[(min(i, j), max(i, j))] = 1.0
    return Graph(n, weights)


def from_edges(n: int, edges: Iterable[EdgeLike]) -> Graph:
    """Builds a graph from 1-based ``(i, j)`` or ``(i, j, weight)`` entries.

    Repeated pairs in either orientation collapse into one edge; repeating a
    pair with a different weight is an error.
    """
    weights: Dict[Tuple[int, int], float] = {}
    for edge in edges:
        if len(edge) not in (2, 3):
            raise InvalidEdge(edge, 'expected (i, j) or (i, j, weight)')
        if not all(float(v).is_integer() for v in edge[:2]):
            raise InvalidEdge(edge, 'indices must be integers')
        i, j = int(edge[0]), int(edge[1])
        w = float(edge[2]) if len(edge) == 3 else 1.0
        if i == j:
            raise InvalidEdge(edge, 'self-loops are not allowed')
        if not (1 <= i <= n and 1 <= j <= n):
            raise InvalidEdge(edge, f'indices must lie in 1..{n}')
        if not w > 0:
            raise InvalidEdge(edge, 'weights must be strictly positive')

        key = (min(i, j) - 1, max(i, j) - 1)
        if key in weights and weights[key] != w:
            raise InvalidEdge(edge, f'conflicts with an earlier weight {weights[key]}')
        weights[key] = w

    return Graph(n, weights)


def random_connected(
    n: int, extra_edge_prob: float = 0.3, seed: Optional[int] = None, *, weighted: bool = False
) -> Graph:
    """Builds a random connected graph: a random spanning tree plus independent extra edges.

    Parameters
    ----------
    n: :class:`int`
        The number of agents, at least 2.
    extra_edge_prob: :class:`float`
        Probability of adding each non-tree pair.
    seed: Optional[:class:`int`]
        Seed for :func:`numpy.random.default_rng`.
    weighted: :class:`bool`
        Draw weights uniformly from [0.5, 2] instead of using unit weights.
    """
    if n < 2:
        raise InvalidTopology(f'A random connected graph needs at least 2 agents, got {n}.')
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    pairs = set()
    for k in range(1, n):
        parent = order[rng.integers(k)]
        a, b = int(order[k]), int(parent)
        pairs.add((min(a, b), max(a, b)))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in pairs and rng.random() < extra_edge_prob:
                pairs.add((i, j))

    weights = {}
    for pair in sorted(pairs):
        weights[pair] = float(rng.uniform(0.5, 2.0)) if weighted else 1.0
    return Graph(n, weights)


def laplacian_bundle(g: Graph) -> LaplacianBundle:
    """Assembles the Laplacian of ``g`` and its spectral data.

    Γ is built as the pseudoinverse of L plus the rank-one consensus projector.
    The pseudoinverse inverts every eigenvalue except the single zero one,
    since ``g`` is connected.

    Raises
    ------
    EigenSolverFailure
        If the symmetric eigensolver does not converge.
    """
    L = g.laplacian()
    n = g.n_agents
    try:
        evals, evecs = scipy.linalg.eigh(L)
        ltl = scipy.linalg.eigh(L.T @ L, eigvals_only=True)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverFailure('the Laplacian', f'{exc} (N = {n}, edges = {len(g.edges)})') from exc

    consensus = np.full((n, n), 1.0 / n)
    pinv = np.zeros((n, n))
    if n > 1:
        vecs = evecs[:, 1:]
        pinv = (vecs / evals[1:]) @ vecs.T
    gamma = pinv + consensus
    gamma = 0.5 * (gamma + gamma.T)

    return LaplacianBundle(
        L=_frozen(L),
        lambda_max_L=float(evals[-1]),
        lambda_max_LtL=float(ltl[-1]),
        fiedler=float(evals[1]) if n > 1 else float('inf'),
        gamma=_frozen(gamma),
        pi=_frozen(np.eye(n) - consensus),
        eigenvalues=_frozen(evals),
        eigenvectors=_frozen(evecs),
    )


def kron_apply(L: np.ndarray, n: int, x: np.ndarray) -> np.ndarray:
    """Computes ``(L ⊗ I_n) x`` blockwise, without forming the Kronecker product.

    ``x`` is the stacked vector ``col(x_1, ..., x_N)`` with each block in R^n.
    """
    x = np.asarray(x, dtype=float)
    size = L.shape[0] * n
    if x.ndim != 1 or x.size != size:
        raise ShapeMismatch('stacked vector', (size,), x.shape)
    return (L @ x.reshape(L.shape[0], n)).reshape(-1)
