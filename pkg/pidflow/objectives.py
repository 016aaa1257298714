# == objectives.py ==#

from __future__ import annotations

import logging
from typing import Iterable, List, Literal, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .exceptions import InvalidBenchmark, NotStronglyConvex, ObjectiveError, OracleFailure, ShapeMismatch

__all__: Tuple[str, ...] = (
    'EXAMPLE1_TRIG_TERMS',
    'ObjectiveSet',
    'Quadratic',
    'TrigPerturbedQuadratic',
    'TrigTerm',
    'central_minimizer',
    'example1_trig_set',
    'grad_local',
    'hessian_local',
    'quadratic_set',
    'random_quadratic_set',
    'stacked_grad',
)

logger = logging.getLogger(__name__)

_SYMMETRY_TOL = 1e-12
_PSD_TOL = 1e-10


class TrigTerm(NamedTuple):
    """A scalar perturbation ``amplitude * Σ_k shape(z_k)``."""

    shape: Literal['sin', 'cos']
    amplitude: float


class Quadratic:
    """The quadratic cost ``½ zᵀQz + qᵀz`` with symmetric positive semidefinite Q.

    Every local objective f_i is a :class:`Quadratic`, possibly perturbed.

    Parameters
    ----------
    Q: :class:`numpy.ndarray`
        An n x n symmetric PSD matrix.
    q: :class:`numpy.ndarray`
        The linear term, an n-vector.

    Attributes
    ----------
    dim: :class:`int`
        The dimension n of the decision variable.
    """

    __slots__: Tuple[str, ...] = ('dim', 'Q', 'q')

    def __init__(self, Q: np.ndarray, q: np.ndarray) -> None:
        Q = np.array(Q, dtype=float)
        q = np.array(q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ShapeMismatch('Q', '(n, n)', Q.shape)
        if q.shape != (Q.shape[0],):
            raise ShapeMismatch('q', (Q.shape[0],), q.shape)
        if np.linalg.norm(Q - Q.T) > _SYMMETRY_TOL * max(1.0, np.linalg.norm(Q)):
            raise ObjectiveError('Q must be symmetric.')
        if Q.shape[0] and np.linalg.eigvalsh(Q)[0] < -_PSD_TOL:
            raise ObjectiveError('Q must be positive semidefinite.')

        Q.setflags(write=False)
        q.setflags(write=False)
        self.dim: int = Q.shape[0]
        self.Q = Q
        self.q = q

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__} dim: {self.dim}>'

    def _check(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ShapeMismatch('decision variable', (self.dim,), z.shape)
        return z

    @property
    def trig_terms(self) -> Tuple[TrigTerm, ...]:
        return ()

    def value(self, z: np.ndarray) -> float:
        z = self._check(z)
        return float(0.5 * z @ self.Q @ z + self.q @ z)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        z = self._check(z)
        return self.Q @ z + self.q

    def hessian(self, z: np.ndarray) -> np.ndarray:
        self._check(z)
        return np.array(self.Q)


class TrigPerturbedQuadratic(Quadratic):
    """A quadratic cost plus trigonometric terms applied to every coordinate.

    ``sin(z)`` for a vector z reads as ``Σ_k sin(z_k)``, so each term adds a
    componentwise gradient. The perturbed function may be nonconvex.

    Parameters
    ----------
    Q: :class:`numpy.ndarray`
        An n x n symmetric PSD matrix.
    q: :class:`numpy.ndarray`
        The linear term.
    trig_terms: Iterable[:class:`TrigTerm`]
        The perturbations to add.
    """

    __slots__: Tuple[str, ...] = ('_trig_terms',)

    def __init__(self, Q: np.ndarray, q: np.ndarray, trig_terms: Iterable[TrigTerm]) -> None:
        super().__init__(Q, q)
        terms = tuple(TrigTerm(shape, float(amplitude)) for shape, amplitude in trig_terms)
        for term in terms:
            if term.shape not in ('sin', 'cos'):
                raise ObjectiveError(f'Unknown trig shape {term.shape!r}, expected sin or cos.')
        self._trig_terms = terms

    def __repr__(self) -> str:
        terms = ', '.join(f'{t.amplitude:+g} {t.shape}' for t in self._trig_terms)
        return f'<{self.__class__.__name__} dim: {self.dim}, terms: [{terms}]>'

    @property
    def trig_terms(self) -> Tuple[TrigTerm, ...]:
        return self._trig_terms

    @property
    def sin_amplitude(self) -> float:
        return float(sum(t.amplitude for t in self._trig_terms if t.shape == 'sin'))

    @property
    def cos_amplitude(self) -> float:
        return float(sum(t.amplitude for t in self._trig_terms if t.shape == 'cos'))

    def value(self, z: np.ndarray) -> float:
        z = self._check(z)
        return super().value(z) + self.sin_amplitude * float(np.sin(z).sum()) + self.cos_amplitude * float(np.cos(z).sum())

    def gradient(self, z: np.ndarray) -> np.ndarray:
        z = self._check(z)
        return super().gradient(z) + self.sin_amplitude * np.cos(z) - self.cos_amplitude * np.sin(z)

    def hessian(self, z: np.ndarray) -> np.ndarray:
        z = self._check(z)
        diag = -self.sin_amplitude * np.sin(z) - self.cos_amplitude * np.cos(z)
        return super().hessian(z) + np.diag(diag)


def grad_local(obj: Quadratic, z: np.ndarray) -> np.ndarray:
    """Returns ∇f_i(z)."""
    return obj.gradient(z)


def hessian_local(obj: Quadratic, z: np.ndarray) -> np.ndarray:
    """Returns the analytic Hessian of f_i at z."""
    return obj.hessian(z)


class ObjectiveSet:
    """The N local objectives of a problem together with the constants of their sum.

    Parameters
    ----------
    locals: Sequence[:class:`Quadratic`]
        One objective per agent, all of the same dimension.
    m_global: Optional[:class:`float`]
        Strong-convexity constant of Σf_i. Computed from the curvature bounds if omitted.
    l_global: Optional[:class:`float`]
        Smoothness constant of Σf_i. Computed from the curvature bounds if omitted.
    seed: Optional[:class:`int`]
        The seed the set was generated from, recorded for provenance.

    Attributes
    ----------
    n_agents: :class:`int`
        The number of agents N.
    dim: :class:`int`
        The dimension n of the decision variable.
    """

    __slots__: Tuple[str, ...] = (
        'locals',
        'm_global',
        'l_global',
        'seed',
        'n_agents',
        'dim',
        '_Q',
        '_q',
        '_sin',
        '_cos',
    )

    def __init__(
        self,
        locals: Sequence[Quadratic],
        *,
        m_global: Optional[float] = None,
        l_global: Optional[float] = None,
        seed: Optional[int] = None,
    ) -> None:
        if not locals:
            raise ObjectiveError('An objective set needs at least one local objective.')
        dims = {obj.dim for obj in locals}
        if len(dims) != 1:
            raise ObjectiveError(f'All local objectives must share one dimension, got {sorted(dims)}.')

        self.locals: Tuple[Quadratic, ...] = tuple(locals)
        self.n_agents = len(self.locals)
        self.dim = dims.pop()
        self.seed = seed

        self._Q = np.stack([obj.Q for obj in self.locals])
        self._q = np.stack([obj.q for obj in self.locals])
        self._sin = np.array([getattr(obj, 'sin_amplitude', 0.0) for obj in self.locals])
        self._cos = np.array([getattr(obj, 'cos_amplitude', 0.0) for obj in self.locals])

        if m_global is None or l_global is None:
            m_bound, l_bound = self._curvature_bounds()
            m_global = m_bound if m_global is None else m_global
            l_global = l_bound if l_global is None else l_global
        # curvature below rounding noise of the largest eigenvalue counts as zero
        if not m_global > _PSD_TOL * max(1.0, abs(l_global)):
            raise NotStronglyConvex(m_global)
        if l_global < m_global:
            raise ObjectiveError(f'l_global ({l_global}) must not be smaller than m_global ({m_global}).')
        self.m_global = float(m_global)
        self.l_global = float(l_global)

    def __repr__(self) -> str:
        return (
            f'<{self.__class__.__name__} n_agents: {self.n_agents}, dim: {self.dim}, '
            f'm_global: {self.m_global:.4g}, l_global: {self.l_global:.4g}>'
        )

    def _curvature_bounds(self) -> Tuple[float, float]:
        # the trig part of Σf_i contributes a diagonal Hessian bounded by hypot(Σsin, Σcos)
        evals = np.linalg.eigvalsh(self.summed_Q)
        wobble = float(np.hypot(self._sin.sum(), self._cos.sum()))
        return float(evals[0]) - wobble, float(evals[-1]) + wobble

    @property
    def has_trig(self) -> bool:
        """:class:`bool`: Whether any local objective carries trig terms."""
        return bool(np.any(self._sin) or np.any(self._cos))

    @property
    def summed_Q(self) -> np.ndarray:
        """:class:`numpy.ndarray`: ΣQ_i."""
        return self._Q.sum(axis=0)

    @property
    def summed_q(self) -> np.ndarray:
        """:class:`numpy.ndarray`: Σq_i."""
        return self._q.sum(axis=0)

    def value(self, z: np.ndarray) -> float:
        """Evaluates the global objective Σf_i at a common point z."""
        return float(sum(obj.value(z) for obj in self.locals))

    def summed_gradient(self, z: np.ndarray) -> np.ndarray:
        """Returns Σ∇f_i(z) at a common point z."""
        out = np.zeros(self.dim)
        for obj in self.locals:
            out += obj.gradient(z)
        return out

    def summed_hessian(self, z: np.ndarray) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for obj in self.locals:
            out += obj.hessian(z)
        return out

    def local_hessians(self, x: np.ndarray) -> np.ndarray:
        """Returns the (N, n, n) stack of local Hessians at the blocks of a stacked vector."""
        blocks = self._blocks(x)
        return np.stack([obj.hessian(block) for obj, block in zip(self.locals, blocks)])

    def _blocks(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        size = self.n_agents * self.dim
        if x.ndim != 1 or x.size != size:
            raise ShapeMismatch('stacked vector', (size,), x.shape)
        return x.reshape(self.n_agents, self.dim)

    def stacked_grad(self, x: np.ndarray) -> np.ndarray:
        """Returns col(∇f_1(x_1), ..., ∇f_N(x_N)) for a stacked vector of length N·n."""
        X = self._blocks(x)
        g = np.einsum('ijk,ik->ij', self._Q, X) + self._q
        if self.has_trig:
            g += self._sin[:, None] * np.cos(X) - self._cos[:, None] * np.sin(X)
        return g.reshape(-1)


def stacked_grad(set: ObjectiveSet, x: np.ndarray) -> np.ndarray:
    """Returns the stacked gradient ∇f(x) of ``set`` at ``x``."""
    return set.stacked_grad(x)


def central_minimizer(
    set: ObjectiveSet, tol: float = 1e-12, *, max_iter: int = 100
) -> np.ndarray:
    """Computes the minimizer z* of Σf_i without using the network.

    Pure quadratic sets are solved with one Cholesky solve of ``(ΣQ_i) z = -Σq_i``.
    Anything else runs damped Newton on Σf_i from the quadratic solution,
    halving the step until the Armijo condition holds.

    Parameters
    ----------
    set: :class:`ObjectiveSet`
        The objectives to minimize.
    tol: :class:`float`
        Target norm of Σ∇f_i(z*). Iteration also stops once the gradient reaches
        its roundoff floor.
    max_iter: :class:`int`
        Newton iteration cap.

    Raises
    ------
    OracleFailure
        If ΣQ_i cannot be factorized, or Newton does not converge within ``max_iter`` iterations.
    """
    Q = set.summed_Q
    q = set.summed_q
    try:
        z = scipy.linalg.solve(Q, -q, assume_a='pos')
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        logger.debug('quadratic oracle solve failed: %s', exc)
        raise OracleFailure(float(np.linalg.norm(q)), 0) from exc
    if not np.all(np.isfinite(z)):
        raise OracleFailure(float(np.linalg.norm(q)), 0)
    if not set.has_trig:
        logger.debug('quadratic oracle residual %.3e', np.linalg.norm(Q @ z + q))
        return z

    # gradients cannot be resolved below the rounding noise of the terms that make them up
    eps = np.finfo(float).eps
    amplitude = float(np.abs(set._sin).sum() + np.abs(set._cos).sum())
    scale = float(sum(np.linalg.norm(obj.q) for obj in set.locals)) + amplitude * np.sqrt(set.dim)

    g = set.summed_gradient(z)
    for iteration in range(max_iter):
        gnorm = float(np.linalg.norm(g))
        floor = 64 * eps * (scale + float(np.abs(set._Q).sum(axis=0).max()) * float(np.linalg.norm(z)))
        if gnorm <= max(tol, floor):
            logger.debug('Newton oracle converged in %d iterations, residual %.3e', iteration, gnorm)
            return z

        H = set.summed_hessian(z)
        try:
            step = scipy.linalg.solve(H, -g, assume_a='sym')
        except (scipy.linalg.LinAlgError, ValueError):
            step = -g
        slope = float(g @ step)
        if slope >= 0:
            step, slope = -g, -gnorm**2

        f0 = set.value(z)
        t = 1.0
        while set.value(z + t * step) > f0 + 1e-4 * t * slope and t > 1e-12:
            t *= 0.5
        z = z + t * step
        g = set.summed_gradient(z)

    raise OracleFailure(float(np.linalg.norm(g)), max_iter)


def quadratic_set(Qs: Sequence[np.ndarray], qs: Sequence[np.ndarray]) -> ObjectiveSet:
    """Builds an :class:`ObjectiveSet` from explicit lists of Q_i and q_i."""
    if len(Qs) != len(qs):
        raise ObjectiveError(f'Got {len(Qs)} Q matrices but {len(qs)} q vectors.')
    return ObjectiveSet([Quadratic(Q, q) for Q, q in zip(Qs, qs)])


def random_quadratic_set(N: int, n: int, seed: int) -> ObjectiveSet:
    """Generates N random quadratics in dimension n.

    Each Q_i is ``A_iᵀA_i / n`` with A_i uniform on [0, 1], and each q_i is
    uniform on [-5, 5]. The draw repeats with the next seed in the unlikely
    event that ΣQ_i is singular. The seed actually used is stored on the set.
    """
    if N < 1 or n < 1:
        raise ObjectiveError(f'Need N >= 1 and n >= 1, got N = {N}, n = {n}.')

    attempt = seed
    while True:
        rng = np.random.default_rng(attempt)
        locals: List[Quadratic] = []
        for _ in range(N):
            A = rng.uniform(0.0, 1.0, size=(n, n))
            Q = A.T @ A / n
            q = rng.uniform(-5.0, 5.0, size=n)
            locals.append(Quadratic(0.5 * (Q + Q.T), q))

        evals = np.linalg.eigvalsh(sum(obj.Q for obj in locals))
        if evals[0] > _PSD_TOL * max(1.0, evals[-1]):
            return ObjectiveSet(locals, m_global=float(evals[0]), l_global=float(evals[-1]), seed=attempt)

        logger.warning('seed %d gave a singular quadratic sum (min eigenvalue %.3e), trying %d', attempt, evals[0], attempt + 1)
        attempt += 1


# sin and cos pairs cancel in the sum, so Σf_i equals the base quadratic sum
EXAMPLE1_TRIG_TERMS: Tuple[TrigTerm, ...] = (
    TrigTerm('sin', 1.0),
    TrigTerm('sin', -1.0),
    TrigTerm('cos', -5.0),
    TrigTerm('cos', 5.0),
)


def example1_trig_set(base: ObjectiveSet) -> ObjectiveSet:
    """Attaches ``+sin``, ``-sin``, ``-5cos`` and ``+5cos`` to the four locals of ``base``.

    Raises
    ------
    InvalidBenchmark
        If ``base`` does not have exactly four agents.
    """
    if base.n_agents != 4:
        raise InvalidBenchmark(f'The nonconvex benchmark needs exactly 4 agents, got {base.n_agents}.')
    locals = [
        TrigPerturbedQuadratic(obj.Q, obj.q, [term]) for obj, term in zip(base.locals, EXAMPLE1_TRIG_TERMS)
    ]
    return ObjectiveSet(locals, m_global=base.m_global, l_global=base.l_global, seed=base.seed)
