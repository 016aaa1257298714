# == dynamics.py ==#

from __future__ import annotations

import enum
import logging
from typing import Callable, Dict, NamedTuple, Optional, Tuple, Union

import numpy as np
import scipy.linalg
from typing_extensions import TypeAlias

from .exceptions import InvalidGains, InvalidInitialState, OperatorUnavailable, ShapeMismatch
from .graph import LaplacianBundle, kron_apply
from .objectives import ObjectiveSet, central_minimizer

__all__: Tuple[str, ...] = (
    'DynamicsSpec',
    'DynamicsVariant',
    'Gains',
    'PrecomputedOperators',
    'StateLayout',
    'SystemState',
    'equilibrium_residual',
    'equilibrium_state',
    'init_state',
    'jacobian',
    'make_vector_field',
    'preset_remark4',
    'random_initial_x',
    'vector_field',
    'vector_field_corollary',
    'vector_field_first_order',
    'vector_field_second_order',
)

logger = logging.getLogger(__name__)

# tolerance on the blockwise sum of user supplied initial multipliers
LAMBDA_SUM_TOL = 1e-12

FlatField: TypeAlias = Callable[[np.ndarray], np.ndarray]


class DynamicsVariant(str, enum.Enum):
    """The algorithm variants a simulation can run."""

    FIRST_ORDER_PID = 'first_order_pid'
    SECOND_ORDER_PID = 'second_order_pid'
    COROLLARY = 'corollary'
    ZHU2022 = 'zhu2022'

    @property
    def is_second_order(self) -> bool:
        """:class:`bool`: Whether the state carries a velocity v."""
        return self is not DynamicsVariant.FIRST_ORDER_PID

    @property
    def used_gains(self) -> Tuple[str, ...]:
        """Tuple[:class:`str`, ...]: The gains that must be strictly positive."""
        if self in (DynamicsVariant.FIRST_ORDER_PID, DynamicsVariant.ZHU2022):
            return ('c1', 'c2', 'c3', 'c4')
        return ('c1', 'c2', 'c3', 'c4', 'c5')


VariantLike: TypeAlias = Union[DynamicsVariant, str]


class Gains(NamedTuple):
    """The five scalar gains. ``c5`` is the friction of the second-order variants."""

    c1: float
    c2: float
    c3: float
    c4: float
    c5: float = 0.0


class SystemState(NamedTuple):
    """The stacked state of all agents.

    Attributes
    ----------
    x: :class:`numpy.ndarray`
        The stacked decisions col(x_1, ..., x_N).
    lam: :class:`numpy.ndarray`
        The stacked integral states λ.
    v: Optional[:class:`numpy.ndarray`]
        The stacked velocities, absent for the first-order variant.
    """

    x: np.ndarray
    lam: np.ndarray
    v: Optional[np.ndarray] = None

    def flat(self) -> np.ndarray:
        """Concatenates the blocks in x, λ, v order."""
        parts = [self.x, self.lam] if self.v is None else [self.x, self.lam, self.v]
        return np.concatenate(parts)


class StateLayout(NamedTuple):
    """How a flat integrator vector splits into a :class:`SystemState`."""

    n_agents: int
    dim: int
    has_v: bool

    @property
    def block(self) -> int:
        return self.n_agents * self.dim

    @property
    def size(self) -> int:
        return self.block * (3 if self.has_v else 2)

    def unpack(self, flat: np.ndarray) -> SystemState:
        b = self.block
        if flat.shape != (self.size,):
            raise ShapeMismatch('flat state', (self.size,), flat.shape)
        return SystemState(flat[:b], flat[b : 2 * b], flat[2 * b :] if self.has_v else None)

    def labels(self) -> Tuple[str, ...]:
        """Column labels ``x[i][k]``, ``lambda[i][k]`` and ``v[i][k]`` with 1-based agent indices."""
        names = ('x', 'lambda', 'v') if self.has_v else ('x', 'lambda')
        return tuple(f'{name}[{i + 1}][{k + 1}]' for name in names for i in range(self.n_agents) for k in range(self.dim))


class PrecomputedOperators:
    """Read-only operators shared by every vector field evaluation of one problem.

    Parameters
    ----------
    bundle: :class:`LaplacianBundle`
        The Laplacian and its spectral data.
    objectives: :class:`ObjectiveSet`
        The local costs.
    c3: Optional[:class:`float`]
        Derivative gain of the first-order variant. When given, ``I + c3·L`` is
        Cholesky factorized once and reused for every evaluation.
    """

    __slots__: Tuple[str, ...] = ('bundle', 'objectives', 'c3', 'n_agents', 'dim', '_factor')

    def __init__(self, bundle: LaplacianBundle, objectives: ObjectiveSet, c3: Optional[float] = None) -> None:
        if bundle.n_agents != objectives.n_agents:
            raise ShapeMismatch('objective set', f'{bundle.n_agents} agents', f'{objectives.n_agents} agents')
        self.bundle = bundle
        self.objectives = objectives
        self.n_agents = objectives.n_agents
        self.dim = objectives.dim
        self.c3 = c3
        self._factor = None
        if c3 is not None:
            # min eigenvalue of I + c3 L is 1, Cholesky always succeeds
            self._factor = scipy.linalg.cho_factor(np.eye(self.n_agents) + c3 * bundle.L)

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__} n_agents: {self.n_agents}, dim: {self.dim}, c3: {self.c3}>'

    @property
    def has_factor(self) -> bool:
        return self._factor is not None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Applies ``((I + c3·L) ⊗ I_n)⁻¹`` to a stacked vector, one coordinate slice at a time."""
        if self._factor is None:
            raise OperatorUnavailable(DynamicsVariant.FIRST_ORDER_PID.value)
        B = rhs.reshape(self.n_agents, self.dim)
        return scipy.linalg.cho_solve(self._factor, B, check_finite=False).reshape(-1)

    def inverse(self) -> np.ndarray:
        """Returns the dense N x N matrix ``(I + c3·L)⁻¹``."""
        if self._factor is None:
            raise OperatorUnavailable(DynamicsVariant.FIRST_ORDER_PID.value)
        return scipy.linalg.cho_solve(self._factor, np.eye(self.n_agents))

    def lap(self, x: np.ndarray) -> np.ndarray:
        return kron_apply(self.bundle.L, self.dim, x)

    def layout(self, variant: VariantLike) -> StateLayout:
        return StateLayout(self.n_agents, self.dim, DynamicsVariant(variant).is_second_order)


class DynamicsSpec:
    """An algorithm variant together with validated gains.

    For :attr:`DynamicsVariant.ZHU2022` the friction ``c5`` is forced to zero.

    Parameters
    ----------
    variant: Union[:class:`DynamicsVariant`, :class:`str`]
        Which vector field to use.
    gains: :class:`Gains`
        The gains. Every gain the variant uses must be strictly positive.
    """

    __slots__: Tuple[str, ...] = ('variant', 'gains')

    def __init__(self, variant: VariantLike, gains: Gains) -> None:
        self.variant = DynamicsVariant(variant)
        gains = Gains(*(float(c) for c in gains))
        if self.variant is DynamicsVariant.ZHU2022 and gains.c5 != 0.0:
            logger.info('zhu2022 ignores friction, c5 = %g set to 0', gains.c5)
            gains = gains._replace(c5=0.0)
        for name in self.variant.used_gains:
            value = getattr(gains, name)
            if not value > 0:
                raise InvalidGains(name, value, self.variant.value)
        self.gains = gains

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__} variant: {self.variant.value}, gains: {tuple(self.gains)}>'

    def display_gains(self) -> Dict[str, float]:
        """Returns the gains for reports.

        The baseline additionally reports its integral gain in the rescaled
        coordinates λ̃ = c2²c1λ, in which the integral term reads
        ``c3 / (c1·c2²) · L λ̃``.
        """
        out = {name: getattr(self.gains, name) for name in ('c1', 'c2', 'c3', 'c4', 'c5')}
        if self.variant is DynamicsVariant.FIRST_ORDER_PID:
            del out['c5']
        if self.variant is DynamicsVariant.ZHU2022:
            g = self.gains
            out['c3_rescaled'] = g.c3 / (g.c1 * g.c2**2)
        return out

    def operators(self, bundle: LaplacianBundle, objectives: ObjectiveSet) -> PrecomputedOperators:
        c3 = self.gains.c3 if self.variant is DynamicsVariant.FIRST_ORDER_PID else None
        return PrecomputedOperators(bundle, objectives, c3)

    def field(self, ops: PrecomputedOperators) -> FlatField:
        return make_vector_field(self.variant, self.gains, ops)


def random_initial_x(n_agents: int, dim: int, seed: int) -> np.ndarray:
    """Draws x(0) uniformly from [-1, 1]^(N·n).

    Uses a stream spawned from ``seed`` so that it never coincides with the
    stream that generated the objectives from the same seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    return rng.uniform(-1.0, 1.0, size=n_agents * dim)


def init_state(
    variant: VariantLike,
    x0: np.ndarray,
    v0: Optional[np.ndarray] = None,
    lambda0: Optional[np.ndarray] = None,
    *,
    n_agents: int,
) -> SystemState:
    """Builds a validated initial :class:`SystemState`.

    Parameters
    ----------
    variant: Union[:class:`DynamicsVariant`, :class:`str`]
        Decides whether a velocity block is present.
    x0: :class:`numpy.ndarray`
        Initial decisions, length N·n.
    v0: Optional[:class:`numpy.ndarray`]
        Initial velocities, defaults to zero. Ignored by the first-order variant.
    lambda0: Optional[:class:`numpy.ndarray`]
        Initial integral states, defaults to zero. Must sum to zero across agents.
    n_agents: :class:`int`
        The number of agents N.

    Raises
    ------
    InvalidInitialState
        If ``lambda0`` does not sum to zero blockwise.
    """
    variant = DynamicsVariant(variant)
    x0 = np.array(x0, dtype=float).reshape(-1)
    if x0.size % n_agents:
        raise ShapeMismatch('x0', f'a multiple of {n_agents}', x0.shape)
    size = x0.size
    dim = size // n_agents

    def _block(value: Optional[np.ndarray], what: str) -> np.ndarray:
        if value is None:
            return np.zeros(size)
        arr = np.array(value, dtype=float).reshape(-1)
        if arr.size != size:
            raise ShapeMismatch(what, (size,), arr.shape)
        return arr

    lam = _block(lambda0, 'lambda0')
    drift = float(np.abs(lam.reshape(n_agents, dim).sum(axis=0)).max(initial=0.0))
    if drift > LAMBDA_SUM_TOL:
        raise InvalidInitialState(drift)

    v = _block(v0, 'v0') if variant.is_second_order else None
    return SystemState(x0, lam, v)


def _check_state(ops: PrecomputedOperators, state: SystemState, needs_v: bool) -> None:
    size = ops.n_agents * ops.dim
    for name, block in (('x', state.x), ('lambda', state.lam)):
        if block.shape != (size,):
            raise ShapeMismatch(name, (size,), block.shape)
    if needs_v:
        if state.v is None or state.v.shape != (size,):
            raise ShapeMismatch('v', (size,), None if state.v is None else state.v.shape)
    elif state.v is not None:
        raise ShapeMismatch('v', 'absent for the first-order variant', state.v.shape)


def _first_order(ops: PrecomputedOperators, g: Gains, x: np.ndarray, lam: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    lx = ops.lap(x)
    rhs = -g.c1 * ops.objectives.stacked_grad(x) - g.c2 * lx - lam
    return ops.solve(rhs), g.c4 * lx


def _second_order(
    ops: PrecomputedOperators, g: Gains, x: np.ndarray, lam: np.ndarray, v: np.ndarray, integral: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    lx = ops.lap(x)
    v_dot = -g.c1 * ops.objectives.stacked_grad(x) - g.c2 * lx - g.c3 * integral - g.c4 * ops.lap(v) - g.c5 * v
    return v, lx, v_dot


def vector_field_first_order(ops: PrecomputedOperators, gains: Gains, state: SystemState) -> SystemState:
    """Evaluates the first-order PID field in its explicit form.

    ``ẋ = ((I + c3·L) ⊗ I)⁻¹ (-c1∇f(x) - c2(L⊗I)x - λ)`` and ``λ̇ = c4(L⊗I)x``.
    The per-agent quantities can be recovered from the result as
    ``μ = (L⊗I)x``, ``φ = -c1∇f(x) - ẋ`` and ``y = (L⊗I)ẋ``.
    """
    _check_state(ops, state, needs_v=False)
    x_dot, lam_dot = _first_order(ops, gains, state.x, state.lam)
    return SystemState(x_dot, lam_dot)


def vector_field_second_order(ops: PrecomputedOperators, gains: Gains, state: SystemState) -> SystemState:
    """Evaluates the second-order PID field.

    ``ẋ = v``, ``v̇ = -c1∇f(x) - c2(L⊗I)x - c3λ - c4(L⊗I)v - c5v`` and ``λ̇ = (L⊗I)x``.
    """
    _check_state(ops, state, needs_v=True)
    assert state.v is not None
    x_dot, lam_dot, v_dot = _second_order(ops, gains, state.x, state.lam, state.v, state.lam)
    return SystemState(x_dot, lam_dot, v_dot)


def vector_field_corollary(ops: PrecomputedOperators, gains: Gains, state: SystemState) -> SystemState:
    """Evaluates the second-order field with the integral term fed through the Laplacian, ``c3(L⊗I)λ``."""
    _check_state(ops, state, needs_v=True)
    assert state.v is not None
    x_dot, lam_dot, v_dot = _second_order(ops, gains, state.x, state.lam, state.v, ops.lap(state.lam))
    return SystemState(x_dot, lam_dot, v_dot)


def vector_field(variant: VariantLike, ops: PrecomputedOperators, gains: Gains, state: SystemState) -> SystemState:
    """Dispatches to the field of ``variant``. The baseline runs the corollary field with ``c5 = 0``."""
    variant = DynamicsVariant(variant)
    if variant is DynamicsVariant.FIRST_ORDER_PID:
        return vector_field_first_order(ops, gains, state)
    if variant is DynamicsVariant.SECOND_ORDER_PID:
        return vector_field_second_order(ops, gains, state)
    if variant is DynamicsVariant.ZHU2022:
        gains = gains._replace(c5=0.0)
    return vector_field_corollary(ops, gains, state)


def make_vector_field(variant: VariantLike, gains: Gains, ops: PrecomputedOperators) -> FlatField:
    """Returns the field of ``variant`` as a function on flat x, λ, v vectors, for the integrator."""
    variant = DynamicsVariant(variant)
    b = ops.n_agents * ops.dim

    if variant is DynamicsVariant.FIRST_ORDER_PID:
        if not ops.has_factor:
            raise OperatorUnavailable(variant.value)

        def first(y: np.ndarray) -> np.ndarray:
            return np.concatenate(_first_order(ops, gains, y[:b], y[b:]))

        return first

    if variant is DynamicsVariant.ZHU2022:
        gains = gains._replace(c5=0.0)
    through_laplacian = variant is not DynamicsVariant.SECOND_ORDER_PID

    def second(y: np.ndarray) -> np.ndarray:
        x, lam, v = y[:b], y[b : 2 * b], y[2 * b :]
        integral = ops.lap(lam) if through_laplacian else lam
        return np.concatenate(_second_order(ops, gains, x, lam, v, integral))

    return second


def equilibrium_state(
    variant: VariantLike, gains: Gains, ops: PrecomputedOperators, z_star: Optional[np.ndarray] = None
) -> SystemState:
    """Builds the analytical equilibrium from the centralized minimizer.

    x* = 𝟙⊗z* in every case. λ* = -c1∇f(x*) for the first-order variant and
    λ* = -(c1/c3)∇f(x*), v* = 0 for the second-order one. The Laplacian-fed
    variants need ``c3(L⊗I)λ* = -c1∇f(x*)``, which has a unique zero-sum
    solution through the pseudoinverse because Σ∇f_i(z*) = 0.
    """
    variant = DynamicsVariant(variant)
    if z_star is None:
        z_star = central_minimizer(ops.objectives)
    x_star = np.tile(np.asarray(z_star, dtype=float), ops.n_agents)
    grad = ops.objectives.stacked_grad(x_star)

    if variant is DynamicsVariant.FIRST_ORDER_PID:
        return SystemState(x_star, -gains.c1 * grad)

    if variant is DynamicsVariant.SECOND_ORDER_PID:
        lam = -(gains.c1 / gains.c3) * grad
    else:
        # Γ - 𝟙𝟙ᵀ/N is the pseudoinverse of L
        pinv = ops.bundle.gamma - (np.eye(ops.n_agents) - ops.bundle.pi)
        lam = -(gains.c1 / gains.c3) * kron_apply(pinv, ops.dim, grad)
    return SystemState(x_star, lam, np.zeros_like(x_star))


def equilibrium_residual(variant: VariantLike, gains: Gains, state: SystemState, ops: PrecomputedOperators) -> float:
    """Returns the Euclidean norm of the full state derivative; zero exactly at an equilibrium."""
    return float(np.linalg.norm(vector_field(variant, ops, gains, state).flat()))


def preset_remark4(base_gains: Gains) -> Gains:
    """Returns gains with ``c4 = 1`` and ``c3 = c5 = c2``, keeping ``c1``.

    Under ``v̂ = v + (L⊗I)x`` this turns the second-order field into a plain
    distributed gradient flow.
    """
    return Gains(base_gains.c1, base_gains.c2, base_gains.c2, 1.0, base_gains.c2)


def jacobian(variant: VariantLike, gains: Gains, ops: PrecomputedOperators, state: SystemState) -> np.ndarray:
    """Returns the dense Jacobian of the flat field at ``state``, in x, λ, v block order."""
    variant = DynamicsVariant(variant)
    N, n = ops.n_agents, ops.dim
    eye = np.eye(N * n)
    lap = np.kron(ops.bundle.L, np.eye(n))
    hess = scipy.linalg.block_diag(*ops.objectives.local_hessians(state.x))
    zero = np.zeros_like(eye)

    if variant is DynamicsVariant.FIRST_ORDER_PID:
        M = np.kron(ops.inverse(), np.eye(n))
        return np.block([[-M @ (gains.c1 * hess + gains.c2 * lap), -M], [gains.c4 * lap, zero]])

    c5 = 0.0 if variant is DynamicsVariant.ZHU2022 else gains.c5
    integral = -gains.c3 * (eye if variant is DynamicsVariant.SECOND_ORDER_PID else lap)
    return np.block(
        [
            [zero, zero, eye],
            [lap, zero, zero],
            [-gains.c1 * hess - gains.c2 * lap, integral, -gains.c4 * lap - c5 * eye],
        ]
    )
