# == analysis.py ==#

from __future__ import annotations

import logging
import math
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .dynamics import DynamicsVariant, Gains, PrecomputedOperators, SystemState, VariantLike, equilibrium_state, jacobian
from .exceptions import (
    ConditionNotApplicable,
    InsufficientData,
    InvalidLyapunovConfig,
    LyapunovSearchFailed,
    ShapeMismatch,
)
from .graph import LaplacianBundle, kron_apply
from .integrator import Trajectory
from .objectives import ObjectiveSet, central_minimizer

__all__: Tuple[str, ...] = (
    'ConditionReport',
    'LyapunovConfig',
    'NON_DECAY_TOL',
    'MetricsSeries',
    'RateFit',
    'auto_horizon',
    'check_condition',
    'error_split',
    'find_lyapunov_weight',
    'fit_rate',
    'linearized_rate',
    'lyapunov_config',
    'lyapunov_series',
    'lyapunov_value',
    'metrics',
    'time_to_reach',
)

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 5
LYAPUNOV_WEIGHT_CAP = 2.0**30
# linearized rates above -NON_DECAY_TOL are treated as marginal
NON_DECAY_TOL = 1e-9


class MetricsSeries(NamedTuple):
    """Convergence metrics of one trajectory, aligned with its record times.

    Attributes
    ----------
    times: :class:`numpy.ndarray`
        The record times.
    relative_error: :class:`numpy.ndarray`
        ‖x(t) − 𝟙⊗z*‖ / ‖x(0) − 𝟙⊗z*‖, or the unnormalized error when
        :attr:`normalized` is ``False``.
    consensus_error: :class:`numpy.ndarray`
        ‖(L⊗I)x(t)‖.
    optimality_residual: :class:`numpy.ndarray`
        ‖Σ_i ∇f_i(x_i(t))‖.
    lambda_sum_drift: :class:`numpy.ndarray`
        ‖(𝟙ᵀ⊗I)λ(t)‖∞.
    normalized: :class:`bool`
        ``False`` when the run started exactly at the optimum, in which case the
        error could not be divided by its initial value.
    initial_error: :class:`float`
        ‖x(0) − 𝟙⊗z*‖.
    """

    times: np.ndarray
    relative_error: np.ndarray
    consensus_error: np.ndarray
    optimality_residual: np.ndarray
    lambda_sum_drift: np.ndarray
    normalized: bool = True
    initial_error: float = 1.0

    COLUMNS = ('time', 'relative_error', 'consensus_error', 'optimality_residual', 'lambda_sum_drift')

    def rows(self) -> np.ndarray:
        """Returns the five series as the columns of one array, in :attr:`COLUMNS` order."""
        return np.column_stack(
            [self.times, self.relative_error, self.consensus_error, self.optimality_residual, self.lambda_sum_drift]
        )


class RateFit(NamedTuple):
    rate: float
    r_squared: float
    n_points: int


class LyapunovConfig(NamedTuple):
    """Weights of the Lyapunov function of the first-order dynamics.

    Attributes
    ----------
    w: :class:`float`
        The weight of the integral state inside the auxiliary state θ.
    q: :class:`float`
        ``1 / (w·(c4·w − c2))``.
    beta: :class:`float`
        ``c3·λmax(L) + 1``.
    """

    w: float
    q: float
    beta: float


class ConditionReport(NamedTuple):
    """The gain condition of the second-order dynamics, with every constant it is built from.

    Attributes
    ----------
    variant: :class:`str`
        The variant whose formula was used.
    sigma: :class:`float`
        The contraction constant compared against ``eta / gamma_const``.
    sigma1: :class:`float`
        The Lipschitz-type constant whose ``sigma1 - 1`` bounds the same map.
    eta: :class:`float`
        Decay exponent of ``exp(-A t)``.
    gamma_const: :class:`float`
        Transient bound of ``exp(-A t)``.
    satisfied: :class:`bool`
        ``sigma < eta / gamma_const``.
    predicted_rate: :class:`float`
        ``eta - gamma_const * sigma``, reported even when negative.
    sigma_below_sigma1_minus_one: :class:`bool`
        Whether ``sigma < sigma1 - 1``.
    """

    variant: str
    sigma: float
    sigma1: float
    eta: float
    gamma_const: float
    satisfied: bool
    predicted_rate: float
    sigma_below_sigma1_minus_one: bool

    def as_dict(self) -> Dict[str, Any]:
        return self._asdict()

    def as_text(self) -> str:
        """Renders the report as ``key = value`` lines."""
        lines = []
        for key, value in self._asdict().items():
            if isinstance(value, float):
                value = f'{value:.17g}'
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f'{key} = {value}')
        return '\n'.join(lines)


def _stacked_blocks(rows: np.ndarray, n_agents: int) -> np.ndarray:
    return rows.reshape(rows.shape[0], n_agents, -1)


def metrics(
    traj: Trajectory, set: ObjectiveSet, bundle: LaplacianBundle, z_star: Optional[np.ndarray] = None
) -> MetricsSeries:
    """Computes the convergence metrics of ``traj`` against the centralized minimizer.

    ``z_star`` defaults to :func:`central_minimizer` of ``set``; its
    :class:`OracleFailure` propagates.
    """
    if z_star is None:
        z_star = central_minimizer(set)
    N = set.n_agents
    X = _stacked_blocks(traj.block('x'), N)
    Lam = _stacked_blocks(traj.block('lambda'), N)

    errors = np.linalg.norm((X - z_star).reshape(len(traj), -1), axis=1)
    initial = float(errors[0])
    normalized = initial > 0.0
    relative = errors / initial if normalized else errors
    if not normalized:
        logger.info('Run starts at the optimum, reporting the absolute error instead of the relative one')

    LX = np.einsum('ij,rjk->rik', bundle.L, X)
    consensus = np.linalg.norm(LX.reshape(len(traj), -1), axis=1)
    residual = np.array([np.linalg.norm(set.stacked_grad(row).reshape(N, -1).sum(axis=0)) for row in traj.block('x')])
    drift = np.abs(Lam.sum(axis=1)).max(axis=1)

    return MetricsSeries(traj.times, relative, consensus, residual, drift, normalized, initial)


def fit_rate(times: Sequence[float], errors: Sequence[float], window: float = 0.5) -> RateFit:
    """Fits ``log(error) ≈ a + rate·t`` by least squares over the tail of a series.

    The series is first cut at the first sample that is not above the roundoff
    floor ``1e2·ε·errors[0]``. The fit then uses the samples in the last
    ``window`` fraction of the remaining time span.

    Raises
    ------
    InsufficientData
        If fewer than five samples remain.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(errors, dtype=float)
    if t.shape != e.shape:
        raise ShapeMismatch('errors', t.shape, e.shape)
    if not 0.0 < window <= 1.0:
        raise ValueError(f'window must lie in (0, 1], got {window!r}.')
    if e.size == 0:
        raise InsufficientData(0, MIN_FIT_POINTS)

    floor = 1e2 * np.finfo(float).eps * e[0]
    below = np.flatnonzero(~(e > floor))
    cut = int(below[0]) if below.size else e.size
    t, e = t[:cut], e[:cut]
    if cut < MIN_FIT_POINTS:
        raise InsufficientData(cut, MIN_FIT_POINTS)

    start = t[-1] - window * (t[-1] - t[0])
    tail = t >= start
    t, e = t[tail], e[tail]
    if t.size < MIN_FIT_POINTS:
        raise InsufficientData(int(t.size), MIN_FIT_POINTS)

    y = np.log(e)
    slope, intercept = np.polyfit(t, y, 1)
    ss_res = float(np.sum((y - (slope * t + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # a flat series is fitted exactly
    flat = ss_tot <= 1e-24 * y.size * max(1.0, float(np.mean(y**2)))
    r_squared = 1.0 if flat else 1.0 - ss_res / ss_tot
    return RateFit(float(slope), r_squared, int(t.size))


def time_to_reach(times: Sequence[float], errors: Sequence[float], threshold: float) -> Optional[float]:
    """Returns the first record time at which ``errors`` is at or below ``threshold``, or ``None``."""
    hits = np.flatnonzero(np.asarray(errors, dtype=float) <= threshold)
    return float(np.asarray(times)[hits[0]]) if hits.size else None


def error_split(x: np.ndarray, z_star: np.ndarray, n_agents: int, dim: int) -> Tuple[float, float]:
    """Splits ‖x − 𝟙⊗z*‖² into the disagreement part ‖Πx‖² and the mean part N·‖x̄ − z*‖²."""
    X = np.asarray(x, dtype=float).reshape(n_agents, dim)
    mean = X.mean(axis=0)
    disagreement = float(np.sum((X - mean) ** 2))
    return disagreement, n_agents * float(np.sum((mean - z_star) ** 2))


def lyapunov_config(gains: Gains, bundle: LaplacianBundle, w: float) -> LyapunovConfig:
    """Builds the weights for a given ``w``.

    Raises
    ------
    InvalidLyapunovConfig
        If ``c4·w − c2`` is not positive.
    """
    margin = gains.c4 * w - gains.c2
    if not (w > 0 and margin > 0):
        raise InvalidLyapunovConfig(f'Need w > 0 and c4·w - c2 > 0, got w = {w!r}, c4·w - c2 = {margin!r}.')
    return LyapunovConfig(float(w), 1.0 / (w * margin), gains.c3 * bundle.lambda_max_L + 1.0)


def lyapunov_value(
    state: SystemState,
    x_star: np.ndarray,
    set: ObjectiveSet,
    bundle: LaplacianBundle,
    gains: Gains,
    lcfg: LyapunovConfig,
) -> float:
    """Evaluates ``V = ½ x̃ᵀ(c3(L⊗I) + I)x̃ + (q/2) θᵀ(Γ⊗I)θ`` at a first-order state.

    Here ``x̃ = x − x*`` and ``θ = (I + c3(L⊗I))x̃ + w(λ + c1∇f(x*))``.
    """
    if state.v is not None:
        raise InvalidLyapunovConfig('The Lyapunov function is defined for first-order states only.')
    grad_star = set.stacked_grad(x_star)
    return _lyapunov(state.x, state.lam, x_star, grad_star, set.dim, bundle, gains, lcfg)


def _lyapunov(
    x: np.ndarray,
    lam: np.ndarray,
    x_star: np.ndarray,
    grad_star: np.ndarray,
    dim: int,
    bundle: LaplacianBundle,
    gains: Gains,
    lcfg: LyapunovConfig,
) -> float:
    dx = x - x_star
    pdx = dx + gains.c3 * kron_apply(bundle.L, dim, dx)
    theta = pdx + lcfg.w * (lam + gains.c1 * grad_star)
    value = 0.5 * dx @ pdx + 0.5 * lcfg.q * theta @ kron_apply(bundle.gamma, dim, theta)
    return max(float(value), 0.0)


def lyapunov_series(
    traj: Trajectory,
    x_star: np.ndarray,
    set: ObjectiveSet,
    bundle: LaplacianBundle,
    gains: Gains,
    lcfg: LyapunovConfig,
) -> np.ndarray:
    """Evaluates :func:`lyapunov_value` at every record of a first-order trajectory."""
    if traj.layout is None or traj.layout.has_v:
        raise InvalidLyapunovConfig('The Lyapunov function is defined for first-order trajectories only.')
    grad_star = set.stacked_grad(x_star)
    X, Lam = traj.block('x'), traj.block('lambda')
    return np.array([_lyapunov(x, lam, x_star, grad_star, set.dim, bundle, gains, lcfg) for x, lam in zip(X, Lam)])


def find_lyapunov_weight(
    traj: Trajectory,
    x_star: np.ndarray,
    set: ObjectiveSet,
    bundle: LaplacianBundle,
    gains: Gains,
    *,
    rtol: float = 1e-10,
    cap: float = LYAPUNOV_WEIGHT_CAP,
) -> Tuple[LyapunovConfig, np.ndarray]:
    """Doubles ``w`` from ``2·c2/c4 + 1`` until the Lyapunov sequence along ``traj`` is non-increasing.

    An increase of at most ``rtol·V(0)`` between records is tolerated.

    Raises
    ------
    LyapunovSearchFailed
        If no ``w <= cap`` works.
    """
    w = 2.0 * gains.c2 / gains.c4 + 1.0
    while w <= cap:
        lcfg = lyapunov_config(gains, bundle, w)
        series = lyapunov_series(traj, x_star, set, bundle, gains, lcfg)
        worst = float(np.max(np.diff(series), initial=-np.inf))
        if worst <= rtol * series[0]:
            logger.info('Lyapunov weight w = %g gives a non-increasing sequence', w)
            return lcfg, series
        logger.debug('Lyapunov weight w = %g rejected, largest increase %.3e', w, worst)
        w *= 2.0
    raise LyapunovSearchFailed(cap)


def _exp_constants(A: np.ndarray) -> Tuple[float, float]:
    # eta is the slowest decay exponent of exp(-At), gamma the conditioning of its eigenbasis
    if np.allclose(A, A.T, rtol=0.0, atol=1e-14):
        evals = scipy.linalg.eigh(A, eigvals_only=True)
        return float(evals.min()), 1.0
    evals, vecs = scipy.linalg.eig(A)
    return float(evals.real.min()), float(np.linalg.cond(vecs))


def check_condition(variant: VariantLike, gains: Gains, l_global: float, bundle: LaplacianBundle) -> ConditionReport:
    """Evaluates the sufficient gain condition of the second-order dynamics.

    For :attr:`DynamicsVariant.SECOND_ORDER_PID`,
    ``σ = (c1·l + c3² + c5² + sqrt((1 + c2² + 2c4²)·λmax(LᵀL)))^½``. For the
    Laplacian-fed variants the integral gain moves into the graph term,
    ``σ = (c1·l + c5² + sqrt((1 + c2² + c3² + 2c4²)·λmax(LᵀL)))^½``. ``η`` and
    ``γ`` are read off the spectrum of ``A = blockdiag(c4·L + I, I, I)``.

    The report never blocks a simulation; the condition is sufficient only.

    Raises
    ------
    ConditionNotApplicable
        For the first-order variant.
    """
    variant = DynamicsVariant(variant)
    if not variant.is_second_order:
        raise ConditionNotApplicable(variant.value)
    c1, c2, c3, c4, c5 = gains
    if variant is DynamicsVariant.ZHU2022:
        c5 = 0.0
    lam = bundle.lambda_max_LtL

    if variant is DynamicsVariant.SECOND_ORDER_PID:
        graph_term = math.sqrt((1.0 + c2**2 + 2.0 * c4**2) * lam)
        sigma = math.sqrt(c1 * l_global + c3**2 + c5**2 + graph_term)
        sigma1 = c1 * l_global + (1.0 + c3**2 + c5**2) + graph_term
    else:
        graph_term = math.sqrt((1.0 + c2**2 + c3**2 + 2.0 * c4**2) * lam)
        sigma = math.sqrt(c1 * l_global + c5**2 + graph_term)
        sigma1 = c1 * l_global + (1.0 + c5**2) + graph_term

    eye = np.eye(bundle.n_agents)
    A = scipy.linalg.block_diag(c4 * bundle.L + eye, eye, eye)
    eta, gamma_const = _exp_constants(A)

    report = ConditionReport(
        variant=variant.value,
        sigma=sigma,
        sigma1=sigma1,
        eta=eta,
        gamma_const=gamma_const,
        satisfied=bool(sigma < eta / gamma_const),
        predicted_rate=eta - gamma_const * sigma,
        sigma_below_sigma1_minus_one=bool(sigma < sigma1 - 1.0),
    )
    logger.debug('Condition report: %s', report)
    return report


def linearized_rate(
    variant: VariantLike, gains: Gains, ops: PrecomputedOperators, state: Optional[SystemState] = None
) -> float:
    """Returns the spectral abscissa of the linearized dynamics.

    The Jacobian is taken at ``state`` (the analytical equilibrium by default)
    and restricted to the invariant subspace on which the multipliers sum to
    zero. A negative value is the asymptotic exponential rate; for quadratic
    objectives the dynamics are affine and the value is exact.
    """
    variant = DynamicsVariant(variant)
    if state is None:
        state = equilibrium_state(variant, gains, ops)
    J = jacobian(variant, gains, ops, state)

    n = ops.dim
    free = np.eye(ops.n_agents * n)
    zero_sum = np.kron(ops.bundle.disagreement_basis, np.eye(n))
    blocks = [free, zero_sum, free] if variant.is_second_order else [free, zero_sum]
    B = scipy.linalg.block_diag(*blocks)
    evals = scipy.linalg.eigvals(B.T @ J @ B)
    return float(evals.real.max())


def auto_horizon(
    rate: float, horizon_reduction: float, h: float, record_stride: int, max_t_end: float
) -> float:
    """Picks a final time long enough to shrink the slowest mode by ``horizon_reduction``.

    ``t = 1.25·ln(1/horizon_reduction)/|rate|``, rounded up to a whole number of
    record intervals and capped at ``max_t_end``. A rate that does not decay
    (above ``-1e-9``) yields the cap.
    """
    if not 0.0 < horizon_reduction < 1.0:
        raise ValueError(f'horizon_reduction must lie in (0, 1), got {horizon_reduction!r}.')
    if not rate < -NON_DECAY_TOL:
        logger.warning('Linearized rate %.3e does not decay, using t_end = %g', rate, max_t_end)
        return float(max_t_end)
    interval = h * record_stride
    t_end = 1.25 * math.log(1.0 / horizon_reduction) / abs(rate)
    t_end = math.ceil(t_end / interval) * interval
    return float(min(t_end, max_t_end))
