# == exceptions.py ==#

from __future__ import annotations

from typing import TYPE_CHECKING, Any, Optional, Sequence, Tuple

if TYPE_CHECKING:
    from .integrator import Trajectory

__all__: Tuple[str, ...] = (
    'AnalysisError',
    'ConditionNotApplicable',
    'ConfigError',
    'Divergence',
    'DynamicsError',
    'EigenSolverFailure',
    'InsufficientData',
    'IntegrationError',
    'InvalidBenchmark',
    'InvalidEdge',
    'InvalidGains',
    'InvalidInitialState',
    'InvalidIntegratorConfig',
    'InvalidLyapunovConfig',
    'InvalidTopology',
    'LyapunovSearchFailed',
    'NotConnected',
    'NotStronglyConvex',
    'NumericalError',
    'ObjectiveError',
    'OperatorUnavailable',
    'OracleFailure',
    'PIDFlowException',
    'ShapeMismatch',
    'StepSizeWarning',
    'TopologyError',
)


class PIDFlowException(Exception):
    """Base level exception for everything raised by the library."""

    pass


class TopologyError(PIDFlowException):
    """Base level exceptions raised when a communication graph cannot be built."""

    pass


class NumericalError(PIDFlowException):
    """Base level exceptions raised when a linear algebra routine fails."""

    pass


class ObjectiveError(PIDFlowException):
    """Base level exceptions raised by errors related to local cost functions."""

    pass


class DynamicsError(PIDFlowException):
    """Base level exceptions raised by errors related to the vector fields and their states."""

    pass


class IntegrationError(PIDFlowException):
    """Base level exceptions raised while stepping a vector field through time."""

    pass


class AnalysisError(PIDFlowException):
    """Base level exceptions raised by the convergence diagnostics."""

    pass


class ConfigError(PIDFlowException):
    """Raised when an experiment config cannot be read or fails validation.

    Attributes
    ----------
    field: Optional[:class:`str`]
        The dotted path of the offending field, if one could be identified.
    """

    def __init__(self, msg: str, field: Optional[str] = None):
        self.field = field
        if field is not None:
            msg = f'{field}: {msg}'
        super().__init__(msg)


class ShapeMismatch(PIDFlowException):
    """Raised when an array does not have the length or shape an operation expects."""

    def __init__(self, what: str, expected: Any, got: Any):
        self.expected = expected
        self.got = got
        msg = f'{what} has the wrong shape, expected {expected}, got {got}.'
        super().__init__(msg)


class InvalidTopology(TopologyError):
    """Raised when a named topology cannot be built with the requested size."""

    def __init__(self, msg: str):
        super().__init__(msg)


class InvalidEdge(TopologyError):
    """Raised when an edge is a self-loop, has out of range endpoints or a non-positive weight."""

    def __init__(self, edge: Sequence[Any], reason: str):
        self.edge = tuple(edge)
        msg = f'Invalid edge {self.edge}: {reason}.'
        super().__init__(msg)


class NotConnected(TopologyError):
    """Raised when the graph is disconnected, i.e. its Fiedler value vanishes."""

    def __init__(self, fiedler: float):
        self.fiedler = fiedler
        msg = f'The graph is not connected (second-smallest Laplacian eigenvalue {fiedler:.3e}).'
        super().__init__(msg)


class EigenSolverFailure(NumericalError):
    """Raised when the dense symmetric eigensolver does not converge."""

    def __init__(self, what: str, detail: str):
        self.detail = detail
        msg = f'Eigen-decomposition of {what} failed: {detail}'
        super().__init__(msg)


class NotStronglyConvex(ObjectiveError):
    """Raised when the summed objective is not strongly convex."""

    def __init__(self, m_global: float):
        self.m_global = m_global
        msg = f'The summed objective must be strongly convex, got m = {m_global:.3e}.'
        super().__init__(msg)


class InvalidBenchmark(ObjectiveError):
    def __init__(self, msg: str):
        super().__init__(msg)


class OracleFailure(ObjectiveError):
    """Raised when the centralized minimizer does not reach the requested tolerance.

    Attributes
    ----------
    residual: :class:`float`
        Norm of the summed gradient at the last iterate.
    """

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        msg = f'Centralized minimizer failed after {iterations} Newton iterations, final residual {residual:.3e}.'
        super().__init__(msg)


class InvalidGains(DynamicsError):
    def __init__(self, name: str, value: float, variant: str):
        self.name = name
        self.value = value
        msg = f'Gain {name} must be strictly positive for {variant}, got {value!r}.'
        super().__init__(msg)


class InvalidInitialState(DynamicsError):
    """Raised when the initial multipliers do not sum to zero across agents."""

    def __init__(self, lambda_sum: float):
        self.lambda_sum = lambda_sum
        msg = (
            'The initial multipliers must sum to zero across agents, '
            f'got a blockwise sum with infinity norm {lambda_sum:.3e}.'
        )
        super().__init__(msg)


class OperatorUnavailable(DynamicsError):
    """Raised when a vector field needs a factorization that was never computed."""

    def __init__(self, variant: str):
        msg = f'No (I + c3 L) factorization is available for {variant}.'
        super().__init__(msg)


class InvalidIntegratorConfig(IntegrationError):
    def __init__(self, msg: str):
        super().__init__(msg)


class Divergence(IntegrationError):
    """Raised when a state component blows up or stops being finite.

    Attributes
    ----------
    time: :class:`float`
        The simulated time of the failing step.
    index: :class:`int`
        Index of the offending component in the flattened state.
    partial: Optional[:class:`Trajectory`]
        Everything recorded before the failure, if the integrator got that far.
    """

    def __init__(self, time: float, index: int, value: float, partial: Optional[Trajectory] = None):
        self.time = time
        self.index = index
        self.value = value
        self.partial = partial
        msg = f'Integration diverged at t = {time:.6g}: component {index} reached {value!r}.'
        super().__init__(msg)


class InsufficientData(AnalysisError):
    def __init__(self, usable: int, required: int = 5):
        self.usable = usable
        msg = f'Need at least {required} usable samples to fit a rate, got {usable}.'
        super().__init__(msg)


class InvalidLyapunovConfig(AnalysisError):
    def __init__(self, msg: str):
        super().__init__(msg)


class ConditionNotApplicable(AnalysisError):
    """Raised when the gain condition is requested for a first-order variant."""

    def __init__(self, variant: str):
        self.variant = variant
        msg = f'The gain condition applies to second-order variants, got {variant}.'
        super().__init__(msg)


class LyapunovSearchFailed(AnalysisError):
    """Raised when no weight up to the cap makes the Lyapunov sequence monotone."""

    def __init__(self, cap: float):
        self.cap = cap
        msg = f'No Lyapunov weight w <= {cap:.3e} gave a non-increasing sequence.'
        super().__init__(msg)


class StepSizeWarning(UserWarning):
    """Issued when the step size looks too large for the gains and constants of a run."""

    pass
