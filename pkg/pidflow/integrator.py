# == integrator.py ==#

from __future__ import annotations

import logging
import math
import warnings
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np

from .dynamics import Gains, StateLayout, SystemState
from .exceptions import Divergence, InvalidIntegratorConfig, StepSizeWarning

__all__: Tuple[str, ...] = (
    'DIVERGENCE_THRESHOLD',
    'STABILITY_LIMIT',
    'IntegratorConfig',
    'Trajectory',
    'check_step_size',
    'integrate',
    'rk4_step',
    'stability_index',
)

logger = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1e12
STABILITY_LIMIT = 2.5

Field = Callable[[np.ndarray], np.ndarray]


class IntegratorConfig:
    """Fixed-step RK4 settings.

    Parameters
    ----------
    h: :class:`float`
        The step size.
    t_end: :class:`float`
        The final time. When it is not a multiple of ``h`` the last step is shortened.
    record_stride: :class:`int`
        Record every ``record_stride``-th step. The final state is always recorded.
    """

    __slots__: Tuple[str, ...] = ('h', 't_end', 'record_stride')

    def __init__(self, h: float = 1e-3, t_end: float = 20.0, record_stride: int = 10) -> None:
        if not (h > 0 and math.isfinite(h)):
            raise InvalidIntegratorConfig(f'h must be a positive finite number, got {h!r}.')
        if not (t_end > 0 and math.isfinite(t_end)):
            raise InvalidIntegratorConfig(f't_end must be a positive finite number, got {t_end!r}.')
        if t_end / h < 1 - 1e-12:
            raise InvalidIntegratorConfig(f't_end = {t_end!r} is shorter than one step h = {h!r}.')
        if isinstance(record_stride, bool) or int(record_stride) != record_stride or record_stride < 1:
            raise InvalidIntegratorConfig(f'record_stride must be a positive integer, got {record_stride!r}.')
        self.h = float(h)
        self.t_end = float(t_end)
        self.record_stride = int(record_stride)

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__} h: {self.h}, t_end: {self.t_end}, record_stride: {self.record_stride}>'

    @property
    def full_steps(self) -> int:
        """:class:`int`: The number of steps of length exactly ``h``."""
        n = int(math.floor(self.t_end / self.h + 1e-9))
        return max(n, 1)

    @property
    def remainder(self) -> float:
        """:class:`float`: Length of the shortened final step, 0 if ``t_end`` is a multiple of ``h``."""
        rest = self.t_end - self.full_steps * self.h
        return rest if rest > 1e-12 * self.t_end else 0.0

    def as_dict(self) -> Dict[str, Any]:
        return {'h': self.h, 't_end': self.t_end, 'record_stride': self.record_stride}


class Trajectory:
    """Recorded states of one integration.

    Attributes
    ----------
    times: :class:`numpy.ndarray`
        Strictly increasing record times starting at 0.
    states: :class:`numpy.ndarray`
        One flat state per row, aligned with :attr:`times`.
    layout: Optional[:class:`StateLayout`]
        How to split a row back into x, λ and v.
    metadata: Dict[:class:`str`, Any]
        Free-form run information (variant, gains, seed, config echo).
    """

    __slots__: Tuple[str, ...] = ('times', 'states', 'layout', 'metadata')

    def __init__(
        self,
        times: np.ndarray,
        states: np.ndarray,
        layout: Optional[StateLayout] = None,
        metadata: Optional[Dict[str, Any]] = None,
    ) -> None:
        self.times = times
        self.states = states
        self.layout = layout
        self.metadata = metadata if metadata is not None else {}

    def __repr__(self) -> str:
        end = self.times[-1] if len(self.times) else 0.0
        return f'<{self.__class__.__name__} records: {len(self)}, t_end: {end}>'

    def __len__(self) -> int:
        return len(self.times)

    def state_at(self, k: int) -> Union[SystemState, np.ndarray]:
        """Returns record ``k``, unpacked when a layout is known."""
        row = self.states[k]
        return self.layout.unpack(row) if self.layout is not None else row

    @property
    def final(self) -> Union[SystemState, np.ndarray]:
        return self.state_at(-1)

    def block(self, name: str) -> np.ndarray:
        """Returns the ``x``, ``lambda`` or ``v`` columns of every record."""
        if self.layout is None:
            raise ValueError('This trajectory has no state layout.')
        b = self.layout.block
        index = {'x': 0, 'lambda': 1, 'v': 2}[name]
        if index == 2 and not self.layout.has_v:
            raise ValueError('This trajectory has no velocity block.')
        return self.states[:, index * b : (index + 1) * b]


def _first_bad(y: np.ndarray) -> Optional[int]:
    ok = np.abs(y) <= DIVERGENCE_THRESHOLD
    if ok.all():
        return None
    return int(np.flatnonzero(~ok)[0])


def rk4_step(field: Field, state: np.ndarray, h: float, t: float = 0.0) -> np.ndarray:
    """Performs one classical four-stage Runge-Kutta step of an autonomous field.

    Parameters
    ----------
    field: Callable[[:class:`numpy.ndarray`], :class:`numpy.ndarray`]
        The vector field on flat states.
    state: :class:`numpy.ndarray`
        The current flat state.
    h: :class:`float`
        The step size.
    t: :class:`float`
        Time of ``state``, only used in error reports.

    Raises
    ------
    Divergence
        If any stage produces a non-finite value.
    """
    if not h > 0:
        raise InvalidIntegratorConfig(f'h must be positive, got {h!r}.')
    k1 = field(state)
    k2 = field(state + 0.5 * h * k1)
    k3 = field(state + 0.5 * h * k2)
    k4 = field(state + h * k3)
    for k in (k1, k2, k3, k4):
        finite = np.isfinite(k)
        if not finite.all():
            index = int(np.flatnonzero(~finite)[0])
            raise Divergence(t, index, float(k[index]))
    return state + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def integrate(
    field: Field,
    state0: Union[SystemState, np.ndarray],
    cfg: IntegratorConfig,
    *,
    layout: Optional[StateLayout] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> Trajectory:
    """Integrates ``field`` from ``state0`` over ``[0, cfg.t_end]`` with fixed-step RK4.

    Step ``k`` ends at time ``k·h`` exactly, so record times never accumulate
    rounding. Every ``cfg.record_stride``-th state and the final state are kept.

    Raises
    ------
    Divergence
        If a component leaves ``[-1e12, 1e12]`` or stops being finite. The
        exception carries everything recorded so far as ``partial``.
    """
    y = state0.flat() if isinstance(state0, SystemState) else np.array(state0, dtype=float)
    y = np.array(y, dtype=float, copy=True)
    if layout is not None and y.shape != (layout.size,):
        raise InvalidIntegratorConfig(f'state0 has {y.size} components, the layout expects {layout.size}.')

    h, stride = cfg.h, cfg.record_stride
    n_full = cfg.full_steps
    rest = cfg.remainder
    total = n_full + (1 if rest else 0)
    n_records = 1 + total // stride + (1 if total % stride else 0)

    times = np.empty(n_records)
    states = np.empty((n_records, y.size))
    times[0] = 0.0
    states[0] = y
    filled = 1

    def _partial() -> Trajectory:
        return Trajectory(times[:filled].copy(), states[:filled].copy(), layout, metadata)

    logger.debug('Integrating %d steps of h = %g (%d records)', total, h, n_records)
    for k in range(1, total + 1):
        step = h if k <= n_full else rest
        t_prev = (k - 1) * h
        try:
            y = rk4_step(field, y, step, t_prev)
        except Divergence as exc:
            exc.partial = _partial()
            logger.warning('Divergence at t = %.6g, component %d', t_prev, exc.index)
            raise

        t = k * h if k <= n_full else cfg.t_end
        bad = _first_bad(y)
        if bad is not None:
            logger.warning('Divergence at t = %.6g, component %d', t, bad)
            raise Divergence(t, bad, float(y[bad]), _partial())

        if k % stride == 0 or k == total:
            times[filled] = t
            states[filled] = y
            filled += 1

    logger.debug('Integration finished at t = %g', times[filled - 1])
    return Trajectory(times[:filled], states[:filled], layout, metadata)


def stability_index(gains: Gains, l_global: float, lambda_max_L: float, h: float) -> float:
    """Returns ``h·(c1·l + c2·λmax(L) + c4·λmax(L) + c5)``, the quantity behind :class:`StepSizeWarning`."""
    return h * (gains.c1 * l_global + gains.c2 * lambda_max_L + gains.c4 * lambda_max_L + gains.c5)


def check_step_size(gains: Gains, l_global: float, lambda_max_L: float, h: float) -> float:
    """Warns with :class:`StepSizeWarning` when :func:`stability_index` exceeds 2.5; returns the index."""
    index = stability_index(gains, l_global, lambda_max_L, h)
    if index > STABILITY_LIMIT:
        msg = f'Step size h = {h:g} looks too large for these gains (stability index {index:.3g} > {STABILITY_LIMIT}).'
        logger.warning(msg)
        warnings.warn(msg, StepSizeWarning, stacklevel=2)
    return index
