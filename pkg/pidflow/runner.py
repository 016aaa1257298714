# == runner.py ==#

from __future__ import annotations

import asyncio
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from typing_extensions import Self

from .analysis import (
    ConditionReport,
    MetricsSeries,
    RateFit,
    auto_horizon,
    check_condition,
    fit_rate,
    linearized_rate,
    metrics,
    time_to_reach,
)
from .cache import OperatorCache, operator_key
from .config import (
    CompareConfig,
    EdgesGraphSpec,
    Example1TrigSpec,
    ExperimentConfig,
    QuadraticListSpec,
    RandomQuadraticSpec,
    config_hash,
    dump_config,
)
from .dynamics import DynamicsSpec, PrecomputedOperators, init_state, random_initial_x
from .emit import (
    plot_relative_error,
    write_comparison_csv,
    write_metrics_csv,
    write_summary_json,
    write_trajectory_csv,
)
from .exceptions import Divergence, InsufficientData
from .graph import Graph, LaplacianBundle, from_edges, laplacian_bundle, ring
from .integrator import IntegratorConfig, Trajectory, check_step_size, integrate
from .objectives import ObjectiveSet, central_minimizer, example1_trig_set, quadratic_set, random_quadratic_set

__all__: Tuple[str, ...] = (
    'COMPARISON_THRESHOLD',
    'CompareResult',
    'Problem',
    'RunResult',
    'Simulator',
    'build_problem',
)

logger = logging.getLogger(__name__)

# relative error level at which compared runs are ranked
COMPARISON_THRESHOLD = 1e-4

ProblemConfig = Union[ExperimentConfig, CompareConfig]


class Problem(NamedTuple):
    """Everything a run needs that does not depend on the variant or the gains.

    Attributes
    ----------
    graph: :class:`Graph`
        The communication graph.
    bundle: :class:`LaplacianBundle`
        Its Laplacian and spectral data.
    objectives: :class:`ObjectiveSet`
        The local costs.
    z_star: :class:`numpy.ndarray`
        The centralized minimizer.
    base_z_star: Optional[:class:`numpy.ndarray`]
        For trig-perturbed sets, the minimizer of the underlying quadratic set.
    cache: :class:`OperatorCache`
        Operators shared by the runs on this problem.
    """

    graph: Graph
    bundle: LaplacianBundle
    objectives: ObjectiveSet
    z_star: np.ndarray
    base_z_star: Optional[np.ndarray]
    cache: OperatorCache


def _build_graph(cfg: ProblemConfig) -> Graph:
    spec = cfg.graph
    if isinstance(spec, EdgesGraphSpec):
        return from_edges(spec.n, spec.edges)
    return ring(spec.n)


def build_problem(cfg: ProblemConfig, *, cache_size: int = 8) -> Problem:
    """Builds the graph, the objective set and the centralized minimizer of a config.

    Raises
    ------
    OracleFailure
        If the minimizer cannot be computed.
    """
    graph = _build_graph(cfg)
    bundle = laplacian_bundle(graph)
    spec = cfg.objective
    base_z_star = None

    if isinstance(spec, QuadraticListSpec):
        objectives = quadratic_set([np.array(Q) for Q in spec.Q], [np.array(q) for q in spec.q])
    elif isinstance(spec, Example1TrigSpec):
        base = random_quadratic_set(4, spec.n, _seed(spec.seed, cfg))
        objectives = example1_trig_set(base)
        base_z_star = central_minimizer(base)
    else:
        assert isinstance(spec, RandomQuadraticSpec)
        objectives = random_quadratic_set(spec.N, spec.n, _seed(spec.seed, cfg))

    z_star = central_minimizer(objectives)
    logger.info(
        'Problem: N = %d, n = %d, m = %.4g, l = %.4g, fiedler = %.4g',
        objectives.n_agents,
        objectives.dim,
        objectives.m_global,
        objectives.l_global,
        bundle.fiedler,
    )
    return Problem(graph, bundle, objectives, z_star, base_z_star, OperatorCache(cache_size))


def _seed(own: Optional[int], cfg: ProblemConfig) -> int:
    seed = own if own is not None else cfg.seed
    assert seed is not None
    return seed


class RunResult:
    """The outcome of one simulation.

    Attributes
    ----------
    label: :class:`str`
        Name of the run, the variant for single runs.
    config: :class:`ExperimentConfig`
        The validated config that produced it.
    spec: :class:`DynamicsSpec`
        Variant and gains.
    trajectory: :class:`Trajectory`
        The recorded states, partial if :attr:`divergence` is set.
    metrics: :class:`MetricsSeries`
        Convergence metrics along :attr:`trajectory`.
    fit: Optional[:class:`RateFit`]
        Tail rate fit of the relative error, if enough data was usable.
    condition: Optional[:class:`ConditionReport`]
        Gain condition, for the second-order variants.
    divergence: Optional[:class:`Divergence`]
        Set when the integration blew up.
    """

    __slots__: Tuple[str, ...] = (
        'label',
        'config',
        'spec',
        'problem',
        'trajectory',
        'metrics',
        'fit',
        'condition',
        'divergence',
        'linearized_rate',
        'integrator',
        'wall_clock_seconds',
    )

    def __init__(
        self,
        *,
        label: str,
        config: ExperimentConfig,
        spec: DynamicsSpec,
        problem: Problem,
        trajectory: Trajectory,
        metrics: MetricsSeries,
        fit: Optional[RateFit],
        condition: Optional[ConditionReport],
        divergence: Optional[Divergence],
        linearized_rate: Optional[float],
        integrator: IntegratorConfig,
        wall_clock_seconds: float,
    ) -> None:
        self.label = label
        self.config = config
        self.spec = spec
        self.problem = problem
        self.trajectory = trajectory
        self.metrics = metrics
        self.fit = fit
        self.condition = condition
        self.divergence = divergence
        self.linearized_rate = linearized_rate
        self.integrator = integrator
        self.wall_clock_seconds = wall_clock_seconds

    def __repr__(self) -> str:
        return (
            f'<{self.__class__.__name__} label: {self.label!r}, variant: {self.spec.variant.value}, '
            f'final relative error: {self.final_relative_error:.3e}>'
        )

    @property
    def diverged(self) -> bool:
        return self.divergence is not None

    @property
    def final_relative_error(self) -> float:
        return float(self.metrics.relative_error[-1])

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    @property
    def seed(self) -> Optional[int]:
        return self.config.seed

    def time_to(self, threshold: float = COMPARISON_THRESHOLD) -> Optional[float]:
        """Returns the first record time at which the relative error is at or below ``threshold``."""
        return time_to_reach(self.metrics.times, self.metrics.relative_error, threshold)

    def summary(self) -> Dict[str, Any]:
        """Returns the run summary. Only ``wall_clock_seconds`` differs between reruns."""
        m = self.metrics
        out: Dict[str, Any] = {
            'label': self.label,
            'variant': self.spec.variant.value,
            'gains': self.spec.display_gains(),
            'config': dump_config(self.config),
            'config_hash': self.config_hash,
            'seed': self.seed,
            'integrator': self.integrator.as_dict(),
            'linearized_rate': self.linearized_rate,
            'normalized': m.normalized,
            'initial_error': m.initial_error,
            'final_relative_error': self.final_relative_error,
            'final_consensus_error': float(m.consensus_error[-1]),
            'final_optimality_residual': float(m.optimality_residual[-1]),
            'max_lambda_sum_drift': float(m.lambda_sum_drift.max()),
            'time_to_threshold': {'threshold': COMPARISON_THRESHOLD, 'time': self.time_to()},
            'fitted_rate': self.fit.rate if self.fit else None,
            'r_squared': self.fit.r_squared if self.fit else None,
            'z_star': self.problem.z_star,
            'diverged': self.diverged,
            'divergence': str(self.divergence) if self.divergence else None,
            'condition': self.condition.as_dict() if self.condition else None,
            'wall_clock_seconds': self.wall_clock_seconds,
        }
        if self.problem.base_z_star is not None:
            out['z_star_gap_to_base'] = float(np.abs(self.problem.z_star - self.problem.base_z_star).max())
        return out

    def emit(self, directory: Union[str, Path], *, emit_csv: bool = True, emit_svg: bool = True) -> List[Path]:
        """Writes the trajectory and metrics CSVs, the summary JSON and the error plot into ``directory``."""
        directory = Path(directory)
        h, seed = self.config_hash, self.seed
        written = []
        if emit_csv:
            written.append(
                write_trajectory_csv(
                    directory / 'trajectory.csv', self.trajectory, config_hash=h, seed=seed, divergence=self.divergence
                )
            )
            written.append(write_metrics_csv(directory / 'metrics.csv', self.metrics, config_hash=h, seed=seed))
        written.append(write_summary_json(directory / 'summary.json', self.summary()))
        if emit_svg:
            curve = {self.label: (self.metrics.times, self.metrics.relative_error)}
            written.append(
                plot_relative_error(directory / 'relative_error.svg', curve, config_hash=h, seed=seed, title=self.label)
            )
        logger.info('Wrote %d file(s) to %s', len(written), directory)
        return written


class CompareResult(NamedTuple):
    """Outcomes of a comparison in run-block order; failed blocks hold their exception."""

    config: CompareConfig
    results: Dict[str, Union[RunResult, BaseException]]

    @property
    def completed(self) -> Dict[str, RunResult]:
        return {label: r for label, r in self.results.items() if isinstance(r, RunResult)}

    @property
    def failures(self) -> Dict[str, BaseException]:
        return {label: r for label, r in self.results.items() if not isinstance(r, RunResult)}

    def ranking(self, threshold: float = COMPARISON_THRESHOLD) -> List[Tuple[str, float]]:
        """Orders the completed runs by the time they reach ``threshold``; never reaching it counts as infinity."""
        times = []
        for label, result in self.completed.items():
            t = result.time_to(threshold)
            times.append((label, float('inf') if t is None else t))
        return sorted(times, key=lambda item: item[1])

    def summary(self) -> Dict[str, Any]:
        return {
            'config_hash': config_hash(self.config),
            'seed': self.config.seed,
            'threshold': COMPARISON_THRESHOLD,
            'ranking': [{'label': label, 'time': t} for label, t in self.ranking()],
            'runs': {label: r.summary() for label, r in self.completed.items()},
            'failures': {label: f'{type(exc).__name__}: {exc}' for label, exc in self.failures.items()},
        }

    def emit(self, directory: Union[str, Path], *, emit_csv: bool = True, emit_svg: bool = True) -> List[Path]:
        """Writes per-run metrics, the merged comparison CSV, the overlay plot and one summary.

        Called from a single collector once every run has finished.
        """
        directory = Path(directory)
        h, seed = config_hash(self.config), self.config.seed
        curves = {label: (r.metrics.times, r.metrics.relative_error) for label, r in self.completed.items()}
        written = []
        if emit_csv:
            for label, result in self.completed.items():
                written.append(
                    write_metrics_csv(directory / label / 'metrics.csv', result.metrics, config_hash=h, seed=seed)
                )
            if curves:
                written.append(write_comparison_csv(directory / 'comparison.csv', curves, config_hash=h, seed=seed))
        written.append(write_summary_json(directory / 'summary.json', self.summary()))
        if emit_svg and curves:
            written.append(
                plot_relative_error(directory / 'comparison.svg', curves, config_hash=h, seed=seed, title='comparison')
            )
        logger.info('Wrote %d file(s) to %s', len(written), directory)
        return written


class Simulator:
    """Builds problems from configs and runs them, one at a time or concurrently.

    Parameters
    ----------
    max_workers: Optional[:class:`int`]
        Threads used by :meth:`compare`. Defaults to one per run block.
    cache_size: :class:`int`
        Size of the operator cache of every problem built.

    Examples
    --------
    .. code-block:: python3

        async with Simulator() as sim:
            result = await sim.compare(cfg)
    """

    def __init__(self, *, max_workers: Optional[int] = None, cache_size: int = 8) -> None:
        self._max_workers = max_workers
        self._cache_size = cache_size
        self._executor: Optional[ThreadPoolExecutor] = None

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__} max_workers: {self._max_workers}, started: {self._executor is not None}>'

    async def __aenter__(self) -> Self:
        return self

    async def __aexit__(self, *args: Any, **kwargs: Any) -> None:
        self.close()

    def close(self) -> None:
        """Shuts down the worker threads, if any were started."""
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def problem(self, cfg: ProblemConfig) -> Problem:
        return build_problem(cfg, cache_size=self._cache_size)

    def operators(self, problem: Problem, spec: DynamicsSpec) -> PrecomputedOperators:
        key = operator_key(spec.variant, spec.gains.c3)
        return problem.cache.get_or_build(key, lambda: spec.operators(problem.bundle, problem.objectives))

    def horizon(self, cfg: ExperimentConfig, problem: Problem) -> Tuple[float, Optional[float]]:
        """Returns the final time of a run and, for ``"auto"``, the linearized rate it came from."""
        icfg = cfg.integrator
        if icfg.t_end != 'auto':
            return float(icfg.t_end), None
        spec = DynamicsSpec(cfg.variant, cfg.gains.to_gains())
        rate = linearized_rate(spec.variant, spec.gains, self.operators(problem, spec))
        t_end = auto_horizon(rate, icfg.horizon_reduction, icfg.h, icfg.record_stride, icfg.max_t_end)
        logger.info('Linearized rate %.4e, running to t = %g', rate, t_end)
        return t_end, rate

    def run(
        self,
        cfg: ExperimentConfig,
        *,
        problem: Optional[Problem] = None,
        label: Optional[str] = None,
        t_end: Optional[float] = None,
    ) -> RunResult:
        """Runs one simulation.

        Parameters
        ----------
        cfg: :class:`ExperimentConfig`
            The validated config.
        problem: Optional[:class:`Problem`]
            A problem built from ``cfg`` earlier, to share operators between runs.
        label: Optional[:class:`str`]
            Name of the run, defaults to the variant.
        t_end: Optional[:class:`float`]
            Overrides the final time of the config.

        A divergence does not raise; it is reported on the result together with
        the trajectory recorded up to the failure.
        """
        started = time.perf_counter()
        if problem is None:
            problem = self.problem(cfg)
        spec = DynamicsSpec(cfg.variant, cfg.gains.to_gains())
        label = label or spec.variant.value
        ops = self.operators(problem, spec)

        rate = None
        if t_end is None:
            t_end, rate = self.horizon(cfg, problem)
        icfg = IntegratorConfig(cfg.integrator.h, t_end, cfg.integrator.record_stride)
        check_step_size(spec.gains, problem.objectives.l_global, problem.bundle.lambda_max_L, icfg.h)

        N, n = problem.objectives.n_agents, problem.objectives.dim
        init = cfg.init
        x0 = np.array(init.x0) if init.x0 is not None else random_initial_x(N, n, _seed(None, cfg))
        state0 = init_state(spec.variant, x0, init.v0, init.lambda0, n_agents=N)

        layout = ops.layout(spec.variant)
        meta = {'label': label, 'variant': spec.variant.value, 'gains': tuple(spec.gains), 'seed': cfg.seed}
        logger.info('Running %s to t = %g with h = %g', label, icfg.t_end, icfg.h)
        divergence = None
        try:
            traj = integrate(spec.field(ops), state0, icfg, layout=layout, metadata=meta)
        except Divergence as exc:
            logger.error('%s diverged: %s', label, exc)
            divergence = exc
            assert exc.partial is not None
            traj = exc.partial

        series = metrics(traj, problem.objectives, problem.bundle, problem.z_star)
        try:
            fit = fit_rate(series.times, series.relative_error)
        except InsufficientData as exc:
            logger.warning('No rate fit for %s: %s', label, exc)
            fit = None

        condition = None
        if spec.variant.is_second_order:
            condition = check_condition(spec.variant, spec.gains, problem.objectives.l_global, problem.bundle)

        result = RunResult(
            label=label,
            config=cfg,
            spec=spec,
            problem=problem,
            trajectory=traj,
            metrics=series,
            fit=fit,
            condition=condition,
            divergence=divergence,
            linearized_rate=rate,
            integrator=icfg,
            wall_clock_seconds=time.perf_counter() - started,
        )
        logger.info('%s finished: final relative error %.3e', label, result.final_relative_error)
        return result

    async def compare(self, cfg: CompareConfig) -> CompareResult:
        """Runs every block of ``cfg`` concurrently on one shared problem.

        For ``t_end = "auto"`` the horizon is taken from the first run block so
        that every curve covers the same time span. A failing block does not
        stop the others; its exception is kept in the result.
        """
        problem = self.problem(cfg)
        blocks = cfg.experiments()
        t_end, _ = self.horizon(blocks[0][1], problem)

        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self._max_workers or len(blocks))
        loop = asyncio.get_running_loop()

        def job(label: str, exp: ExperimentConfig) -> RunResult:
            return self.run(exp, problem=problem, label=label, t_end=t_end)

        futures = [loop.run_in_executor(self._executor, job, label, exp) for label, exp in blocks]
        outcomes = await asyncio.gather(*futures, return_exceptions=True)
        results: Dict[str, Union[RunResult, BaseException]] = {}
        for (label, _), outcome in zip(blocks, outcomes):
            if isinstance(outcome, BaseException):
                logger.error('Run %s failed: %s', label, outcome)
            results[label] = outcome
        return CompareResult(cfg, results)
