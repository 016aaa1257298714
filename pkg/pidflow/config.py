# == config.py ==#

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, PositiveInt, ValidationError
from typing_extensions import Annotated

from .dynamics import DynamicsVariant, Gains
from .exceptions import ConfigError

__all__: Tuple[str, ...] = (
    'CompareConfig',
    'CompareRun',
    'EdgesGraphSpec',
    'Example1TrigSpec',
    'ExperimentConfig',
    'GainsSpec',
    'InitSpec',
    'IntegratorSpec',
    'OutputSpec',
    'QuadraticListSpec',
    'RandomQuadraticSpec',
    'RingGraphSpec',
    'config_hash',
    'dump_config',
    'load_compare_config',
    'load_config',
    'parse_compare_config',
    'parse_config',
)

logger = logging.getLogger(__name__)

M = TypeVar('M', bound=BaseModel)


class _Model(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class RingGraphSpec(_Model):
    type: Literal['ring']
    n: int = Field(ge=3, description='Number of agents on the cycle')


class EdgesGraphSpec(_Model):
    type: Literal['edges']
    n: PositiveInt
    edges: List[List[float]] = Field(default_factory=list, description='1-based [i, j] or [i, j, weight] entries')


GraphSpec = Annotated[Union[RingGraphSpec, EdgesGraphSpec], Field(discriminator='type')]


class RandomQuadraticSpec(_Model):
    type: Literal['random_quadratic']
    N: PositiveInt
    n: PositiveInt
    seed: Optional[int] = None


class Example1TrigSpec(_Model):
    type: Literal['example1_trig']
    n: PositiveInt = 10
    seed: Optional[int] = None


class QuadraticListSpec(_Model):
    type: Literal['quadratic_list']
    Q: List[List[List[float]]]
    q: List[List[float]]


ObjectiveSpec = Annotated[
    Union[RandomQuadraticSpec, Example1TrigSpec, QuadraticListSpec], Field(discriminator='type')
]


class GainsSpec(_Model):
    c1: PositiveFloat
    c2: PositiveFloat
    c3: PositiveFloat
    c4: PositiveFloat
    c5: NonNegativeFloat = 0.0

    def to_gains(self) -> Gains:
        return Gains(self.c1, self.c2, self.c3, self.c4, self.c5)


class IntegratorSpec(_Model):
    h: PositiveFloat = 1e-3
    t_end: Union[PositiveFloat, Literal['auto']] = 20.0
    record_stride: PositiveInt = 10
    horizon_reduction: float = Field(1e-8, gt=0.0, lt=1.0)
    max_t_end: PositiveFloat = 20000.0


class InitSpec(_Model):
    seed: Optional[int] = None
    x0: Optional[List[float]] = None
    lambda0: Optional[List[float]] = None
    v0: Optional[List[float]] = None


class OutputSpec(_Model):
    directory: str = 'pidflow-out'
    emit_csv: bool = True
    emit_svg: bool = True


class _Problem(_Model):
    graph: GraphSpec
    objective: ObjectiveSpec
    integrator: IntegratorSpec = IntegratorSpec()
    init: InitSpec = InitSpec()
    output: OutputSpec = OutputSpec()

    @property
    def n_agents(self) -> int:
        return self.graph.n

    @property
    def dim(self) -> int:
        obj = self.objective
        if isinstance(obj, QuadraticListSpec):
            return len(obj.q[0]) if obj.q else 0
        return obj.n

    @property
    def seed(self) -> Optional[int]:
        """Optional[:class:`int`]: The experiment seed, ``init.seed`` taking precedence over ``objective.seed``."""
        if self.init.seed is not None:
            return self.init.seed
        return getattr(self.objective, 'seed', None)


class ExperimentConfig(_Problem):
    """A single simulation run."""

    variant: DynamicsVariant
    gains: GainsSpec


class CompareRun(_Model):
    label: str = Field(min_length=1)
    variant: DynamicsVariant
    gains: GainsSpec
    graph: Optional[GraphSpec] = None


class CompareConfig(_Problem):
    """Several variant and gain blocks run on one shared problem."""

    runs: List[CompareRun] = Field(min_length=2)

    def experiments(self) -> List[Tuple[str, ExperimentConfig]]:
        """Expands every run block into a standalone :class:`ExperimentConfig`."""
        shared = self.model_dump(exclude={'runs'})
        out = []
        for run in self.runs:
            data = dict(shared, variant=run.variant, gains=run.gains.model_dump())
            out.append((run.label, ExperimentConfig.model_validate(data)))
        return out


def config_hash(cfg: BaseModel) -> str:
    """Returns the SHA-256 of the canonical JSON dump of a validated config."""
    payload = json.dumps(cfg.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


def _loc(error: Mapping[str, Any]) -> str:
    return '.'.join(str(part) for part in error.get('loc', ()))


def _validate(model: Type[M], data: Union[str, bytes, Mapping[str, Any]]) -> M:
    try:
        if isinstance(data, (str, bytes)):
            return model.model_validate_json(data)
        return model.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = _loc(first) or None
        raise ConfigError(f"{first['msg']} ({exc.error_count()} error(s))", field) from exc


def _check_problem(cfg: _Problem) -> None:
    N, n = cfg.n_agents, cfg.dim
    obj = cfg.objective

    if isinstance(cfg.graph, EdgesGraphSpec):
        for k, edge in enumerate(cfg.graph.edges):
            if len(edge) not in (2, 3) or not all(float(v).is_integer() for v in edge[:2]):
                raise ConfigError(
                    f'expected two integer agent indices and an optional weight, got {edge}', f'graph.edges.{k}'
                )


    if isinstance(obj, RandomQuadraticSpec) and obj.N != N:
        raise ConfigError(f'objective has {obj.N} agents but the graph has {N}', 'objective.N')
    if isinstance(obj, Example1TrigSpec) and N != 4:
        raise ConfigError(f'example1_trig needs a 4 agent graph, got {N}', 'graph.n')
    if isinstance(obj, QuadraticListSpec):
        if len(obj.Q) != N or len(obj.q) != N:
            raise ConfigError(f'expected {N} matrices and vectors, got {len(obj.Q)} and {len(obj.q)}', 'objective')
        for i, (Q, q) in enumerate(zip(obj.Q, obj.q)):
            if len(q) != n or len(Q) != n or any(len(row) != n for row in Q):
                raise ConfigError(f'local {i + 1} does not have dimension {n}', 'objective')

    for name in ('x0', 'lambda0', 'v0'):
        value = getattr(cfg.init, name)
        if value is not None and len(value) != N * n:
            raise ConfigError(f'expected {N * n} entries, got {len(value)}', f'init.{name}')

    needs_seed = not isinstance(obj, QuadraticListSpec) or cfg.init.x0 is None
    if needs_seed and cfg.seed is None:
        raise ConfigError('a seed is required when anything is generated randomly', 'init.seed')


def _check_gains(variant: DynamicsVariant, gains: GainsSpec, prefix: str = 'gains') -> None:
    if variant in (DynamicsVariant.SECOND_ORDER_PID, DynamicsVariant.COROLLARY) and not gains.c5 > 0:
        raise ConfigError(f'c5 must be strictly positive for {variant.value}', f'{prefix}.c5')


def parse_config(data: Union[str, bytes, Mapping[str, Any]]) -> ExperimentConfig:
    """Validates a single-run config given as JSON text or a mapping.

    Raises
    ------
    ConfigError
        With the dotted path of the first offending field.
    """
    cfg = _validate(ExperimentConfig, data)
    _check_problem(cfg)
    _check_gains(cfg.variant, cfg.gains)
    return cfg


def parse_compare_config(data: Union[str, bytes, Mapping[str, Any]]) -> CompareConfig:
    """Validates a comparison config. Run blocks that name a graph must repeat the shared one."""
    cfg = _validate(CompareConfig, data)
    _check_problem(cfg)
    labels = [run.label for run in cfg.runs]
    if len(set(labels)) != len(labels):
        raise ConfigError('run labels must be unique', 'runs')
    for i, run in enumerate(cfg.runs):
        if run.graph is not None and run.graph != cfg.graph:
            raise ConfigError('every run must share the graph of the comparison', f'runs.{i}.graph')
        _check_gains(run.variant, run.gains, f'runs.{i}.gains')
    return cfg


def _read(path: Union[str, Path]) -> str:
    try:
        return Path(path).read_text(encoding='utf-8')
    except OSError as exc:
        raise ConfigError(f'cannot read {path}: {exc.strerror or exc}') from exc


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    logger.debug('Loading config %s', path)
    return parse_config(_read(path))


def load_compare_config(path: Union[str, Path]) -> CompareConfig:
    logger.debug('Loading comparison config %s', path)
    return parse_compare_config(_read(path))


def dump_config(cfg: BaseModel) -> Dict[str, Any]:
    """Returns the JSON-ready echo of a config embedded in summaries."""
    return cfg.model_dump(mode='json')
