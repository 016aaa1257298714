# == presets.py ==#

from __future__ import annotations

from typing import Callable, Dict, Tuple, Union

from .config import CompareConfig, ExperimentConfig, parse_compare_config, parse_config
from .dynamics import Gains

__all__: Tuple[str, ...] = (
    'EXAMPLE1_GAINS',
    'EXAMPLE1_SEED',
    'EXAMPLE2_GAINS',
    'EXAMPLE2_SEED',
    'REPRODUCTIONS',
    'example1_config',
    'example1_nonconvex_config',
    'example2_config',
)

# == published gains ==#
EXAMPLE1_GAINS = Gains(c1=0.8, c2=2.9, c3=5.0, c4=5.0)

EXAMPLE2_GAINS = Gains(c1=0.14, c2=0.65, c3=0.156, c4=0.52, c5=0.52)

EXAMPLE1_SEED = 1

EXAMPLE2_SEED = 2


def _gains(g: Gains) -> Dict[str, float]:
    return g._asdict()


# == example 1: first-order dynamics on a 4-ring, n = 10 ==#
def _example1(objective: Dict[str, object], directory: str) -> Dict[str, object]:
    return {
        'graph': {'type': 'ring', 'n': 4},
        'objective': objective,
        'variant': 'first_order_pid',
        'gains': _gains(EXAMPLE1_GAINS),
        'integrator': {'h': 0.05, 't_end': 'auto', 'record_stride': 10},
        'init': {'seed': EXAMPLE1_SEED},
        'output': {'directory': directory},
    }


def example1_config() -> ExperimentConfig:
    objective = {'type': 'random_quadratic', 'N': 4, 'n': 10, 'seed': EXAMPLE1_SEED}
    return parse_config(_example1(objective, 'example1'))


def example1_nonconvex_config() -> ExperimentConfig:
    objective = {'type': 'example1_trig', 'n': 10, 'seed': EXAMPLE1_SEED}
    return parse_config(_example1(objective, 'example1_nonconvex'))


# == example 2: second-order dynamics against the frictionless baseline on a 20-ring, n = 7 ==#
def example2_config() -> CompareConfig:
    return parse_compare_config(
        {
            'graph': {'type': 'ring', 'n': 20},
            'objective': {'type': 'random_quadratic', 'N': 20, 'n': 7, 'seed': EXAMPLE2_SEED},
            'integrator': {'h': 0.1, 't_end': 'auto', 'record_stride': 10},
            'init': {'seed': EXAMPLE2_SEED},
            'output': {'directory': 'example2'},
            'runs': [
                {'label': 'second_order_pid', 'variant': 'second_order_pid', 'gains': _gains(EXAMPLE2_GAINS)},
                {'label': 'zhu2022', 'variant': 'zhu2022', 'gains': _gains(EXAMPLE2_GAINS._replace(c5=0.0))},
            ],
        }
    )


REPRODUCTIONS: Dict[str, Callable[[], Union[ExperimentConfig, CompareConfig]]] = {
    'example1': example1_config,
    'example1_nonconvex': example1_nonconvex_config,
    'example2': example2_config,
}
