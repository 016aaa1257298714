from __future__ import annotations

import copy
import json
import tempfile
import unittest
from pathlib import Path
from typing import Any, Dict

from pidflow.config import (
    CompareConfig,
    ExperimentConfig,
    RingGraphSpec,
    config_hash,
    load_compare_config,
    load_config,
    parse_compare_config,
    parse_config,
)
from pidflow.dynamics import DynamicsVariant, Gains
from pidflow.exceptions import ConfigError
from pidflow.presets import REPRODUCTIONS, example1_config, example2_config


def base_config() -> Dict[str, Any]:
    return {
        'graph': {'type': 'ring', 'n': 3},
        'objective': {'type': 'random_quadratic', 'N': 3, 'n': 2, 'seed': 4},
        'variant': 'second_order_pid',
        'gains': {'c1': 1.0, 'c2': 1.0, 'c3': 1.0, 'c4': 1.0, 'c5': 1.0},
        'integrator': {'h': 0.01, 't_end': 2.0, 'record_stride': 10},
    }


def compare_config() -> Dict[str, Any]:
    data = base_config()
    del data['variant'], data['gains']
    gains = {'c1': 1.0, 'c2': 1.0, 'c3': 1.0, 'c4': 1.0, 'c5': 1.0}
    data['runs'] = [
        {'label': 'pid', 'variant': 'second_order_pid', 'gains': gains},
        {'label': 'baseline', 'variant': 'zhu2022', 'gains': dict(gains, c5=0.0)},
    ]
    return data


class TestParseConfig(unittest.TestCase):
    def assertConfigError(self, data: Dict[str, Any], field: str) -> ConfigError:
        with self.assertRaises(ConfigError) as ctx:
            parse_config(data)
        self.assertIsNotNone(ctx.exception.field)
        assert ctx.exception.field is not None
        self.assertTrue(ctx.exception.field.startswith(field), ctx.exception.field)
        return ctx.exception

    def test_valid_config(self) -> None:
        cfg = parse_config(base_config())
        self.assertIsInstance(cfg, ExperimentConfig)
        self.assertIs(cfg.variant, DynamicsVariant.SECOND_ORDER_PID)
        self.assertIsInstance(cfg.graph, RingGraphSpec)
        self.assertEqual(cfg.gains.to_gains(), Gains(1.0, 1.0, 1.0, 1.0, 1.0))
        self.assertEqual((cfg.n_agents, cfg.dim, cfg.seed), (3, 2, 4))
        self.assertEqual(cfg.output.directory, 'pidflow-out')
        self.assertTrue(cfg.output.emit_svg)

    def test_json_text(self) -> None:
        self.assertEqual(parse_config(json.dumps(base_config())), parse_config(base_config()))

    def test_auto_horizon(self) -> None:
        data = base_config()
        data['integrator']['t_end'] = 'auto'
        self.assertEqual(parse_config(data).integrator.t_end, 'auto')
        data['integrator']['t_end'] = 'soon'
        self.assertConfigError(data, 'integrator.t_end')

    def test_negative_gain_names_the_field(self) -> None:
        data = base_config()
        data['gains']['c1'] = -1.0
        exc = self.assertConfigError(data, 'gains.c1')
        self.assertIn('gains.c1', str(exc))

    def test_missing_gains(self) -> None:
        data = base_config()
        del data['gains']
        self.assertConfigError(data, 'gains')

    def test_unknown_keys_are_rejected(self) -> None:
        data = base_config()
        data['gains']['c6'] = 1.0
        self.assertConfigError(data, 'gains.c6')

    def test_unknown_variant(self) -> None:
        data = base_config()
        data['variant'] = 'third_order'
        self.assertConfigError(data, 'variant')

    def test_friction_required_for_second_order(self) -> None:
        data = base_config()
        data['gains']['c5'] = 0.0
        self.assertConfigError(data, 'gains.c5')
        data['variant'] = 'zhu2022'
        self.assertEqual(parse_config(data).variant, DynamicsVariant.ZHU2022)

    def test_agent_count_mismatch(self) -> None:
        data = base_config()
        data['objective']['N'] = 4
        self.assertConfigError(data, 'objective.N')

    def test_ring_too_small(self) -> None:
        data = base_config()
        data['graph']['n'] = 2
        self.assertConfigError(data, 'graph')

    def test_fractional_edge_indices(self) -> None:
        data = base_config()
        data['graph'] = {'type': 'edges', 'n': 3, 'edges': [[1.7, 2.9], [2, 3]]}
        self.assertConfigError(data, 'graph.edges.0')
        data['graph']['edges'] = [[1.0, 2.0], [2, 3, 0.5]]
        self.assertEqual(parse_config(data).graph.edges[1], [2.0, 3.0, 0.5])

    def test_initial_state_length(self) -> None:
        data = base_config()
        data['init'] = {'x0': [0.0] * 5}
        self.assertConfigError(data, 'init.x0')

    def test_seed_is_required(self) -> None:
        data = base_config()
        del data['objective']['seed']
        self.assertConfigError(data, 'init.seed')

    def test_init_seed_takes_precedence(self) -> None:
        data = base_config()
        data['init'] = {'seed': 9}
        self.assertEqual(parse_config(data).seed, 9)

    def test_explicit_quadratics_need_no_seed(self) -> None:
        data = base_config()
        data['objective'] = {
            'type': 'quadratic_list',
            'Q': [[[1.0, 0.0], [0.0, 1.0]]] * 3,
            'q': [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]],
        }
        data['init'] = {'x0': [0.0] * 6}
        cfg = parse_config(data)
        self.assertIsNone(cfg.seed)
        self.assertEqual(cfg.dim, 2)

    def test_trig_benchmark_needs_four_agents(self) -> None:
        data = base_config()
        data['objective'] = {'type': 'example1_trig', 'n': 2, 'seed': 1}
        self.assertConfigError(data, 'graph.n')

    def test_load_config(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'config.json'
            path.write_text(json.dumps(base_config()), encoding='utf-8')
            self.assertEqual(load_config(path), parse_config(base_config()))
            with self.assertRaises(ConfigError):
                load_config(Path(tmp) / 'missing.json')
            path.write_text('{not json', encoding='utf-8')
            with self.assertRaises(ConfigError):
                load_config(path)


class TestConfigHash(unittest.TestCase):
    def test_stable_across_key_order(self) -> None:
        data = base_config()
        reordered = dict(reversed(list(copy.deepcopy(data).items())))
        self.assertEqual(config_hash(parse_config(data)), config_hash(parse_config(reordered)))

    def test_changes_with_content(self) -> None:
        data = base_config()
        before = config_hash(parse_config(data))
        data['gains']['c1'] = 2.0
        self.assertNotEqual(before, config_hash(parse_config(data)))
        self.assertEqual(len(before), 64)


class TestCompareConfig(unittest.TestCase):
    def test_experiments_share_the_problem(self) -> None:
        cfg = parse_compare_config(compare_config())
        self.assertIsInstance(cfg, CompareConfig)
        experiments = cfg.experiments()
        self.assertEqual([label for label, _ in experiments], ['pid', 'baseline'])
        for _, exp in experiments:
            self.assertEqual(exp.graph, cfg.graph)
            self.assertEqual(exp.objective, cfg.objective)
        self.assertIs(experiments[1][1].variant, DynamicsVariant.ZHU2022)

    def test_needs_two_runs(self) -> None:
        data = compare_config()
        data['runs'] = data['runs'][:1]
        with self.assertRaises(ConfigError):
            parse_compare_config(data)

    def test_duplicate_labels(self) -> None:
        data = compare_config()
        data['runs'][1]['label'] = 'pid'
        with self.assertRaises(ConfigError) as ctx:
            parse_compare_config(data)
        self.assertEqual(ctx.exception.field, 'runs')

    def test_run_graph_must_match(self) -> None:
        data = compare_config()
        data['runs'][0]['graph'] = {'type': 'ring', 'n': 3}
        parse_compare_config(data)
        data['runs'][1]['graph'] = {'type': 'edges', 'n': 3, 'edges': [[1, 2], [2, 3]]}
        with self.assertRaises(ConfigError) as ctx:
            parse_compare_config(data)
        self.assertEqual(ctx.exception.field, 'runs.1.graph')

    def test_run_gains_are_checked(self) -> None:
        data = compare_config()
        data['runs'][0]['gains']['c5'] = 0.0
        with self.assertRaises(ConfigError) as ctx:
            parse_compare_config(data)
        self.assertEqual(ctx.exception.field, 'runs.0.gains.c5')

    def test_load_compare_config(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'compare.json'
            path.write_text(json.dumps(compare_config()), encoding='utf-8')
            self.assertEqual(len(load_compare_config(path).runs), 2)


class TestPresets(unittest.TestCase):
    def test_reproductions_validate(self) -> None:
        for name, factory in REPRODUCTIONS.items():
            with self.subTest(name=name):
                self.assertIsNotNone(config_hash(factory()))

    def test_published_constants(self) -> None:
        cfg = example1_config()
        self.assertEqual(cfg.gains.to_gains(), Gains(0.8, 2.9, 5.0, 5.0))
        self.assertEqual((cfg.n_agents, cfg.dim, cfg.seed), (4, 10, 1))
        cmp = example2_config()
        self.assertEqual((cmp.n_agents, cmp.dim, cmp.seed), (20, 7, 2))
        self.assertEqual(cmp.runs[0].gains.to_gains(), Gains(0.14, 0.65, 0.156, 0.52, 0.52))
        self.assertEqual(cmp.runs[1].gains.c5, 0.0)


if __name__ == '__main__':
    unittest.main()
