from __future__ import annotations

import contextlib
import functools
import io
import json
import tempfile
import unittest
import warnings
from pathlib import Path
from typing import Any, Dict, List, Tuple
from unittest import mock

from pidflow.cli import EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, EXIT_ORACLE, build_parser, main
from pidflow.emit import TRUNCATION_MARKER
from pidflow.objectives import central_minimizer


def small_config(**overrides: Any) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        'graph': {'type': 'ring', 'n': 3},
        'objective': {'type': 'random_quadratic', 'N': 3, 'n': 2, 'seed': 5},
        'variant': 'first_order_pid',
        'gains': {'c1': 0.8, 'c2': 2.9, 'c3': 5.0, 'c4': 5.0},
        'integrator': {'h': 0.05, 't_end': 5.0, 'record_stride': 10},
    }
    data.update(overrides)
    return data


class CLITestCase(unittest.TestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.dir = Path(self._tmp.name)

    def write(self, name: str, data: Dict[str, Any]) -> str:
        path = self.dir / name
        path.write_text(json.dumps(data), encoding='utf-8')
        return str(path)

    def invoke(self, *argv: str) -> Tuple[int, str]:
        out = io.StringIO()
        with contextlib.redirect_stdout(out), warnings.catch_warnings():
            warnings.simplefilter('ignore')
            code = main(['--quiet', *argv])
        return code, out.getvalue()

    def files(self, directory: Path) -> List[str]:
        return sorted(p.name for p in directory.iterdir())


class TestParser(unittest.TestCase):
    def test_global_flags_before_and_after_the_command(self) -> None:
        parser = build_parser()
        before = parser.parse_args(['--out-dir', 'a', '--no-svg', 'run', 'cfg.json'])
        after = parser.parse_args(['run', 'cfg.json', '--out-dir', 'a', '--no-svg'])
        for args in (before, after):
            self.assertEqual((args.out_dir, args.no_svg, args.config), ('a', True, 'cfg.json'))

    def test_defaults(self) -> None:
        args = build_parser().parse_args(['reproduce', 'example2'])
        self.assertIsNone(args.out_dir)
        self.assertFalse(args.no_svg)
        self.assertFalse(args.quiet)

    def test_unknown_example(self) -> None:
        with self.assertRaises(SystemExit), contextlib.redirect_stderr(io.StringIO()):
            build_parser().parse_args(['reproduce', 'example3'])


class TestRun(CLITestCase):
    def test_run_writes_three_files(self) -> None:
        out = self.dir / 'out'
        code, stdout = self.invoke('run', self.write('c.json', small_config()), '--out-dir', str(out), '--no-svg')
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(self.files(out), ['metrics.csv', 'summary.json', 'trajectory.csv'])
        self.assertIn('first_order_pid: final relative error', stdout)
        summary = json.loads((out / 'summary.json').read_text(encoding='utf-8'))
        self.assertEqual(summary['variant'], 'first_order_pid')
        self.assertFalse(summary['diverged'])
        self.assertLess(summary['final_relative_error'], 1.0)

    def test_run_with_plot(self) -> None:
        out = self.dir / 'out'
        code, _ = self.invoke('run', self.write('c.json', small_config()), '--out-dir', str(out))
        self.assertEqual(code, EXIT_OK)
        self.assertIn('relative_error.svg', self.files(out))

    def test_rerun_is_byte_identical(self) -> None:
        path = self.write('c.json', small_config())
        self.invoke('run', path, '--out-dir', str(self.dir / 'a'), '--no-svg')
        self.invoke('run', path, '--out-dir', str(self.dir / 'b'), '--no-svg')
        for name in ('metrics.csv', 'trajectory.csv'):
            self.assertEqual((self.dir / 'a' / name).read_bytes(), (self.dir / 'b' / name).read_bytes())

    def test_negative_gain_exits_with_config_error(self) -> None:
        data = small_config()
        data['gains']['c1'] = -0.8
        with self.assertLogs('pidflow.cli', level='ERROR') as logs:
            code, _ = self.invoke('run', self.write('c.json', data))
        self.assertEqual(code, EXIT_CONFIG)
        self.assertIn('gains.c1', logs.output[0])

    def test_missing_file(self) -> None:
        code, _ = self.invoke('run', str(self.dir / 'nope.json'))
        self.assertEqual(code, EXIT_CONFIG)

    def test_divergence_keeps_a_truncated_trajectory(self) -> None:
        data = small_config(gains={'c1': 50.0, 'c2': 50.0, 'c3': 0.1, 'c4': 50.0})
        data['integrator'] = {'h': 1.0, 't_end': 200.0, 'record_stride': 1}
        out = self.dir / 'out'
        code, _ = self.invoke('run', self.write('c.json', data), '--out-dir', str(out), '--no-svg')
        self.assertEqual(code, EXIT_DIVERGENCE)
        lines = (out / 'trajectory.csv').read_text(encoding='utf-8').splitlines()
        self.assertTrue(lines[-1].startswith(TRUNCATION_MARKER))
        summary = json.loads((out / 'summary.json').read_text(encoding='utf-8'))
        self.assertTrue(summary['diverged'])

    def test_oracle_failure_exit_code(self) -> None:
        data = small_config(graph={'type': 'ring', 'n': 4}, objective={'type': 'example1_trig', 'n': 3, 'seed': 1})
        path = self.write('trig.json', data)
        # the perturbed sum needs Newton, which gives up at once without iterations
        capped = functools.partial(central_minimizer, max_iter=0)
        with mock.patch('pidflow.runner.central_minimizer', side_effect=capped):
            code, _ = self.invoke('run', path, '--out-dir', str(self.dir / 'out'), '--no-svg')
        self.assertEqual(code, EXIT_ORACLE)
        self.assertFalse((self.dir / 'out').exists())

    def test_singular_objective_is_a_config_error(self) -> None:
        ones = [[1.0, 1.0], [1.0, 1.0]]
        data = small_config(
            objective={'type': 'quadratic_list', 'Q': [ones, ones, ones], 'q': [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]},
            init={'seed': 1},
        )
        code, _ = self.invoke('run', self.write('flat.json', data), '--out-dir', str(self.dir / 'out'), '--no-svg')
        self.assertEqual(code, EXIT_CONFIG)


class TestCompare(CLITestCase):
    def compare_config(self) -> Dict[str, Any]:
        data = small_config()
        del data['variant'], data['gains']
        gains = {'c1': 1.0, 'c2': 1.0, 'c3': 1.0, 'c4': 1.0, 'c5': 1.0}
        data['runs'] = [
            {'label': 'a', 'variant': 'second_order_pid', 'gains': gains},
            {'label': 'b', 'variant': 'second_order_pid', 'gains': gains},
        ]
        return data

    def test_identical_blocks_give_identical_curves(self) -> None:
        out = self.dir / 'out'
        code, stdout = self.invoke('compare', self.write('c.json', self.compare_config()), '--out-dir', str(out))
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(self.files(out), ['a', 'b', 'comparison.csv', 'comparison.svg', 'summary.json'])
        self.assertEqual((out / 'a' / 'metrics.csv').read_bytes(), (out / 'b' / 'metrics.csv').read_bytes())
        rows = [line.split(',') for line in (out / 'comparison.csv').read_text().splitlines() if not line.startswith('#')]
        self.assertEqual(rows[0], ['time', 'a', 'b'])
        self.assertTrue(all(row[1] == row[2] for row in rows[1:]))
        self.assertIn('reaches the comparison threshold', stdout)

    def test_mismatched_graph_exits_with_config_error(self) -> None:
        data = self.compare_config()
        data['runs'][1]['graph'] = {'type': 'edges', 'n': 3, 'edges': [[1, 2], [2, 3]]}
        code, _ = self.invoke('compare', self.write('c.json', data))
        self.assertEqual(code, EXIT_CONFIG)


class TestCheck(CLITestCase):
    def second_order(self) -> Dict[str, Any]:
        return small_config(variant='second_order_pid', gains={'c1': 0.14, 'c2': 0.65, 'c3': 0.156, 'c4': 0.52, 'c5': 0.52})

    def test_text_report(self) -> None:
        code, stdout = self.invoke('check', self.write('c.json', self.second_order()))
        self.assertEqual(code, EXIT_OK)
        for key in ('sigma =', 'sigma1 =', 'sigma_below_sigma1_minus_one =', 'satisfied ='):
            self.assertIn(key, stdout)

    def test_json_report(self) -> None:
        code, stdout = self.invoke('check', self.write('c.json', self.second_order()), '--json')
        self.assertEqual(code, EXIT_OK)
        report = json.loads(stdout)
        self.assertEqual(report['variant'], 'second_order_pid')
        self.assertIsInstance(report['satisfied'], bool)

    def test_first_order_is_a_config_error(self) -> None:
        code, _ = self.invoke('check', self.write('c.json', small_config()))
        self.assertEqual(code, EXIT_CONFIG)

    def test_missing_gains(self) -> None:
        data = self.second_order()
        del data['gains']
        code, _ = self.invoke('check', self.write('c.json', data))
        self.assertEqual(code, EXIT_CONFIG)


if __name__ == '__main__':
    unittest.main()
