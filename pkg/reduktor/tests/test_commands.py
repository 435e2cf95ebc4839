import io
import json
import logging
import tempfile
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from .helpers import SIGMA_X, complex_pairs, sigma_x_m

M_CONST = [[0.5, 0.3, 0.2], [0.3, 0.4, 0.3], [0.2, 0.3, 0.5]]


def sigma_x_config(**extra):
    config = {
        'B': complex_pairs(SIGMA_X[None, None]),
        'n': 2,
        'n2': 1,
        'nu': 1.0,
        'grid': {'t_max': 2.0, 'steps': 200},
    }
    config.update(extra)
    return config


def read_estimate(text):
    """Mean and stderr blocks of a simulate CSV."""
    rows = [line.split(',') for line in text.splitlines() if line and not line.startswith('#')][1:]
    mean = np.array([[float(x) for x in row[2:]] for row in rows if row[0] == 'mean'])
    stderr = np.array([[float(x) for x in row[2:]] for row in rows if row[0] == 'stderr'])
    return mean, stderr


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        logger = logging.getLogger('reduktor')
        self.addCleanup(logger.setLevel, logger.level)

    def write_config(self, payload, name='run.json'):
        path = Path(self.tmp.name) / name
        text = payload if isinstance(payload, str) else json.dumps(payload)
        path.write_text(text, encoding='utf-8')
        return str(path)

    def call(self, command, payload, **options):
        out = io.StringIO()
        call_command(command, config=self.write_config(payload), stdout=out, **options)
        return out.getvalue()

    def out_path(self, name):
        return str(Path(self.tmp.name) / name)


class SolveCommandTests(CommandTestCase):
    def test_zero_rate_returns_source(self):
        out_file = self.out_path('solve.csv')
        self.call('solve', sigma_x_config(nu=0.0), out=out_file)
        lines = Path(out_file).read_text().splitlines()
        self.assertEqual(lines[0], 't,entry_0_0,entry_0_1,entry_1_0,entry_1_1')
        last = [float(x) for x in lines[-1].split(',')]
        self.assertEqual(last[0], 2.0)
        np.testing.assert_allclose(np.reshape(last[1:], (2, 2)), sigma_x_m(2.0), atol=1e-12)

    def test_constant_source_reports_closed_form_error(self):
        output = self.call('solve', {'constant': M_CONST, 'nu': 1.0, 'grid': {'t_max': 4.0, 'steps': 4000}})
        summary = output.splitlines()[-1]
        self.assertIn('closed_form_error=', summary)
        error = float(summary.split('closed_form_error=')[1])
        self.assertLess(error, 1e-6)

    def test_reruns_are_byte_identical(self):
        config = sigma_x_config()
        first, second = self.out_path('a.csv'), self.out_path('b.csv')
        self.call('solve', config, out=first)
        self.call('solve', config, out=second)
        self.assertEqual(Path(first).read_bytes(), Path(second).read_bytes())

    def test_quiet_suppresses_summary(self):
        output = self.call('solve', sigma_x_config(), quiet=True)
        self.assertNotIn('final_compression', output)
        self.assertTrue(output.startswith('t,entry_0_0'))

    def test_summary_mentions_limit(self):
        output = self.call('solve', sigma_x_config())
        self.assertIn('distance_to_limit=', output.splitlines()[-1])


class SeriesCommandTests(CommandTestCase):
    def test_matches_solve(self):
        series_file, solve_file = self.out_path('series.csv'), self.out_path('solve.csv')
        output = self.call('series', sigma_x_config(), out=series_file)
        self.call('solve', sigma_x_config(), out=solve_file)
        series = np.loadtxt(series_file, delimiter=',', skiprows=1)
        solved = np.loadtxt(solve_file, delimiter=',', skiprows=1)
        np.testing.assert_allclose(series, solved, atol=1e-8)
        self.assertIn('terms=', output)


class SimulateCommandTests(CommandTestCase):
    def test_zero_rate_has_no_spread(self):
        mean, stderr = read_estimate(self.call('simulate', sigma_x_config(nu=0.0, R=100)))
        np.testing.assert_allclose(mean, sigma_x_m(2.0), atol=1e-12)
        np.testing.assert_array_equal(stderr, 0.0)

    def test_worker_count_does_not_change_output(self):
        config = sigma_x_config(R=500, seed=4)
        one = self.call('simulate', config, workers=1, quiet=True)
        eight = self.call('simulate', config, workers=8, quiet=True)
        self.assertEqual(one, eight)

    def test_seed_flag_overrides_run_file(self):
        config = sigma_x_config(R=200, seed=1)
        self.assertEqual(
            self.call('simulate', config, seed=9, quiet=True),
            self.call('simulate', sigma_x_config(R=200, seed=9), quiet=True),
        )

    def test_stderr_shrinks_with_realizations(self):
        _, small = read_estimate(self.call('simulate', sigma_x_config(R=1000, seed=2), quiet=True))
        _, large = read_estimate(self.call('simulate', sigma_x_config(R=2000, seed=2), quiet=True))
        ratio = large.max() / small.max()
        self.assertAlmostEqual(ratio, 1 / np.sqrt(2), delta=0.2 / np.sqrt(2))

    def test_missing_realization_count(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('simulate', sigma_x_config())
        self.assertEqual(ctx.exception.returncode, 1)


class CompareCommandTests(CommandTestCase):
    def test_zero_rate_passes(self):
        report = json.loads(self.call('compare', sigma_x_config(nu=0.0, R=100)))
        self.assertTrue(report['pass'])
        self.assertLess(report['pairs']['solver_vs_series']['max_discrepancy'], 1e-12)

    def test_healthy_configuration_passes(self):
        report = json.loads(self.call('compare', sigma_x_config(R=4000, seed=5)))
        self.assertTrue(report['pass'])
        self.assertLess(report['pairs']['solver_vs_series']['max_discrepancy'], 1e-6)
        self.assertEqual(report['R'], 4000)

    def test_coarse_grid_fails_with_advice(self):
        out = io.StringIO()
        config = sigma_x_config(grid={'t_max': 2.0, 'steps': 2}, R=100)
        with self.assertRaises(CommandError) as ctx:
            call_command('compare', config=self.write_config(config), stdout=out)
        self.assertEqual(ctx.exception.returncode, 3)
        report = json.loads(out.getvalue())
        self.assertFalse(report['pass'])
        self.assertIn('GridTooCoarseError', report['pairs']['solver_vs_series']['advice'])


class GenericityCommandTests(CommandTestCase):
    def test_sigma_x_is_generic(self):
        config = sigma_x_config(grid={'t_max': float(np.pi / 2), 'steps': 100})
        report = json.loads(self.call('genericity', config))
        self.assertTrue(report['generic'])
        self.assertAlmostEqual(report['witness_t'], np.pi / 4, places=9)

    def test_eigenbasis_is_not_generic(self):
        config = sigma_x_config(B=complex_pairs(np.diag([1.0, 2.5])[None, None]))
        self.assertFalse(json.loads(self.call('genericity', config))['generic'])

    def test_needs_a_bath_model(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('genericity', {'constant': M_CONST, 'grid': {'t_max': 1.0, 'steps': 10}})
        self.assertEqual(ctx.exception.returncode, 1)


class AsymptoteCommandTests(CommandTestCase):
    def test_sigma_x_converges(self):
        out_file = self.out_path('profile.csv')
        config = sigma_x_config(grid={'t_max': 40.0, 'steps': 4000})
        report = json.loads(self.call('asymptote', config, out=out_file))
        self.assertEqual(report['verdict'], 'converged')
        self.assertEqual(report['blocks'], [[0, 1]])
        self.assertEqual(Path(out_file).read_text().splitlines()[0], 't,c_value,distance')


class ScalarCommandTests(CommandTestCase):
    def test_march_method(self):
        config = {'scalar': {'kind': 'constant', 'c': 1.0}, 'nu': 1.0, 'grid': {'t_max': 2.0, 'steps': 20}}
        output = self.call('scalar', config)
        self.assertTrue(output.startswith('t,beta\n'))
        self.assertIn('method=march', output.splitlines()[-1])

    def test_delay_method(self):
        out_file = self.out_path('delay.csv')
        config = {'method': 'delay', 'tau': 1.0, 'nu': 1.0, 'intervals': 4, 'samples': 50}
        output = self.call('scalar', config, out=out_file)
        self.assertIn('jumps=4', output)
        head, jumps = Path(out_file).read_text().split('# jumps\n')
        self.assertEqual(len(head.splitlines()), 1 + 4 * 50 + 1)
        self.assertEqual(len(jumps.splitlines()), 1 + 4)

    def test_trig_method(self):
        config = {'method': 'trig', 'grid': {'t_max': 3.0, 'steps': 30}}
        output = self.call('scalar', config, quiet=True)
        first = output.splitlines()[1].split(',')
        self.assertAlmostEqual(float(first[1]), 1.0, places=12)

    def test_delay_needs_tau(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('scalar', {'method': 'delay', 'nu': 1.0})
        self.assertEqual(ctx.exception.returncode, 1)


class ExitCodeTests(CommandTestCase):
    def test_missing_file(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('solve', config=self.out_path('absent.json'), stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, 1)

    def test_malformed_json(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('solve', '{"nu": 1.0,')
        self.assertEqual(ctx.exception.returncode, 1)

    def test_missing_field(self):
        config = sigma_x_config()
        del config['nu']
        with self.assertRaises(CommandError) as ctx:
            self.call('solve', config)
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('nu', str(ctx.exception))

    def test_not_doubly_stochastic(self):
        bad = [[0.6, 0.4], [0.6, 0.4]]
        with self.assertRaises(CommandError) as ctx:
            self.call('solve', {'constant': bad, 'nu': 1.0, 'grid': {'t_max': 1.0, 'steps': 10}})
        self.assertEqual(ctx.exception.returncode, 2)

    def test_wrong_block_shape(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('solve', sigma_x_config(n=3))
        self.assertEqual(ctx.exception.returncode, 1)

    def test_missing_config_flag(self):
        with self.assertRaises(CommandError):
            call_command('solve', stdout=io.StringIO())

    def test_zero_workers_rejected(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('solve', sigma_x_config(), workers=0)
        self.assertEqual(ctx.exception.returncode, 1)

    def test_zero_horizon_is_kept(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('simulate', sigma_x_config(R=100, T=0.0))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('T=0', str(ctx.exception))


class QuietFlagTests(CommandTestCase):
    def test_logger_level_restored(self):
        logger = logging.getLogger('reduktor')
        logger.setLevel(logging.INFO)
        self.call('solve', sigma_x_config(), quiet=True)
        self.assertEqual(logger.level, logging.INFO)

    def test_logger_level_restored_after_failure(self):
        logger = logging.getLogger('reduktor')
        logger.setLevel(logging.DEBUG)
        with self.assertRaises(CommandError):
            self.call('solve', {'constant': [[0.6, 0.4], [0.6, 0.4]], 'nu': 1.0, 'grid': {'t_max': 1.0, 'steps': 10}}, quiet=True)
        self.assertEqual(logger.level, logging.DEBUG)
