import logging

import numpy as np

from ...exceptions import NumericalError
from ...jump_mc import monte_carlo_average
from ...volterra import march_solve, neumann_series
from ..base import ReduktorCommand

logger = logging.getLogger(__name__)

SERIES_TOL = 1e-6
MC_SIGMAS = 3.0
MC_FLOOR = 1e-9
MC_PASS_FRACTION = 0.99


def _pair(discrepancy, tolerance, passed, advice=None):
    return {
        'max_discrepancy': None if discrepancy is None else float(discrepancy),
        'tolerance': tolerance,
        'pass': bool(passed),
        'advice': advice,
    }


def _against_mc(value, estimate):
    delta = np.abs(value - estimate.mean)
    within = delta <= MC_SIGMAS * estimate.stderr + MC_FLOOR
    return _pair(delta.max(), f'{MC_SIGMAS:g}*stderr', within.mean() >= MC_PASS_FRACTION)


class Command(ReduktorCommand):
    help = 'Run the marching solver, the Neumann series and the simulator at T and report pairwise agreement as JSON'

    def run(self, config, options):
        source = config.source(self.workers)
        cfg = config.solver_config()
        T = config.T

        solved = march_solve(source, cfg).at_time(T).entries
        try:
            series = neumann_series(source, cfg, T).value.entries
            series_error = None
        except NumericalError as e:
            series, series_error = None, e

        seed = self.seed_for(config, options)
        estimate = monte_carlo_average(source, config.nu, T, config.options['R'], seed, self.workers)

        pairs = {'solver_vs_mc': _against_mc(solved, estimate)}
        if series is None:
            advice = f"{type(series_error).__name__}: {series_error}"
            pairs['solver_vs_series'] = _pair(None, SERIES_TOL, False, advice)
            pairs['series_vs_mc'] = _pair(None, f'{MC_SIGMAS:g}*stderr', False, advice)
        else:
            gap = np.abs(solved - series).max()
            pairs['solver_vs_series'] = _pair(gap, SERIES_TOL, gap <= SERIES_TOL)
            pairs['series_vs_mc'] = _against_mc(series, estimate)

        verdict = all(pair['pass'] for pair in pairs.values())
        self.emit_json({'T': T, 'nu': config.nu, 'R': estimate.R, 'seed': seed, 'pairs': pairs, 'pass': verdict})
        if not verdict:
            failed = sorted(name for name, pair in pairs.items() if not pair['pass'])
            logger.warning(f"compare: failing pairs {', '.join(failed)}")
            raise NumericalError(f"cross-validation failed for {', '.join(failed)}")
