import numpy as np

from ...channel_gen import genericity_check
from ...exceptions import ConfigParseError
from ..base import ReduktorCommand

DEFAULT_DELTA_THRESHOLD = 0.9


class Command(ReduktorCommand):
    help = 'Look for a sampled time where c(M(t)) drops to the threshold; JSON report'

    def run(self, config, options):
        if config.model is None:
            raise ConfigParseError('genericity needs a bath model (B)')
        samples = config.options.get('samples', config.grid.steps + 1)
        times = np.linspace(0.0, config.grid.t_max, samples)
        threshold = config.options.get('delta_threshold', DEFAULT_DELTA_THRESHOLD)
        report = genericity_check(config.model, times, threshold, self.workers)
        self.emit_json({'generic': report.generic, 'witness_t': report.witness_t, 'c_min': report.c_min})
