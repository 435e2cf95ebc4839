from ...volterra import neumann_series_trajectory
from ..base import ReduktorCommand
from .solve import limit_summary


class Command(ReduktorCommand):
    help = 'Sum the truncated Neumann series at every node up to T and write it as CSV'

    def run(self, config, options):
        source = config.source(self.workers)
        trajectory, terms, tail = neumann_series_trajectory(source, config.solver_config(), config.T)
        self.emit(trajectory.write_csv, options['out'])
        self.summary(f"{limit_summary(source, trajectory)} terms={terms} tail_bound={tail:.3e}")
