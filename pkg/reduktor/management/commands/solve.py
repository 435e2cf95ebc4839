import numpy as np

from ...asymptotics import predict_limit
from ...dstoch_core import compression
from ...utils import fmt
from ...volterra import constant_closed_form, march_solve
from ..base import ReduktorCommand


def limit_summary(source, trajectory):
    _, limit = predict_limit(source, trajectory.grid.t_max)
    final = trajectory.values[-1]
    distance = float(np.max(np.abs(final - limit.entries)))
    return f"final_compression={fmt(compression(final))} distance_to_limit={fmt(distance)}"


class Command(ReduktorCommand):
    help = 'March the averaged evolution on the run-file grid and write the trajectory as CSV'

    def run(self, config, options):
        source = config.source(self.workers)
        trajectory = march_solve(source, config.solver_config())
        self.emit(trajectory.write_csv, options['out'])

        line = limit_summary(source, trajectory)
        if config.constant is not None:
            exact = constant_closed_form(config.constant, config.nu, trajectory.times)
            line += f" closed_form_error={fmt(np.max(np.abs(trajectory.values - exact)))}"
        self.summary(line)
