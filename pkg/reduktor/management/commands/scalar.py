from ...reduced_scalar import piecewise_delay_solve, scalar_march, trig_ode_solve
from ...utils import fmt
from ..base import ReduktorCommand

DEFAULT_INTERVALS = 10
DEFAULT_POINTS_PER_INTERVAL = 200


class Command(ReduktorCommand):
    help = 'Solve the scalar reduction (march, delay or trig method) and write t,beta as CSV'

    def run(self, config, options):
        method = config.options['method']
        if method == 'delay':
            points = config.options.get('samples', DEFAULT_POINTS_PER_INTERVAL)
            trajectory = piecewise_delay_solve(
                config.options['tau'], config.nu, config.options.get('intervals', DEFAULT_INTERVALS), points,
            )
        elif method == 'trig':
            trajectory = trig_ode_solve(config.grid)
        else:
            trajectory = scalar_march(config.scalar, config.nu, config.grid)
        self.emit(trajectory.write_csv, options['out'])
        self.summary(f"method={method} final_beta={fmt(trajectory.beta[-1])} jumps={len(trajectory.jumps)}")
