from ...jump_mc import monte_carlo_average
from ...utils import fmt
from ..base import ReduktorCommand


class Command(ReduktorCommand):
    help = 'Average the composed evolution over Poisson realizations; CSV mean block, then stderr block'

    def run(self, config, options):
        seed = self.seed_for(config, options)
        R = config.options['R']
        estimate = monte_carlo_average(config.source(self.workers), config.nu, config.T, R, seed, self.workers)
        meta = {'command': 'simulate', 'R': R, 'seed': seed, 'T': fmt(config.T), 'nu': fmt(config.nu)}
        self.emit(lambda handle: estimate.write_csv(handle, meta), options['out'])
        self.summary(f"max_stderr={fmt(estimate.stderr.max())}")
