from ...asymptotics import convergence_report
from ..base import ReduktorCommand


class Command(ReduktorCommand):
    help = 'Compression profile and distance to the predicted block limit (CSV) plus a JSON verdict'

    def run(self, config, options):
        source = config.source(self.workers)
        report = convergence_report(source, config.nu, config.solver_config(), eps=config.options.get('epsilon'))
        self.emit(report.write_csv, options['out'])
        self.emit_json(report.as_dict())
