import io
import json
import logging
import sys

from django.core.management.base import BaseCommand, CommandError, handle_default_options

from .. import conf
from ..exceptions import ReduktorError
from ..forms import load_run_config
from ..utils import open_output

logger = logging.getLogger(__name__)

USAGE_EXIT = 1


class ReduktorCommand(BaseCommand):
    """Shared flags, run-file loading and the exit-code contract for the batch commands."""

    requires_system_checks = []
    requires_migrations_checks = False

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        # argument errors become CommandError (exit 1) instead of argparse's exit 2
        parser.called_from_command_line = False
        return parser

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='JSON run file')
        parser.add_argument('--out', help='CSV destination; standard output when absent')
        parser.add_argument('--seed', type=int, help='Monte Carlo seed, overrides the run file')
        parser.add_argument('--workers', type=int, help='worker threads (default: REDUKTOR_WORKERS)')
        parser.add_argument('--quiet', action='store_true', help='suppress summary lines and INFO logging')

    def run_from_argv(self, argv):
        self._called_from_command_line = True
        try:
            parser = self.create_parser(argv[0], argv[1])
            options = parser.parse_args(argv[2:])
            cmd_options = vars(options)
            args = cmd_options.pop('args', ())
            handle_default_options(options)
            self.execute(*args, **cmd_options)
        except CommandError as e:
            self.stderr.write(str(e))
            sys.exit(e.returncode)

    def handle(self, *args, **options):
        self.quiet = options['quiet']
        workers = options['workers']
        self.workers = workers if workers is not None else conf.setting('WORKERS')
        if self.workers < 1:
            raise CommandError('--workers must be at least 1', returncode=USAGE_EXIT)

        package_logger = logging.getLogger('reduktor')
        level = package_logger.level
        if self.quiet:
            package_logger.setLevel(logging.WARNING)
        try:
            config = load_run_config(options['config'], self.command_name)
            self.run(config, options)
        except ReduktorError as e:
            logger.error(f"{self.command_name} failed: {e}")
            raise CommandError(f"{type(e).__name__}: {e}", returncode=e.exit_code)
        finally:
            package_logger.setLevel(level)

    @property
    def command_name(self):
        return self.__module__.rsplit('.', 1)[-1]

    def run(self, config, options):
        raise NotImplementedError('subclasses of ReduktorCommand must provide a run() method')

    def seed_for(self, config, options):
        if options.get('seed') is not None:
            return options['seed']
        return config.options.get('seed', 0)

    def emit(self, write, path):
        """Call write(handle) on the --out file, or buffer it to standard output."""
        if path:
            with open_output(path) as handle:
                write(handle)
            return
        buffer = io.StringIO()
        write(buffer)
        self.stdout.write(buffer.getvalue(), ending='')

    def emit_json(self, payload):
        self.stdout.write(json.dumps(payload, indent=2, sort_keys=True))

    def summary(self, text):
        if not self.quiet:
            self.stdout.write(text)
