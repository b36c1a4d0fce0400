"""
Shared plumbing for the lab's management commands.

Exit codes are a stable contract: 0 success, 2 config or contract error,
3 numeric failure. Django's runner turns CommandError.returncode into the
process status.
"""
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.exceptions import ContractViolation, NumericFailure

from ..serializers import load_experiment_config

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def csv_list(text, cast=str):
    """Parse 'a,b,c' into a list, raising CommandError on a bad item."""
    items = [item.strip() for item in text.split(',') if item.strip()]
    try:
        return [cast(item) for item in items]
    except ValueError as exc:
        raise CommandError(f"cannot parse {text!r}: {exc}", returncode=EXIT_CONFIG) from exc


class LabCommand(BaseCommand):
    """Base for commands that translate library errors into exit codes."""

    requires_system_checks = []
    uses_config = True

    def add_arguments(self, parser):
        if self.uses_config:
            parser.add_argument('--config', required=True, help='Experiment config (JSON)')
            parser.add_argument('--seed', type=int, help='Run only this seed')
            parser.add_argument('--strategies', help='Comma separated strategy list')
        parser.add_argument('--out', help='Output directory')

    def handle(self, *args, **options):
        try:
            return self.run(options)
        except NumericFailure as exc:
            logger.error(f"Numeric failure in {exc.component}: {exc}")
            raise CommandError(str(exc), returncode=EXIT_NUMERIC) from exc
        except ContractViolation as exc:
            raise CommandError(str(exc), returncode=EXIT_CONFIG) from exc

    def run(self, options):
        raise NotImplementedError

    def load_config(self, options):
        overrides = {}
        if options.get('seed') is not None:
            overrides['seeds'] = [options['seed']]
        if options.get('strategies'):
            overrides['strategies'] = csv_list(options['strategies'])
        if options.get('out'):
            overrides['output_dir'] = options['out']
        return load_experiment_config(options['config'], overrides)

    def output_dir(self, options, cfg=None):
        if options.get('out'):
            return Path(options['out'])
        if cfg is not None and cfg.output_dir is not None:
            return Path(cfg.output_dir)
        return Path(settings.TRM_LAB_OUTPUT_DIR)

    def report_written(self, *paths):
        for path in paths:
            self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
