from experiments.management.base import LabCommand, csv_list
from experiments.reporting import write_sweep
from experiments.sweeps import SWEEPABLE, sweep_parameter


class Command(LabCommand):
    help = 'Sweep one merge parameter over the config seeds; writes sweep_<param>.csv'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--param', required=True, choices=sorted(SWEEPABLE))
        parser.add_argument('--values', required=True, help='Comma separated values')

    def run(self, options):
        cfg = self.load_config(options)
        param = options['param']
        labels = csv_list(options['values'])
        values = csv_list(options['values'], SWEEPABLE[param])
        rows = sweep_parameter(cfg, param, values)
        path = write_sweep(self.output_dir(options, cfg) / f"sweep_{param}.csv", 'value', rows, labels)
        self.report_written(path)
