from experiments.management.base import LabCommand, csv_list
from experiments.reporting import write_sweep
from experiments.sweeps import RUNS_PER_RATIO, sweep_ratio


class Command(LabCommand):
    help = 'Sweep the crossover ratio; 10 seeded runs per ratio, written to sweep_ratio.csv'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--ratio-grid', default='0,0.2,0.4,0.6,0.8,1.0',
                            help='Comma separated ratios in [0, 1]')
        parser.add_argument('--runs', type=int, default=RUNS_PER_RATIO)

    def run(self, options):
        cfg = self.load_config(options)
        labels = csv_list(options['ratio_grid'])
        grid = csv_list(options['ratio_grid'], float)
        rows = sweep_ratio(cfg, grid, options['runs'])
        path = write_sweep(self.output_dir(options, cfg) / 'sweep_ratio.csv', 'ratio', rows, labels)
        self.report_written(path)
