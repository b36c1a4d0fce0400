from experiments.ablation import VARIANTS, ablation_suite
from experiments.management.base import LabCommand, csv_list
from experiments.reporting import write_ablation


class Command(LabCommand):
    help = 'Run the objective-term ablation (variants a..h) and write ablation.csv'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--variants', default=','.join(VARIANTS),
                            help='Comma separated subset of a..h')

    def run(self, options):
        cfg = self.load_config(options)
        rows = ablation_suite(cfg, csv_list(options['variants']))
        path = write_ablation(self.output_dir(options, cfg) / 'ablation.csv', rows)
        self.report_written(path)
