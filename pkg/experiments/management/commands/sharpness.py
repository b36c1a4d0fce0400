from core.storage import format_real, write_csv_atomic
from experiments.management.base import LabCommand, csv_list
from experiments.sweeps import sharpness_study


class Command(LabCommand):
    help = 'Hessian lambda_max of the final TRM model per lambda2, against plain finetuning'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--lambda2-grid', default='0,0.01,1,10')
        parser.add_argument('--iters', type=int, default=50)

    def run(self, options):
        cfg = self.load_config(options)
        rows = sharpness_study(cfg, csv_list(options['lambda2_grid'], float), cfg.seeds[0],
                               options['iters'])
        path = write_csv_atomic(self.output_dir(options, cfg) / 'hessian.csv',
                                ['config', 'lambda_max'],
                                [[label, format_real(value)] for label, value in rows])
        self.report_written(path)
