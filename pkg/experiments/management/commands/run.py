import logging

from experiments.management.base import LabCommand
from experiments.reporting import write_results, write_timing
from experiments.runner import RunJob, run_matrix
from streams.generator import generate_stream, write_csv

logger = logging.getLogger(__name__)


class Command(LabCommand):
    help = 'Run every (seed, strategy) pair of a config through the continual-learning protocol'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--dump-stream', action='store_true',
                            help='Also write the generated stream to stream.csv')
        parser.add_argument('--no-checkpoints', action='store_true',
                            help='Skip the per-stage checkpoints')

    def run(self, options):
        cfg = self.load_config(options)
        out_dir = self.output_dir(options, cfg)
        checkpoint_dir = None if options['no_checkpoints'] else out_dir / 'checkpoints'
        jobs = [
            RunJob(seed, strategy, cfg, checkpoint_dir)
            for seed in cfg.seeds for strategy in cfg.strategies
        ]
        reports = run_matrix(jobs)
        write_results(out_dir, reports, cfg.strategies, cfg.seeds)
        written = [out_dir / 'results.csv', out_dir / 'summary.json', write_timing(out_dir, reports)]
        if options['dump_stream']:
            written.append(write_csv(out_dir / 'stream.csv', generate_stream(cfg.stream)))
        for report in reports:
            logger.info(
                f"{report.strategy} seed={report.seed}: last_accuracy={report.last_accuracy:.4f} "
                f"average_forgetting={report.average_forgetting}"
            )
        self.report_written(*written)
