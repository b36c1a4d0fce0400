"""
diagnose CHECKPOINT_A CHECKPOINT_B DATA_PATH

Compares two checkpoints of one architecture on samples from a stream dump.
drift.csv is always written; the scan, angle and lambda_max outputs are
opt-in. Loss-based measures run along the line from A to B.
"""
import logging

from core.rng import RngState
from core.storage import format_real, write_csv_atomic
from diagnostics.measures import layer_drift, loss_interpolation_scan
from diagnostics.spectral import hessian_lambda_max
from experiments.management.base import LabCommand
from networks.checkpoint import load_checkpoint
from networks.mlp import BatchObjective, require_same_spec
from streams.generator import read_csv

logger = logging.getLogger(__name__)


class Command(LabCommand):
    help = 'Layer drift, loss scan, gradient angle and Hessian lambda_max between two checkpoints'
    uses_config = False

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('checkpoint_a')
        parser.add_argument('checkpoint_b')
        parser.add_argument('data_path', help='Stream dump written by run --dump-stream')
        parser.add_argument('--task', type=int, help='Only samples of this task')
        parser.add_argument('--split', choices=('train', 'test'), help='Only samples of this split')
        parser.add_argument('--scan', type=int, metavar='N', help='Loss at N points from A to B')
        parser.add_argument('--angle', type=int, metavar='N',
                            help='Gradient angle between A and N points towards B')
        parser.add_argument('--lambda-max', action='store_true',
                            help='Hessian spectral norm at A and at B')
        parser.add_argument('--iters', type=int, default=50)
        parser.add_argument('--seed', type=int, default=0)

    def run(self, options):
        model_a = load_checkpoint(options['checkpoint_a'])
        model_b = load_checkpoint(options['checkpoint_b'])
        require_same_spec(model_a, model_b)
        data = read_csv(options['data_path'], options['task'], options['split'])
        out_dir = self.output_dir(options)
        written = []

        drift = layer_drift(model_a, model_b, data.features)
        written.append(write_csv_atomic(
            out_dir / 'drift.csv', ['layer', 'delta'],
            [[layer, format_real(value)] for layer, value in enumerate(drift.values, start=1)],
        ))

        objective = BatchObjective(model_a.spec, data.features, data.labels)
        if options['scan']:
            scan = loss_interpolation_scan(objective, model_a.theta, model_b.theta, options['scan'])
            written.append(write_csv_atomic(
                out_dir / 'scan.csv', ['s', 'loss'],
                [[format_real(s), format_real(value)] for s, value in zip(scan.fractions, scan.losses)],
            ))
        if options['angle']:
            scan = loss_interpolation_scan(objective, model_a.theta, model_b.theta,
                                           options['angle'], with_angles=True)
            written.append(write_csv_atomic(
                out_dir / 'angle.csv', ['s', 'radians'],
                [[format_real(s), format_real(value)] for s, value in zip(scan.fractions, scan.angles)],
            ))
        if options['lambda_max']:
            rng = RngState(options['seed']).spawn('power-iteration')
            rows = [
                [label, format_real(hessian_lambda_max(objective, model.theta, rng, options['iters']))]
                for label, model in (('a', model_a), ('b', model_b))
            ]
            written.append(write_csv_atomic(out_dir / 'hessian.csv', ['config', 'lambda_max'], rows))

        logger.info(f"Diagnosed {model_a.spec.layer_sizes} checkpoints on {len(data)} samples")
        self.report_written(*written)
