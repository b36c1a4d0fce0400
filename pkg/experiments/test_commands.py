import csv
import json

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from core.rng import RngState
from networks.checkpoint import save_checkpoint
from networks.mlp import MlpSpec, init_params


@pytest.fixture
def write_config(tmp_path):
    """Fixture returning a function that writes a small config file"""

    def _write(**changes):
        document = {
            'schema_version': 1,
            'stream': {'num_classes': 4, 'num_tasks': 2, 'samples_per_class_train': 30,
                       'samples_per_class_test': 20},
            'model': {'hidden_sizes': [8]},
            'train': {'epochs': 3, 'batch_size': 16, 'learning_rate': 0.01},
            'trm': {'merge_epochs': 1, 'steps_per_epoch': 2},
            'strategies': ['seq_finetune', 'trm'],
            'seeds': [0, 1],
        }
        for key, value in changes.items():
            if value is None:
                document.pop(key, None)
            else:
                document[key] = value
        path = tmp_path / 'config.json'
        path.write_text(json.dumps(document, indent=2))
        return path

    return _write


def read_rows(path):
    with open(path, newline='') as handle:
        return list(csv.reader(handle))


class TestRunCommand:
    """Tests for the run command"""

    def test_run_matrix(self, write_config, tmp_path):
        """Test that run writes results, summary and merge records"""
        out = tmp_path / 'out'
        call_command('run', config=str(write_config()), out=str(out))
        rows = read_rows(out / 'results.csv')
        assert rows[0] == ['seed', 'strategy', 'stage', 'eval_task', 'accuracy']
        runs = {(row[0], row[1]) for row in rows[1:]}
        assert runs == {('0', 'seq_finetune'), ('0', 'trm'), ('1', 'seq_finetune'), ('1', 'trm')}
        # stages 1..2 evaluate 1 + 2 tasks per run
        assert len(rows) - 1 == 4 * 3
        summary = json.loads((out / 'summary.json').read_text())
        assert summary['schema_version'] == 1
        assert [entry['strategy'] for entry in summary['strategies']] == ['seq_finetune', 'trm']
        assert (out / 'checkpoints' / 'seed1' / 'trm' / 'stage2.merge.json').exists()

    def test_timing_per_stage(self, write_config, tmp_path):
        """Test that timing.csv holds one row per run and stage"""
        out = tmp_path / 'out'
        call_command('run', config=str(write_config()), out=str(out), no_checkpoints=True)
        rows = read_rows(out / 'timing.csv')
        assert rows[0] == ['seed', 'strategy', 'stage', 'train_accuracy', 'seconds']
        assert [(row[0], row[1], row[2]) for row in rows[1:3]] == [('0', 'seq_finetune', '1'),
                                                                   ('0', 'seq_finetune', '2')]
        assert len(rows) - 1 == 4 * 2
        for row in rows[1:]:
            assert 0.0 <= float(row[3]) <= 1.0
            assert float(row[4]) >= 0.0

    def test_byte_identical_reruns(self, write_config, tmp_path):
        """Test that two runs of one config write identical bytes"""
        config = write_config()
        call_command('run', config=str(config), out=str(tmp_path / 'a'), no_checkpoints=True)
        call_command('run', config=str(config), out=str(tmp_path / 'b'), no_checkpoints=True)
        for name in ('results.csv', 'summary.json'):
            assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()

    def test_seed_and_strategy_overrides(self, write_config, tmp_path):
        """Test that --seed and --strategies replace the config lists"""
        out = tmp_path / 'out'
        call_command('run', config=str(write_config()), out=str(out), seed=3,
                     strategies='average', no_checkpoints=True)
        rows = read_rows(out / 'results.csv')[1:]
        assert {(row[0], row[1]) for row in rows} == {('3', 'average')}

    def test_missing_field_exits_2(self, write_config, tmp_path):
        """Test that a missing field exits 2 before any output"""
        out = tmp_path / 'out'
        with pytest.raises(CommandError) as excinfo:
            call_command('run', config=str(write_config(seeds=None)), out=str(out))
        assert excinfo.value.returncode == 2
        assert 'seeds' in str(excinfo.value)
        assert not out.exists()

    def test_malformed_json_exits_2(self, tmp_path):
        """Test that malformed json exits 2 with its position"""
        path = tmp_path / 'broken.json'
        path.write_text('{\n  "schema_version": 1,\n  "stream": \n}')
        with pytest.raises(CommandError) as excinfo:
            call_command('run', config=str(path), out=str(tmp_path / 'out'))
        assert excinfo.value.returncode == 2
        assert 'broken.json:4:1' in str(excinfo.value)

    def test_numeric_failure_exits_3(self, write_config, tmp_path):
        """Test that a diverging run exits 3"""
        config = write_config(train={'epochs': 2, 'batch_size': 16, 'learning_rate': 1e300,
                                     'weight_decay': 0.0})
        with pytest.raises(CommandError) as excinfo:
            call_command('run', config=str(config), out=str(tmp_path / 'out'), no_checkpoints=True)
        assert excinfo.value.returncode == 3

    def test_dump_stream(self, write_config, tmp_path):
        """Test that --dump-stream writes the stream csv"""
        out = tmp_path / 'out'
        call_command('run', config=str(write_config()), out=str(out), seed=0,
                     strategies='seq_finetune', dump_stream=True, no_checkpoints=True)
        header = read_rows(out / 'stream.csv')[0]
        assert header == ['task', 'split', 'class', 'feature_0', 'feature_1']


class TestAblateCommand:
    """Tests for the ablate command"""

    def test_variant_subset(self, write_config, tmp_path):
        """Test that ablate runs only the requested variants"""
        out = tmp_path / 'out'
        call_command('ablate', config=str(write_config()), out=str(out), variants='a,h')
        rows = read_rows(out / 'ablation.csv')
        assert rows[0][:4] == ['variant', 'align', 'pre', 'res']
        assert [(row[0], row[4]) for row in rows[1:]] == [('a', '0'), ('a', '1'), ('h', '0'), ('h', '1')]
        assert rows[-1][1:4] == ['1', '1', '1']

    def test_unknown_variant_exits_2(self, write_config, tmp_path):
        """Test that an unknown variant exits 2"""
        with pytest.raises(CommandError) as excinfo:
            call_command('ablate', config=str(write_config()), out=str(tmp_path), variants='q')
        assert excinfo.value.returncode == 2


class TestSweepCommands:
    """Tests for sweep-ratio, sweep and sharpness"""

    def test_sweep_ratio_echoes_grid(self, write_config, tmp_path):
        """Test that sweep_ratio writes one row per grid value"""
        call_command('sweep_ratio', config=str(write_config()), out=str(tmp_path),
                     ratio_grid='0,0.6,1.0', runs=2)
        rows = read_rows(tmp_path / 'sweep_ratio.csv')
        assert rows[0] == ['ratio', 'min', 'max', 'mean']
        assert [row[0] for row in rows[1:]] == ['0', '0.6', '1.0']

    def test_ratio_outside_grid_exits_2(self, write_config, tmp_path):
        """Test that a ratio above one exits 2"""
        with pytest.raises(CommandError) as excinfo:
            call_command('sweep_ratio', config=str(write_config()), out=str(tmp_path),
                         ratio_grid='0.5,1.5', runs=1)
        assert excinfo.value.returncode == 2

    def test_parameter_sweep(self, write_config, tmp_path):
        """Test that sweep writes one row per value"""
        call_command('sweep', config=str(write_config()), out=str(tmp_path), param='lambda1',
                     values='0,0.1', seed=0)
        rows = read_rows(tmp_path / 'sweep_lambda1.csv')
        assert rows[0] == ['value', 'min', 'max', 'mean']
        assert [row[0] for row in rows[1:]] == ['0', '0.1']

    def test_sharpness(self, write_config, tmp_path):
        """Test that sharpness writes finetune and lambda2 rows"""
        call_command('sharpness', config=str(write_config()), out=str(tmp_path),
                     lambda2_grid='0,1', iters=5)
        rows = read_rows(tmp_path / 'hessian.csv')
        assert rows[0] == ['config', 'lambda_max']
        assert [row[0] for row in rows[1:]] == ['finetune', 'lambda2=0.0', 'lambda2=1.0']


class TestDiagnoseCommand:
    """Tests for the diagnose command"""

    @pytest.fixture
    def run_dir(self, write_config, tmp_path):
        out = tmp_path / 'run'
        call_command('run', config=str(write_config()), out=str(out), seed=0,
                     strategies='trm', dump_stream=True)
        return out

    def test_identical_checkpoints(self, run_dir, tmp_path):
        """Test that identical checkpoints write zero drift only"""
        checkpoint = run_dir / 'checkpoints' / 'seed0' / 'trm' / 'stage2.trm'
        out = tmp_path / 'diag'
        call_command('diagnose', str(checkpoint), str(checkpoint), str(run_dir / 'stream.csv'),
                     out=str(out))
        rows = read_rows(out / 'drift.csv')
        assert rows[0] == ['layer', 'delta']
        assert [float(row[1]) for row in rows[1:]] == [0.0, 0.0]
        assert not (out / 'scan.csv').exists()

    def test_all_outputs(self, run_dir, tmp_path):
        """Test that every opt-in output is written when requested"""
        stage = run_dir / 'checkpoints' / 'seed0' / 'trm'
        out = tmp_path / 'diag'
        call_command('diagnose', str(stage / 'stage1.trm'), str(stage / 'stage2.trm'),
                     str(run_dir / 'stream.csv'), out=str(out), task=2, split='train',
                     scan=21, angle=5, lambda_max=True, iters=5)
        scan = read_rows(out / 'scan.csv')
        assert scan[0] == ['s', 'loss']
        assert [float(row[0]) for row in scan[1:]] == pytest.approx([i / 20 for i in range(21)])
        assert read_rows(out / 'angle.csv')[0] == ['s', 'radians']
        assert [row[0] for row in read_rows(out / 'hessian.csv')[1:]] == ['a', 'b']

    def test_spec_mismatch_exits_2(self, run_dir, tmp_path):
        """Test that checkpoints of different architectures exit 2"""
        other = save_checkpoint(tmp_path / 'other.trm', init_params(MlpSpec((2, 5, 4)), RngState(0)))
        checkpoint = run_dir / 'checkpoints' / 'seed0' / 'trm' / 'stage2.trm'
        with pytest.raises(CommandError) as excinfo:
            call_command('diagnose', str(checkpoint), str(other), str(run_dir / 'stream.csv'),
                         out=str(tmp_path / 'diag'))
        assert excinfo.value.returncode == 2

    @pytest.mark.parametrize('line', ['x,train,0,0.5,0.5', '1,train'])
    def test_malformed_stream_dump_exits_2(self, tmp_path, line):
        """Test that a stream dump with a bad row exits 2 naming the line"""
        checkpoint = save_checkpoint(tmp_path / 'a.trm', init_params(MlpSpec((2, 5, 4)), RngState(0)))
        data = tmp_path / 'stream.csv'
        data.write_text(f"task,split,class,feature_0,feature_1\n{line}\n")
        with pytest.raises(CommandError) as excinfo:
            call_command('diagnose', str(checkpoint), str(checkpoint), str(data),
                         out=str(tmp_path / 'diag'), task=1)
        assert excinfo.value.returncode == 2
        assert 'stream.csv:2' in str(excinfo.value)
        assert not (tmp_path / 'diag').exists()
