import numpy as np
import pytest

from core.exceptions import ContractViolation
from core.rng import RngState
from networks.mlp import MlpSpec, init_params, predict
from streams.generator import StreamConfig, generate_stream, joint_testset, read_csv, write_csv
from training.finetune import finetune
from training.optim import TrainConfig


@pytest.fixture
def stream():
    """Fixture for the default 5-task, 10-class stream"""
    return generate_stream(StreamConfig())


class TestGenerateStream:
    """Tests for class-incremental stream construction"""

    def test_tasks_are_disjoint(self, stream):
        """Test that tasks own disjoint class sets"""
        assert len(stream) == 5
        assert all(len(task.class_ids) == 2 for task in stream)
        for i, a in enumerate(stream):
            for b in stream[i + 1:]:
                assert not a.class_ids & b.class_ids

    def test_task_labels_match_classes(self, stream):
        """Test that every split carries exactly its task's classes"""
        for task in stream:
            assert set(task.train.labels.tolist()) == task.class_ids
            assert set(task.test.labels.tolist()) == task.class_ids

    def test_split_sizes(self, stream):
        """Test the default train and test split sizes"""
        assert len(stream[0].train) == 200
        assert len(stream[0].test) == 100

    def test_deterministic(self, stream):
        """Test that one config gives byte-identical streams"""
        again = generate_stream(StreamConfig())
        for a, b in zip(stream, again):
            assert a.train.features.tobytes() == b.train.features.tobytes()
            assert a.test.labels.tobytes() == b.test.labels.tobytes()

    def test_seed_changes_samples(self, stream):
        """Test that another seed draws other samples"""
        other = generate_stream(StreamConfig(seed=1))
        assert not np.array_equal(stream[0].train.features, other[0].train.features)

    def test_higher_dimensional_means(self):
        """Test streams with more than two input features"""
        tasks = generate_stream(StreamConfig(input_dim=6, num_classes=4, num_tasks=2))
        assert tasks[0].train.features.shape == (200, 6)

    def test_indivisible_classes(self):
        """Test that classes must split evenly across tasks"""
        with pytest.raises(ContractViolation):
            StreamConfig(num_classes=10, num_tasks=3)

    def test_nonpositive_sigma(self):
        """Test that a zero noise sigma is rejected"""
        with pytest.raises(ContractViolation):
            StreamConfig(noise_sigma=0.0)

    def test_separable_first_task(self):
        """Test that well separated blobs are learned almost perfectly"""
        tasks = generate_stream(StreamConfig(noise_sigma=0.01, cluster_radius=5.0))
        start = init_params(MlpSpec((2, 64, 64, 10)), RngState(0))
        model, _ = finetune(start, tasks[0], TrainConfig(learning_rate=0.01, weight_decay=0.0))
        accuracy = np.mean(predict(model, tasks[0].test.features) == tasks[0].test.labels)
        assert accuracy >= 0.99


class TestJointTestset:
    """Tests for the union of seen test splits"""

    def test_first_task_only(self, stream):
        """Test that the first joint set is task 1's test split"""
        joint = joint_testset(stream, 1)
        assert np.array_equal(joint.features, stream[0].test.features)
        assert np.array_equal(joint.labels, stream[0].test.labels)

    def test_all_tasks(self, stream):
        """Test that the last joint set holds every test sample"""
        assert len(joint_testset(stream, 5)) == sum(len(task.test) for task in stream)

    def test_order_is_stable(self, stream):
        """Test that the joint set comes back in one order"""
        assert np.array_equal(joint_testset(stream, 3).labels, joint_testset(stream, 3).labels)

    @pytest.mark.parametrize('upto', [0, 6])
    def test_out_of_range(self, stream, upto):
        """Test that stages outside 1..T are rejected"""
        with pytest.raises(ContractViolation):
            joint_testset(stream, upto)


class TestStreamDump:
    """Tests for the stream csv used by diagnose"""

    def test_filtered_read(self, stream, tmp_path):
        """Test that reading one task and split returns that split"""
        path = write_csv(tmp_path / 'stream.csv', stream)
        split = read_csv(path, task=2, split='test')
        assert np.array_equal(split.labels, stream[1].test.labels)
        assert np.array_equal(split.features, stream[1].test.features)

    def test_bad_header(self, tmp_path):
        """Test that a csv without the stream header is rejected"""
        path = tmp_path / 'other.csv'
        path.write_text('a,b\n1,2\n')
        with pytest.raises(ContractViolation):
            read_csv(path)

    @pytest.mark.parametrize('line', ['x,train,0,1.0,2.0', '1,train', '1,train,0,1.0', '1,test,a,1.0,2.0'])
    def test_malformed_row(self, tmp_path, line):
        """Test that a bad task index or a short row is reported with its line number"""
        path = tmp_path / 'stream.csv'
        path.write_text(f"task,split,class,feature_0,feature_1\n1,train,0,0.5,0.5\n{line}\n")
        with pytest.raises(ContractViolation, match=r'stream\.csv:3: '):
            read_csv(path)

    def test_malformed_row_outside_filter(self, tmp_path):
        """Test that rows of other tasks are still checked"""
        path = tmp_path / 'stream.csv'
        path.write_text('task,split,class,feature_0\n1,train,0,0.5\nx,train,0,1.0\n')
        with pytest.raises(ContractViolation):
            read_csv(path, task=1)

    def test_empty_selection(self, stream, tmp_path):
        """Test that a filter matching no rows is rejected"""
        path = write_csv(tmp_path / 'stream.csv', stream)
        with pytest.raises(ContractViolation):
            read_csv(path, task=9)
