import json

import pytest

from core.exceptions import ConfigError
from experiments.serializers import (
    ExperimentConfigSerializer,
    flatten_errors,
    load_experiment_config,
    parse_config_text,
)


@pytest.fixture
def raw_config():
    """Fixture for a minimal valid config document"""
    return {
        'schema_version': 1,
        'stream': {'num_classes': 4, 'num_tasks': 2, 'samples_per_class_train': 20},
        'model': {'hidden_sizes': [8]},
        'train': {'epochs': 2, 'learning_rate': 0.01},
        'trm': {'merge_epochs': 1, 'steps_per_epoch': 2, 'layer_pivot': None},
        'strategies': ['seq_finetune', 'trm'],
        'seeds': [0, 1],
    }


class TestExperimentConfigSerializer:
    """Tests for config validation"""

    def test_valid_config(self, raw_config):
        """Test that a minimal document builds an ExperimentConfig"""
        cfg = parse_config_text(json.dumps(raw_config))
        assert cfg.stream.num_tasks == 2
        assert cfg.model.hidden_sizes == (8,)
        assert cfg.spec.layer_sizes == (2, 8, 4)
        assert cfg.trm.layer_pivot is None
        assert cfg.trm.lambda1 == 0.1
        assert cfg.seeds == (0, 1)

    def test_missing_section(self, raw_config):
        """Test that a missing section is named in the error"""
        del raw_config['stream']
        with pytest.raises(ConfigError, match='stream: This field is required'):
            parse_config_text(json.dumps(raw_config))

    def test_nested_field_path(self, raw_config):
        """Test that nested errors carry a dotted path"""
        raw_config['trm']['lambda1'] = -1
        with pytest.raises(ConfigError, match=r'trm\.lambda1: '):
            parse_config_text(json.dumps(raw_config))

    def test_indivisible_classes(self, raw_config):
        """Test that classes must divide evenly across tasks"""
        raw_config['stream']['num_classes'] = 5
        with pytest.raises(ConfigError, match='divisible'):
            parse_config_text(json.dumps(raw_config))

    def test_schema_version(self, raw_config):
        """Test that an unknown schema version is rejected"""
        raw_config['schema_version'] = 2
        with pytest.raises(ConfigError, match='schema_version'):
            parse_config_text(json.dumps(raw_config))

    def test_unknown_strategy(self, raw_config):
        """Test that an unknown strategy fails validation"""
        raw_config['strategies'] = ['trm', 'replay']
        serializer = ExperimentConfigSerializer(data=raw_config)
        assert not serializer.is_valid()
        assert 'strategies' in serializer.errors

    def test_crossover_mode(self, raw_config):
        """Test that crossover_mode reaches TrmConfig and unknown modes are rejected"""
        raw_config['trm']['crossover_mode'] = 'shift'
        assert parse_config_text(json.dumps(raw_config)).trm.crossover_mode == 'shift'
        raw_config['trm']['crossover_mode'] = 'replace'
        with pytest.raises(ConfigError, match=r'trm\.crossover_mode'):
            parse_config_text(json.dumps(raw_config))

    def test_pivot_beyond_layers(self, raw_config):
        """Test that a pivot beyond the layer count is rejected"""
        raw_config['trm']['layer_pivot'] = 3
        with pytest.raises(ConfigError, match=r'trm\.layer_pivot'):
            parse_config_text(json.dumps(raw_config))

    def test_overrides_are_validated(self, raw_config):
        """Test that command-line overrides go through validation"""
        cfg = parse_config_text(json.dumps(raw_config), overrides={'seeds': [7]})
        assert cfg.seeds == (7,)
        with pytest.raises(ConfigError, match='seeds'):
            parse_config_text(json.dumps(raw_config), overrides={'seeds': [-1]})

    def test_json_syntax_error_position(self):
        """Test that syntax errors report file, line and column"""
        with pytest.raises(ConfigError, match=r'cfg\.json:3:5: '):
            parse_config_text('{\n  "a": 1,\n    oops\n}', 'cfg.json')

    def test_not_an_object(self):
        """Test that a top-level array is rejected"""
        with pytest.raises(ConfigError):
            parse_config_text('[1, 2]')

    def test_unreadable_file(self, tmp_path):
        """Test that a missing file raises ConfigError"""
        with pytest.raises(ConfigError, match='cannot read'):
            load_experiment_config(tmp_path / 'absent.json')

    def test_default_config_file(self, settings):
        """Test that the shipped default config validates"""
        cfg = load_experiment_config(settings.BASE_DIR / 'configs' / 'default.json')
        assert cfg.spec.layer_sizes == (2, 64, 64, 10)
        assert cfg.strategies == ('seq_finetune', 'average', 'ties', 'magmax', 'trm')
        assert len(cfg.seeds) == 10


class TestFlattenErrors:
    """Tests for dotted error paths"""

    def test_nested(self):
        """Test that nested serializer errors flatten to dotted lines"""
        errors = {'trm': {'lambda1': ['too small']}, 'stream': {'non_field_errors': ['bad']}}
        assert flatten_errors(errors) == ['trm.lambda1: too small', 'stream: bad']
