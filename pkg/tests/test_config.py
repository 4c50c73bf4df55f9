import json

import pytest

from pathprune import config
from pathprune.errors import ConfigError


def write(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


class TestValidation:
    def test_empty_document_valid(self, tmp_path):
        assert config.load_config(write(tmp_path, {})) == {}

    def test_unknown_top_level_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="document root"):
            config.load_config(write(tmp_path, {"surprise": 1}))

    def test_unknown_nested_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="train"):
            config.load_config(write(tmp_path, {"train": {"momentum": 0.9}}))

    def test_bad_enum_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            config.load_config(write(tmp_path, {"planner": "rrt"}))

    def test_bad_json_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError, match="JSON"):
            config.load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="exist"):
            config.load_config(tmp_path / "none.json")

    def test_full_document(self, tmp_path):
        doc = {
            "dataset": {"root": "ds", "train_families": ["uniform_clutter"]},
            "train": {"epochs": 3, "weighting": "gaussian", "sigma": 1.5},
            "mask": {"threshold": 0.4, "dilation_radius": 1},
            "planner": "astar",
            "rl": {"alpha": 0.2, "episodes": 100, "k": 5},
            "arch": [[3, 8, "relu"], [8, 1, "logistic"]],
            "seeds": [1, 2, 3],
        }
        assert config.load_config(write(tmp_path, doc)) == doc


class TestResolution:
    def test_train_overrides_win(self):
        cfg = config.train_config_from({"train": {"epochs": 3, "sigma": 2.0}}, epochs=7)
        assert cfg.epochs == 7
        assert cfg.sigma == 2.0

    def test_mask_defaults(self):
        cfg = config.mask_config_from({})
        assert cfg.threshold == 0.5
        assert cfg.dilation_radius == 2

    def test_qlearn_ignores_env_keys(self):
        cfg = config.qlearn_config_from({"rl": {"alpha": 0.3, "k": 9, "size": 12}})
        assert cfg.alpha == 0.3

    def test_arch_parsing(self):
        layers = config.arch_from({"arch": [[3, 8, "relu"], [8, 1, "logistic"]]})
        assert layers[0].out_ch == 8
        assert config.arch_from({}) is None

    def test_invalid_resolved_value(self):
        with pytest.raises(ConfigError):
            config.train_config_from({"train": {"sigma": 2.0}}, weighting="gaussian", sigma=None,
                                     optimizer="momentum")
