import pytest

from prunelab.config import ExperimentConfig, config_from_dict, config_to_dict, load_config
from prunelab.errors import ConfigError
from prunelab.optim import CosineAnnealing, StepDecay

GOOD = """
name = "t"
methods = ["snip", "drive"]
sparsities = [0.5, 0.9]
seeds = [0]
total_epochs = 3

[model]
sizes = [8, 6, 3]

[dataset]
classes = 3
dim = 8
per_class = 20

[train]
schedule = "step"
step_every = 2
"""


def write(tmp_path, text):
    path = tmp_path / "exp.toml"
    path.write_text(text)
    return path


def test_load(tmp_path):
    cfg = load_config(write(tmp_path, GOOD))
    assert cfg.methods == ("snip", "drive") and cfg.sparsities == (0.5, 0.9)
    assert cfg.model.sizes == (8, 6, 3) and cfg.dataset.per_class == 20
    assert cfg.train.to_train_config().schedule == StepDecay(0.01, 5.0, 2, ())


def test_defaults_are_valid():
    ExperimentConfig().validate()


@pytest.mark.parametrize("text", [
    GOOD + "\nbogus = 1\n",
    GOOD.replace("[model]", "[model]\nwidth = 3"),
    GOOD + "\n[extra]\nx = 1\n",
])
def test_unknown_keys_are_errors(tmp_path, text):
    with pytest.raises(ConfigError, match="unknown|unexpected"):
        load_config(write(tmp_path, text))


@pytest.mark.parametrize("patch", [
    {"sparsities": [1.0]},
    {"methods": ["gradual"]},
    {"total_epochs": 0},
    {"prune": {"drive_pretrain_epochs": 3}},
    {"train": {"optimizer": "rmsprop"}},
    {"model": {"sizes": [8, 4]}},
    {"model": {"sizes": [9, 3]}},
])
def test_invalid_values(patch):
    base = {"total_epochs": 3, "model": {"sizes": [8, 6, 3]}, "methods": ["drive"],
            "dataset": {"classes": 3, "dim": 8}}
    config_from_dict(base)
    base.update(patch)
    with pytest.raises(ConfigError):
        config_from_dict(base)


def test_syntax_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "name = "))


def test_dict_round_trip(tmp_path):
    cfg = load_config(write(tmp_path, GOOD))
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_cosine_schedule():
    cfg = config_from_dict({"train": {"schedule": "cosine", "lr": 0.1}})
    assert cfg.model.sizes == (784, 300, 100, 10)
    assert cfg.train.to_train_config().schedule == CosineAnnealing(0.1)
