"""TOML config parsing and validation tests."""

import numpy as np
import pytest

from fisherflow.activations import ActivationKind
from fisherflow.config import ConfigError, TrainConfig, load_train_config, train_config_from_dict
from fisherflow.fisher import SolverKind
from fisherflow.training import OptimizerKind


def test_empty_doc_yields_defaults():
    cfg = train_config_from_dict({})
    assert cfg.dataset == "blobs"
    assert cfg.arch == [2, 32, 2]
    assert cfg.lr == 0.1
    assert cfg.fisher.interval == 1
    assert cfg.fisher.solver == "newton_schulz"
    assert cfg.out == "metrics.csv"


def test_full_doc_round_trip():
    cfg = train_config_from_dict({
        "dataset": "mnist",
        "data_dir": "/data",
        "arch": [784, 100, 10],
        "activation": "sigmoid",
        "epochs": 3,
        "batch_size": 64,
        "lr": 0.05,
        "momentum": 0.9,
        "l2": 0.0,
        "optimizer": "sgd",
        "seed": 11,
        "precision": "f32",
        "out": "run.csv",
        "fisher": {"eps_rel": 0.2, "floor_abs": 1e-6, "interval": 50,
                   "ema": 0.9, "solver": "denman_beavers", "solver_iters": 30},
    })
    assert cfg.data_dir == "/data"
    assert cfg.dtype() == np.float32
    assert cfg.hidden_activation() is ActivationKind.SIGMOID
    opt = cfg.optimizer_config()
    assert opt.kind is OptimizerKind.SGD and opt.lr == 0.05 and opt.momentum == 0.9
    opts = cfg.fisher_options()
    assert opts["solver"] is SolverKind.DENMAN_BEAVERS
    assert opts["interval"] == 50 and opts["ema"] == 0.9


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="unknown config key: learning_rate"):
        train_config_from_dict({"learning_rate": 0.1})
    with pytest.raises(ConfigError, match="unknown config key: fisher.period"):
        train_config_from_dict({"fisher": {"period": 5}})


def test_type_and_range_validation():
    with pytest.raises(ConfigError, match="epochs: expected an integer"):
        train_config_from_dict({"epochs": 2.5})
    with pytest.raises(ConfigError, match="epochs: must be >= 1"):
        train_config_from_dict({"epochs": 0})
    with pytest.raises(ConfigError, match="lr: must be positive"):
        train_config_from_dict({"lr": 0.0})
    with pytest.raises(ConfigError, match="momentum: must be < 1"):
        train_config_from_dict({"momentum": 1.0})
    with pytest.raises(ConfigError, match="dataset: expected one of mnist, blobs"):
        train_config_from_dict({"dataset": "cifar"})
    with pytest.raises(ConfigError, match="ema: must be < 1"):
        train_config_from_dict({"fisher": {"ema": 1.5}})
    with pytest.raises(ConfigError, match="out: must not be empty"):
        train_config_from_dict({"out": ""})


def test_bool_is_not_an_integer():
    # TOML distinguishes them; so does the validator
    with pytest.raises(ConfigError, match="epochs: expected an integer"):
        train_config_from_dict({"epochs": True})


def test_arch_validation():
    with pytest.raises(ConfigError, match="arch: expected a list of at least two widths"):
        train_config_from_dict({"arch": [5]})
    with pytest.raises(ConfigError, match="arch: widths must be positive integers"):
        train_config_from_dict({"arch": [5, 0]})
    with pytest.raises(ConfigError, match="arch: widths must be positive integers"):
        train_config_from_dict({"arch": [5, "ten"]})


def test_lr_accepts_integer_toml_number():
    cfg = train_config_from_dict({"lr": 1})
    assert cfg.lr == 1.0 and isinstance(cfg.lr, float)


def test_fisher_must_be_table():
    with pytest.raises(ConfigError, match="fisher: expected a table"):
        train_config_from_dict({"fisher": 3})


def test_load_toml_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(
        'dataset = "blobs"\n'
        "arch = [2, 8, 2]\n"
        "epochs = 2\n"
        "lr = 0.5\n"
        "[fisher]\n"
        "interval = 10\n"
    )
    cfg = load_train_config(p)
    assert cfg.arch == [2, 8, 2]
    assert cfg.lr == 0.5
    assert cfg.fisher.interval == 10


def test_load_toml_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="config file not found"):
        load_train_config(tmp_path / "nope.toml")


def test_load_toml_parse_error(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("epochs = [unclosed\n")
    with pytest.raises(ConfigError, match="config parse error"):
        load_train_config(p)


def test_config_is_plain_dataclass():
    cfg = TrainConfig(seed=5)
    assert cfg.seed == 5
    assert cfg.fisher.eps_rel == 0.1
