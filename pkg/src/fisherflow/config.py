"""Experiment configuration: a strict TOML schema with typed defaults.

Unknown keys fail loudly (naming the key) so a typo never silently runs the
default; value errors name the offending key too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .activations import ActivationKind
from .fisher import SolverKind
from .training import OptimizerConfig, OptimizerKind


class ConfigError(ValueError):
    """Bad experiment configuration; the message names the offending key."""


_SOLVERS = {kind.value: kind for kind in SolverKind}
_DATASETS = ("mnist", "blobs")
_ACTIVATIONS = ("relu", "sigmoid")
_OPTIMIZERS = ("sgd", "sngd")
_PRECISIONS = ("f64", "f32")


@dataclass
class FisherConfig:
    eps_rel: float = 0.1
    floor_abs: float = 1e-8
    interval: int = 1
    ema: float = 0.0
    solver: str = "newton_schulz"
    solver_iters: int = 15


@dataclass
class TrainConfig:
    dataset: str = "blobs"
    data_dir: str = ""
    arch: list[int] = field(default_factory=lambda: [2, 32, 2])
    activation: str = "relu"
    epochs: int = 10
    batch_size: int = 50
    lr: float = 0.1
    momentum: float = 0.0
    l2: float = 0.001
    optimizer: str = "sngd"
    fisher: FisherConfig = field(default_factory=FisherConfig)
    seed: int = 0
    precision: str = "f64"
    out: str = "metrics.csv"

    def dtype(self):
        return np.float64 if self.precision == "f64" else np.float32

    def hidden_activation(self) -> ActivationKind:
        return ActivationKind.from_name(self.activation)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(kind=OptimizerKind(self.optimizer), lr=self.lr, momentum=self.momentum)

    def fisher_options(self) -> dict[str, Any]:
        """FisherState settings shared by every layer of the model."""
        return {
            "eps_rel": self.fisher.eps_rel,
            "floor_abs": self.fisher.floor_abs,
            "interval": self.fisher.interval,
            "ema": self.fisher.ema,
            "solver": _SOLVERS[self.fisher.solver],
            "solver_iters": self.fisher.solver_iters,
        }


def _get_int(doc: dict, key: str, default: int, minimum: int | None = None) -> int:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key}: must be >= {minimum}, got {value}")
    return value


def _get_real(doc: dict, key: str, default: float, minimum: float | None = None,
              below_one: bool = False, positive: bool = False) -> float:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    value = float(value)
    if positive and value <= 0.0:
        raise ConfigError(f"{key}: must be positive, got {value}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key}: must be >= {minimum}, got {value}")
    if below_one and value >= 1.0:
        raise ConfigError(f"{key}: must be < 1, got {value}")
    return value


def _get_choice(doc: dict, key: str, default: str, choices: tuple[str, ...]) -> str:
    value = doc.get(key, default)
    if not isinstance(value, str) or value not in choices:
        raise ConfigError(f"{key}: expected one of {', '.join(choices)}, got {value!r}")
    return value


def _get_str(doc: dict, key: str, default: str) -> str:
    value = doc.get(key, default)
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def _get_arch(doc: dict, default: list[int]) -> list[int]:
    value = doc.get("arch", default)
    if not isinstance(value, list) or len(value) < 2:
        raise ConfigError(f"arch: expected a list of at least two widths, got {value!r}")
    for width in value:
        if isinstance(width, bool) or not isinstance(width, int) or width < 1:
            raise ConfigError(f"arch: widths must be positive integers, got {width!r}")
    return list(value)


def _check_known(doc: dict, known: tuple[str, ...], prefix: str = "") -> None:
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown config key: {prefix}{key}")


def train_config_from_dict(doc: dict) -> TrainConfig:
    """Validate a parsed TOML document into a TrainConfig."""
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be a table, got {type(doc).__name__}")
    defaults = TrainConfig()
    _check_known(
        doc,
        (
            "dataset", "data_dir", "arch", "activation", "epochs", "batch_size",
            "lr", "momentum", "l2", "optimizer", "fisher", "seed", "precision", "out",
        ),
    )
    fdoc = doc.get("fisher", {})
    if not isinstance(fdoc, dict):
        raise ConfigError(f"fisher: expected a table, got {fdoc!r}")
    _check_known(
        fdoc, ("eps_rel", "floor_abs", "interval", "ema", "solver", "solver_iters"), prefix="fisher."
    )
    fdefaults = FisherConfig()
    fisher = FisherConfig(
        eps_rel=_get_real(fdoc, "eps_rel", fdefaults.eps_rel, minimum=0.0),
        floor_abs=_get_real(fdoc, "floor_abs", fdefaults.floor_abs, minimum=0.0),
        interval=_get_int(fdoc, "interval", fdefaults.interval, minimum=1),
        ema=_get_real(fdoc, "ema", fdefaults.ema, minimum=0.0, below_one=True),
        solver=_get_choice(fdoc, "solver", fdefaults.solver, tuple(_SOLVERS)),
        solver_iters=_get_int(fdoc, "solver_iters", fdefaults.solver_iters, minimum=1),
    )
    out = _get_str(doc, "out", defaults.out)
    if not out:
        raise ConfigError("out: must not be empty")
    return TrainConfig(
        dataset=_get_choice(doc, "dataset", defaults.dataset, _DATASETS),
        data_dir=_get_str(doc, "data_dir", defaults.data_dir),
        arch=_get_arch(doc, defaults.arch),
        activation=_get_choice(doc, "activation", defaults.activation, _ACTIVATIONS),
        epochs=_get_int(doc, "epochs", defaults.epochs, minimum=1),
        batch_size=_get_int(doc, "batch_size", defaults.batch_size, minimum=1),
        lr=_get_real(doc, "lr", defaults.lr, positive=True),
        momentum=_get_real(doc, "momentum", defaults.momentum, minimum=0.0, below_one=True),
        l2=_get_real(doc, "l2", defaults.l2, minimum=0.0),
        optimizer=_get_choice(doc, "optimizer", defaults.optimizer, _OPTIMIZERS),
        fisher=fisher,
        seed=_get_int(doc, "seed", defaults.seed),
        precision=_get_choice(doc, "precision", defaults.precision, _PRECISIONS),
        out=out,
    )


def load_train_config(path) -> TrainConfig:
    """Read and validate a TOML config file."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from None
    return train_config_from_dict(doc)
