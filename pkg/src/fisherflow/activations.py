"""Pointwise activations and their derivatives (the per-unit sensitivity signal)."""

from __future__ import annotations

from enum import Enum

import numpy as np


class ActivationKind(Enum):
    SIGMOID = "sigmoid"
    RELU = "relu"
    IDENTITY = "identity"

    @classmethod
    def from_name(cls, name: str) -> "ActivationKind":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown activation {name!r} (expected one of: {valid})") from None


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Split on sign so the exp argument is never positive; avoids overflow warnings.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activation_apply(kind: ActivationKind, z: np.ndarray) -> np.ndarray:
    """Apply the activation elementwise."""
    z = np.asarray(z)
    if kind is ActivationKind.SIGMOID:
        return _sigmoid(z)
    if kind is ActivationKind.RELU:
        return np.maximum(z, 0.0)
    return z


def activation_v(kind: ActivationKind, z: np.ndarray) -> np.ndarray:
    """Derivative of the activation at z.

    This is both the backprop factor and the sensitivity entering the layer
    Fisher estimate. The ReLU derivative is defined as 0 at z == 0.
    """
    z = np.asarray(z)
    if kind is ActivationKind.SIGMOID:
        s = _sigmoid(z)
        return s * (1.0 - s)
    if kind is ActivationKind.RELU:
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)
