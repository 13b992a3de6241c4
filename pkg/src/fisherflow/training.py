"""Training loop, optimizer steps, and the whitened-equals-natural-step check.

The SGD baseline and the whitened run share one code path: a baseline model
simply has every FisherState frozen at the identity, so identical seeds give
bitwise-identical trajectories when no refresh ever fires.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Callable

import numpy as np

from .activations import activation_apply
from .fisher import fisher_refresh, whiten
from .linalg import random_spd, spd_invsqrt_oracle
from .network import (
    ForwardTrace,
    MLPModel,
    backward,
    forward,
    l2_penalty,
    log_softmax_columns,
    softmax_columns,
    softmax_xent_l2,
)

if TYPE_CHECKING:
    from .data import Dataset


class OptimizerKind(Enum):
    SGD = "sgd"
    SNGD = "sngd"


@dataclass
class OptimizerConfig:
    kind: OptimizerKind = OptimizerKind.SNGD
    lr: float = 0.1
    momentum: float = 0.0


@dataclass
class MetricsRow:
    """One logged point of a training run.

    Train numbers are running averages of the pre-update minibatch forwards
    across the epoch (or the single batch, in per-step mode); val numbers
    come from a dedicated evaluation pass. Refresh/failure counts are
    cumulative over the model. wall_time_s is always written as 0.0 by the
    trainer: the metrics file is a deterministic product of (config, seed)
    and measured time would break its byte-for-byte reproducibility, so the
    CLI reports elapsed time on the console instead.
    """

    epoch: int
    step: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    fisher_refreshes: int
    fisher_failures: int
    wall_time_s: float


def sgd_step(
    param: np.ndarray,
    grad: np.ndarray,
    lr: float,
    momentum: float,
    velocity: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """One heavy-ball step: v' = momentum * v + grad; param' = param - lr * v'."""
    velocity = momentum * velocity + grad
    return param - lr * velocity, velocity


def init_velocities(model: MLPModel) -> list[list[np.ndarray]]:
    """Zeroed momentum buffers shaped like the model's parameters."""
    return [[np.zeros_like(layer.w), np.zeros_like(layer.b)] for layer in model.layers]


def _refresh_forward(model: MLPModel, x0: np.ndarray) -> ForwardTrace:
    """Forward pass that advances each layer's fisher schedule in order.

    Per layer: the pre-activation under the current S feeds the sensitivity
    estimate; if the schedule replaces S, the affine map is recomputed under
    the new S before activating, and earlier layers are not revisited. When
    no refresh fires the single pre-activation already computed is the
    forward one.
    """
    x = np.asarray(x0)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-d input batch, got ndim={x.ndim}")
    inputs, whitened, pre_acts, outputs = [], [], [], []
    for k, layer in enumerate(model.layers):
        if x.shape[0] != layer.w.shape[1]:
            raise ValueError(f"layer {k}: input has {x.shape[0]} rows, expected {layer.w.shape[1]}")
        u = whiten(layer.fisher, x)
        z = layer.w @ u + layer.b[:, None]
        if fisher_refresh(layer.fisher, x, z, layer.act):
            u = whiten(layer.fisher, x)
            z = layer.w @ u + layer.b[:, None]
        out = activation_apply(layer.act, z)
        inputs.append(x)
        whitened.append(u)
        pre_acts.append(z)
        outputs.append(out)
        x = out
    return ForwardTrace(inputs, whitened, pre_acts, outputs, softmax_columns(pre_acts[-1]))


def sngd_train_step(
    model: MLPModel,
    x: np.ndarray,
    labels: np.ndarray,
    opt: OptimizerConfig,
    velocities: list[list[np.ndarray]],
) -> tuple[float, ForwardTrace]:
    """One optimization step: schedule-aware forward, loss, backward, update.

    The model and velocity buffers are updated in place. Returns the batch
    loss (measured on the pre-update parameters) and the forward trace, whose
    probabilities are handy for pre-update batch accuracy.
    """
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] == 0:
        raise ValueError("empty batch")
    trace = _refresh_forward(model, x)
    loss, dlogits = softmax_xent_l2(trace.logits, labels, model)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss: {loss}")
    grads = backward(model, trace, dlogits)
    for layer, (dw, db), vel in zip(model.layers, grads, velocities):
        layer.w, vel[0] = sgd_step(layer.w, dw, opt.lr, opt.momentum, vel[0])
        layer.b, vel[1] = sgd_step(layer.b, db, opt.lr, opt.momentum, vel[1])
    return loss, trace


def lemma1_equivalence_check(dim: int, seed: int, lr: float = 0.1) -> float:
    """Confirm numerically that plain GD on whitened weights is a natural step.

    Draws a random SPD metric G and a random quadratic loss, fixes
    M = G^(-1/2) from the eigendecomposition oracle, and compares one GD step
    on w' (where w = M w') mapped back to w against the direct step
    w - lr * G^(-1) grad computed with an independent linear solve. Returns
    the maximum absolute discrepancy between the two.
    """
    rng = np.random.default_rng(seed)
    metric = random_spd(dim, rng, cond=float(rng.uniform(2.0, 100.0)))
    hess = random_spd(dim, rng, cond=10.0)
    lin = rng.standard_normal(dim)
    w_prime0 = rng.standard_normal(dim)
    m = spd_invsqrt_oracle(metric)
    w0 = m @ w_prime0
    grad = hess @ w0 - lin  # gradient of the quadratic 0.5 w'Aw - b'w at w0
    w_direct = w0 - lr * np.linalg.solve(metric, grad)
    w_prime1 = w_prime0 - lr * (m @ grad)  # chain rule: the composed gradient is M^T grad
    w_mapped = m @ w_prime1
    return float(np.max(np.abs(w_mapped - w_direct)))


def evaluate(model: MLPModel, dataset: "Dataset", batch_size: int = 1000) -> tuple[float, float]:
    """Mean loss (cross-entropy plus L2 penalty) and accuracy over a dataset.

    Forward passes only: no fisher schedule ticks, no parameter writes, so
    the model is bit-identical before and after.
    """
    x, labels = dataset.x, dataset.labels
    n = x.shape[1]
    if n == 0:
        raise ValueError("empty dataset")
    ce_sum = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        xb = x[:, start : start + batch_size]
        yb = labels[start : start + batch_size]
        trace = forward(model, xb)
        log_probs = log_softmax_columns(trace.logits)
        ce_sum -= float(np.sum(log_probs[yb, np.arange(yb.size)]))
        correct += int(np.sum(np.argmax(trace.probs, axis=0) == yb))
    return ce_sum / n + l2_penalty(model), correct / n


def _total_refreshes(model: MLPModel) -> int:
    return sum(layer.fisher.refresh_count for layer in model.layers)


def _total_failures(model: MLPModel) -> int:
    return sum(layer.fisher.failure_count for layer in model.layers)


def train_run(
    model: MLPModel,
    train: "Dataset",
    val: "Dataset",
    opt: OptimizerConfig,
    *,
    epochs: int,
    batch_size: int,
    rng: np.random.Generator,
    per_step: bool = False,
    log: Callable[[str], None] | None = None,
) -> list[MetricsRow]:
    """Run the optimizer over `train` for `epochs`, scoring `val` each epoch.

    Data order is reshuffled from `rng` every epoch, independent of the
    optimizer kind, so baseline and whitened runs with equal seeds see equal
    batches. Returns one MetricsRow per epoch, or one per step under
    per_step (step rows carry the batch metrics and the latest validation
    numbers, seeded by one evaluation before training begins).
    """
    if epochs < 1 or batch_size < 1:
        raise ValueError("epochs and batch_size must be at least 1")
    velocities = init_velocities(model)
    rows: list[MetricsRow] = []
    n = train.x.shape[1]
    step = 0
    val_loss = val_acc = 0.0
    if per_step:
        val_loss, val_acc = evaluate(model, val)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb = train.x[:, idx]
            yb = train.labels[idx]
            loss, trace = sngd_train_step(model, xb, yb, opt, velocities)
            step += 1
            batch_correct = int(np.sum(np.argmax(trace.probs, axis=0) == yb))
            loss_sum += loss * xb.shape[1]
            correct += batch_correct
            if per_step:
                rows.append(
                    MetricsRow(
                        epoch, step, float(loss), batch_correct / xb.shape[1],
                        val_loss, val_acc, _total_refreshes(model), _total_failures(model), 0.0,
                    )
                )
        val_loss, val_acc = evaluate(model, val)
        if not per_step:
            rows.append(
                MetricsRow(
                    epoch, step, loss_sum / n, correct / n,
                    val_loss, val_acc, _total_refreshes(model), _total_failures(model), 0.0,
                )
            )
        if log is not None:
            log(
                f"epoch {epoch:4d}  step {step:7d}  train_loss {loss_sum / n:.6f}  "
                f"train_acc {correct / n:.4f}  val_loss {val_loss:.6f}  val_acc {val_acc:.4f}"
            )
    return rows
