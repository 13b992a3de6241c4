"""Dense feed-forward network with an input-side whitening map per layer.

Layer forward is x_next = f(W (S x) + b): the whitener S sits between the
input and the weights, the bias stays outside it. The softmax is fused into
the loss; the final layer keeps an identity activation so its pre-activations
are the logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activations import ActivationKind, activation_apply, activation_v
from .fisher import FisherState, whiten


@dataclass
class DenseLayer:
    w: np.ndarray  # (d_out, d_in)
    b: np.ndarray  # (d_out,)
    act: ActivationKind
    fisher: FisherState


@dataclass
class MLPModel:
    layers: list[DenseLayer]
    l2: float = 0.0


@dataclass
class ForwardTrace:
    """Everything backward needs from one forward pass, per layer."""

    inputs: list[np.ndarray]  # x_k fed to each layer
    whitened: list[np.ndarray]  # u_k = S_k x_k
    pre_acts: list[np.ndarray]  # z_k = W_k u_k + b_k
    outputs: list[np.ndarray]  # x_{k+1} = f(z_k)
    probs: np.ndarray  # column softmax of the logits

    @property
    def logits(self) -> np.ndarray:
        return self.pre_acts[-1]


def build_mlp(
    arch: list[int],
    hidden_act: ActivationKind,
    l2: float,
    rng: np.random.Generator,
    *,
    dtype=np.float64,
    fisher_options: dict | None = None,
    frozen: bool = False,
) -> MLPModel:
    """Construct an MLP with Glorot-uniform weights and identity whiteners.

    arch lists the widths input-first; hidden layers use hidden_act, the
    output layer is identity (softmax lives in the loss). fisher_options are
    FisherState settings shared by every layer; frozen=True pins every
    whitener at the identity, which is exactly the plain-SGD baseline.
    """
    arch = [int(d) for d in arch]
    if len(arch) < 2:
        raise ValueError("arch needs at least an input and an output width")
    if min(arch) < 1:
        raise ValueError(f"layer widths must be positive, got {arch}")
    options = dict(fisher_options or {})
    layers = []
    for k in range(len(arch) - 1):
        d_in, d_out = arch[k], arch[k + 1]
        limit = np.sqrt(6.0 / (d_in + d_out))
        w = rng.uniform(-limit, limit, size=(d_out, d_in)).astype(dtype)
        b = np.zeros(d_out, dtype=dtype)
        act = hidden_act if k < len(arch) - 2 else ActivationKind.IDENTITY
        state = FisherState.identity(d_in, dtype=dtype, frozen=frozen, **options)
        layers.append(DenseLayer(w=w, b=b, act=act, fisher=state))
    return MLPModel(layers=layers, l2=float(l2))


def softmax_columns(logits: np.ndarray) -> np.ndarray:
    """Columnwise softmax, stabilized by the per-column max."""
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def log_softmax_columns(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=0, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))


def l2_penalty(model: MLPModel) -> float:
    """The (l2/2) * sum of squared weight entries term; biases are exempt."""
    if model.l2 == 0.0:
        return 0.0
    return 0.5 * model.l2 * sum(float(np.sum(layer.w * layer.w)) for layer in model.layers)


def forward(model: MLPModel, x0: np.ndarray) -> ForwardTrace:
    """Pure forward pass: whiten, affine, activate per layer; softmax at the end.

    Never touches the fisher schedule, so it is safe for evaluation.
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
        out = activation_apply(layer.act, z)
        inputs.append(x)
        whitened.append(u)
        pre_acts.append(z)
        outputs.append(out)
        x = out
    return ForwardTrace(inputs, whitened, pre_acts, outputs, softmax_columns(pre_acts[-1]))


def softmax_xent_l2(
    logits: np.ndarray, labels: np.ndarray, model: MLPModel
) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch plus the L2 weight penalty.

    Returns the scalar loss and its gradient with respect to the logits,
    (softmax - onehot) / B. The penalty enters the loss here and the weight
    gradients in backward; it never touches the logit gradient.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ValueError("logits must be a 2-d (classes x batch) matrix")
    k, bsz = logits.shape
    if bsz == 0:
        raise ValueError("empty batch")
    if labels.shape != (bsz,):
        raise ValueError(f"labels must be one integer per column, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label out of range [0, {k})")
    log_probs = log_softmax_columns(logits)
    cols = np.arange(bsz)
    ce = -float(np.mean(log_probs[labels, cols]))
    probs = np.exp(log_probs)
    dlogits = probs.copy()
    dlogits[labels, cols] -= 1.0
    dlogits /= bsz
    return ce + l2_penalty(model), dlogits


def backward(
    model: MLPModel, trace: ForwardTrace, dlogits: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Backpropagate with every whitener held constant.

    The whitening maps are data here: no gradient is produced for S, and the
    upstream signal through layer k is S_k^T W_k^T delta_k. Returns one
    (dW, db) pair per layer; dW includes the L2 term, db does not.
    """
    grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(model.layers)
    delta = np.asarray(dlogits)
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        dw = delta @ trace.whitened[k].T
        if model.l2 != 0.0:
            dw = dw + model.l2 * layer.w
        db = delta.sum(axis=1)
        grads[k] = (dw, db)
        if k > 0:
            dx = layer.w.T @ delta
            if not layer.fisher.s_is_identity:
                dx = layer.fisher.s.T @ dx
            delta = dx * activation_v(model.layers[k - 1].act, trace.pre_acts[k - 1])
    return grads
