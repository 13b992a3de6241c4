"""Built-in correctness checks, runnable from the CLI and reused by the tests.

The reference MLP here is written independently of the package's layer walk
(plain weight matrices, no whitening machinery) so the identity-reduction
check compares two genuinely different code paths. Gradient checks compare
analytic backprop against central finite differences of the actual loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import network
from .activations import ActivationKind
from .fisher import FisherState
from .linalg import db_sqrt, ns_invsqrt, random_spd, spd_invsqrt_oracle
from .network import MLPModel, build_mlp, forward, softmax_xent_l2
from .training import lemma1_equivalence_check


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


# --- independent reference implementation (no whitening, textbook backprop) ---

def _ref_act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "sigmoid":
        return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _ref_act_prime(name: str, z: np.ndarray) -> np.ndarray:
    if name == "sigmoid":
        s = _ref_act("sigmoid", z)
        return s * (1.0 - s)
    if name == "relu":
        return np.where(z > 0, 1.0, 0.0)
    return np.ones_like(z)


def reference_grads(weights, biases, acts, x, labels, l2):
    """Textbook MLP loss and gradients: forward, softmax CE, backprop.

    weights/biases/acts are parallel lists; acts are activation names with
    the final entry "identity". Returns (loss, [(dW, db), ...]).
    """
    xs = [np.asarray(x)]
    pre = []
    for w, b, act in zip(weights, biases, acts):
        z = w @ xs[-1] + b[:, None]
        pre.append(z)
        xs.append(_ref_act(act, z))
    logits = pre[-1]
    bsz = logits.shape[1]
    shifted = logits - logits.max(axis=0, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))
    loss = -float(np.mean(log_probs[labels, np.arange(bsz)]))
    loss += 0.5 * l2 * sum(float(np.sum(w * w)) for w in weights)
    delta = np.exp(log_probs)
    delta[labels, np.arange(bsz)] -= 1.0
    delta /= bsz
    grads = [None] * len(weights)
    for k in range(len(weights) - 1, -1, -1):
        grads[k] = (delta @ xs[k].T + l2 * weights[k], delta.sum(axis=1))
        if k > 0:
            delta = (weights[k].T @ delta) * _ref_act_prime(acts[k - 1], pre[k - 1])
    return loss, grads


def finite_diff_grads(model: MLPModel, x: np.ndarray, labels: np.ndarray, h: float = 1e-5):
    """Central-difference gradients of the full loss for every W and b entry."""

    def loss_now() -> float:
        return softmax_xent_l2(forward(model, x).logits, labels, model)[0]

    grads = []
    for layer in model.layers:
        for param in (layer.w, layer.b):
            g = np.zeros_like(param)
            it = np.nditer(param, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                keep = param[idx]
                param[idx] = keep + h
                up = loss_now()
                param[idx] = keep - h
                down = loss_now()
                param[idx] = keep
                g[idx] = (up - down) / (2.0 * h)
            grads.append(g)
    return grads


def max_param_mismatch(analytic, numeric) -> float:
    """Worst relative disagreement, with near-zero entries graded absolutely.

    Denominator max(|a|, |b|, 1e-3): a strict relative bound for real-sized
    gradient entries, an absolute one (scaled by 1e-3) for entries near zero
    where central differences only carry noise (~1e-10).
    """
    worst = 0.0
    for a, b in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-3)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst


def _random_whitened_model(rng: np.random.Generator, arch, act: ActivationKind) -> MLPModel:
    """Small model with random SPD whiteners (the interesting, non-identity case)."""
    model = build_mlp(arch, act, l2=float(rng.uniform(0.0, 0.01)), rng=rng)
    for layer in model.layers:
        layer.fisher = FisherState(s=random_spd(layer.w.shape[1], rng, cond=5.0))
    return model


def check_gradients(n_models: int = 8, seed: int = 0) -> CheckResult:
    """Backprop vs central finite differences on random whitened models.

    Sigmoid hidden activations keep the loss smooth at the probe points (the
    ReLU kink would make finite differences unreliable); ReLU backprop is
    covered by the exact identity-reduction comparison instead.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_models):
        widths = [int(rng.integers(2, 9)) for _ in range(int(rng.integers(2, 4)) + 1)]
        model = _random_whitened_model(rng, widths, ActivationKind.SIGMOID)
        bsz = int(rng.integers(1, 8))
        x = rng.standard_normal((widths[0], bsz))
        labels = rng.integers(0, widths[-1], size=bsz)
        trace = forward(model, x)
        loss, dlogits = softmax_xent_l2(trace.logits, labels, model)
        analytic = []
        for dw, db in network.backward(model, trace, dlogits):
            analytic.extend([dw, db])
        numeric = finite_diff_grads(model, x, labels)
        worst = max(worst, max_param_mismatch(analytic, numeric))
    passed = worst < 1e-6
    return CheckResult("gradient-check", passed, f"max mismatch {worst:.3e} over {n_models} models")


def check_identity_reduction(n_models: int = 8, seed: int = 1) -> CheckResult:
    """With S = I multiplied out explicitly, forward/backward must match the reference."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_models):
        act = ActivationKind.RELU if i % 2 == 0 else ActivationKind.SIGMOID
        widths = [int(rng.integers(2, 9)) for _ in range(int(rng.integers(2, 4)) + 1)]
        model = build_mlp(widths, act, l2=0.003, rng=rng)
        for layer in model.layers:
            # Explicit identity, fast path off: the matmuls really run.
            layer.fisher = FisherState(s=np.eye(layer.w.shape[1]))
        bsz = int(rng.integers(1, 8))
        x = rng.standard_normal((widths[0], bsz))
        labels = rng.integers(0, widths[-1], size=bsz)
        trace = forward(model, x)
        loss, dlogits = softmax_xent_l2(trace.logits, labels, model)
        grads = network.backward(model, trace, dlogits)
        ref_loss, ref_grads = reference_grads(
            [l.w for l in model.layers],
            [l.b for l in model.layers],
            [l.act.value for l in model.layers],
            x, labels, model.l2,
        )
        worst = max(worst, abs(loss - ref_loss))
        for (dw, db), (rw, rb) in zip(grads, ref_grads):
            worst = max(worst, float(np.max(np.abs(dw - rw))), float(np.max(np.abs(db - rb))))
    passed = worst < 1e-12
    return CheckResult("identity-reduction", passed, f"max deviation {worst:.3e} vs reference MLP")


def check_lemma1(dims=(1, 2, 4, 8, 16), seeds=range(5)) -> CheckResult:
    """GD on whitened weights must equal the natural step on the originals."""
    worst = 0.0
    for dim in dims:
        for seed in seeds:
            worst = max(worst, lemma1_equivalence_check(dim, seed))
    passed = worst < 1e-10
    return CheckResult("whitened-step-equivalence", passed, f"max discrepancy {worst:.3e}")


def check_solvers(trials: int = 12, seed: int = 2) -> CheckResult:
    """Both iterative inverse-root routes must agree with the Jacobi oracle."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        dim = int(rng.integers(2, 33))
        scale = 10.0 ** rng.uniform(-3.0, 1.0)
        a = random_spd(dim, rng, cond=10.0 ** rng.uniform(1.0, 4.0), scale=scale)
        want = spd_invsqrt_oracle(a)
        norm = float(np.linalg.norm(want))
        got_ns, _ = ns_invsqrt(a, iters=20)
        _, got_db, _ = db_sqrt(a)
        worst = max(
            worst,
            float(np.linalg.norm(got_ns - want)) / norm,
            float(np.linalg.norm(got_db - want)) / norm,
        )
    passed = worst < 1e-6
    return CheckResult("inverse-root-solvers", passed, f"max relative error {worst:.3e} vs oracle")


def run_all(seed: int = 0) -> list[CheckResult]:
    return [
        check_gradients(seed=seed),
        check_identity_reduction(seed=seed + 1),
        check_lemma1(),
        check_solvers(seed=seed + 2),
    ]
