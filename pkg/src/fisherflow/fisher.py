"""Per-layer Fisher whitening state: estimate, damp, root-solve, and schedule.

Each dense layer owns a FisherState holding the whitening map S, a d x d
inverse square root of the damped local Fisher estimate for that layer's
inputs. S starts at the identity and is recomputed every `interval` training
steps from the current batch; between refreshes (and during backprop) it is
held constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .activations import ActivationKind, activation_v
from .linalg import SolverError, damp_spd, db_sqrt, gram_mean, ns_invsqrt, spd_invsqrt_oracle


class SolverKind(Enum):
    NEWTON_SCHULZ = "newton_schulz"
    DENMAN_BEAVERS = "denman_beavers"
    ORACLE = "oracle"


@dataclass
class FisherEstimate:
    """One layer's batch Fisher estimate before and after damping.

    scalar_v is the mean squared sensitivity over every output unit and
    sample; the (undamped) estimate is scalar_v times the mean input Gram.
    """

    scalar_v: float
    gram: np.ndarray
    g_damped: np.ndarray


@dataclass
class FisherState:
    """Whitening map plus its refresh schedule and solver configuration.

    s_is_identity is a fast-path flag: while S is exactly the identity (fresh
    or frozen baseline states) whiten() skips the matmul entirely. It is
    cleared by the first successful refresh; code that assigns `s` directly
    must keep it in sync.
    """

    s: np.ndarray
    eps_rel: float = 0.1
    floor_abs: float = 1e-8
    interval: int = 1
    ema: float = 0.0
    solver: SolverKind = SolverKind.NEWTON_SCHULZ
    solver_iters: int = 15
    step_counter: int = 0
    frozen: bool = False
    s_is_identity: bool = False
    refresh_count: int = 0
    failure_count: int = 0

    def __post_init__(self) -> None:
        self.s = np.asarray(self.s)
        if self.s.ndim != 2 or self.s.shape[0] != self.s.shape[1]:
            raise ValueError(f"whitener must be square, got shape {self.s.shape}")
        if self.interval < 1:
            raise ValueError("interval must be at least 1")
        if not 0.0 <= self.ema < 1.0:
            raise ValueError("ema must lie in [0, 1)")
        if self.solver_iters < 1:
            raise ValueError("solver_iters must be at least 1")
        if self.eps_rel < 0.0 or self.floor_abs < 0.0:
            raise ValueError("damping terms must be nonnegative")

    @classmethod
    def identity(cls, dim: int, *, dtype=np.float64, **options) -> "FisherState":
        """Fresh state with S = I, the canonical starting point."""
        return cls(s=np.eye(dim, dtype=dtype), s_is_identity=True, **options)

    @property
    def dim(self) -> int:
        return self.s.shape[0]


def local_fisher(
    x: np.ndarray, vf: np.ndarray, eps_rel: float = 0.1, floor_abs: float = 1e-8
) -> FisherEstimate:
    """Estimate one layer's input-side Fisher from a batch.

    x: layer inputs, one sample per column (d x B). vf: sensitivities of the
    layer's output units (d_out x B), squared and averaged into a single
    scalar. Returns the scalar, the mean input Gram, and the damped product
    scalar * gram + ridge, ready for a root solve.
    """
    x = np.asarray(x)
    vf = np.asarray(vf)
    if x.ndim != 2 or vf.ndim != 2:
        raise ValueError("inputs and sensitivities must be 2-d batches")
    if x.shape[1] != vf.shape[1]:
        raise ValueError(
            f"batch size mismatch: {x.shape[1]} input columns vs {vf.shape[1]} sensitivity columns"
        )
    scalar_v = float(np.mean(vf * vf))
    gram = gram_mean(x)
    g_damped = damp_spd(scalar_v * gram, eps_rel, floor_abs)
    return FisherEstimate(scalar_v=scalar_v, gram=gram, g_damped=g_damped)


def _solve_invsqrt(g: np.ndarray, solver: SolverKind, iters: int) -> np.ndarray:
    if solver is SolverKind.NEWTON_SCHULZ:
        z, _ = ns_invsqrt(g, iters=iters)
        return z
    if solver is SolverKind.DENMAN_BEAVERS:
        _, z, _ = db_sqrt(g, max_iters=iters)
        return z
    return spd_invsqrt_oracle(g)


def fisher_refresh(state: FisherState, x: np.ndarray, z: np.ndarray, act: ActivationKind) -> bool:
    """Advance the refresh schedule one step; recompute S when due.

    Always increments the step counter. When the counter is a multiple of the
    interval (and the state is not frozen), the damped local Fisher of this
    batch is solved for its inverse square root and blended into S:
    S <- (1 - ema) * S_new + ema * S_old, then re-symmetrized. z must be the
    pre-activation computed under the *current* S, which is what the
    sensitivities are taken at.

    A solver failure (raise, or non-finite output) keeps the previous S,
    bumps failure_count, and lets training continue. Returns True only when
    S was replaced on this call.
    """
    state.step_counter += 1
    if state.frozen or state.step_counter % state.interval != 0:
        return False
    vf = activation_v(act, z)
    estimate = local_fisher(x, vf, state.eps_rel, state.floor_abs)
    try:
        s_new = _solve_invsqrt(estimate.g_damped, state.solver, state.solver_iters)
    except (SolverError, np.linalg.LinAlgError):
        state.failure_count += 1
        return False
    if not np.all(np.isfinite(s_new)):
        state.failure_count += 1
        return False
    if state.ema > 0.0:
        s_new = (1.0 - state.ema) * s_new + state.ema * state.s
    state.s = 0.5 * (s_new + s_new.T)
    state.s_is_identity = False
    state.refresh_count += 1
    return True


def whiten(state: FisherState, x: np.ndarray) -> np.ndarray:
    """Apply the whitening map to a batch of layer inputs: u = S @ x."""
    x = np.asarray(x)
    if x.shape[0] != state.s.shape[0]:
        raise ValueError(
            f"dimension mismatch: input has {x.shape[0]} rows, whitener is {state.s.shape[0]} x {state.s.shape[0]}"
        )
    if state.s_is_identity:
        return x
    return state.s @ x
