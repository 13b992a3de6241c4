"""Dense SPD kernels: batch Gram means, trace damping, and inverse-square-root solvers.

Everything operates on plain float numpy arrays. Two iterative routes to the
inverse square root (Denman-Beavers and Newton-Schulz) are checked against a
hand-rolled Jacobi eigendecomposition that shares no code with them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SolverError(RuntimeError):
    """An iterative matrix routine could not produce a usable result."""


@dataclass
class SpdSolveReport:
    """Outcome of one solver call.

    residual is the Frobenius norm of Z A Z - I for the returned inverse root
    Z (after any de-scaling); converged means it fell below the tolerance the
    call was configured with.
    """

    iterations_used: int
    residual: float
    converged: bool


def _check_square(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ValueError(f"expected a square {what}, got shape {a.shape}")
    return a


def gram_mean(x: np.ndarray) -> np.ndarray:
    """Mean outer product of the columns of x: (x @ x.T) / B.

    x holds one sample per column (d rows, B columns). The result is d x d,
    symmetric and positive semidefinite.
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-d batch matrix, got ndim={x.ndim}")
    if x.shape[1] == 0:
        raise ValueError("empty batch")
    return (x @ x.T) / x.shape[1]


def gram_channels(f: np.ndarray) -> np.ndarray:
    """Per-sample channel Gram matrices of a 4-d activation tensor.

    Each sample's (c, h, w) block is flattened row-major to a c x (h*w)
    matrix M and contributes M @ M.T, giving an (n, c, c) result. This is the
    channel-structured estimate used when a feature map rather than a flat
    vector feeds a layer.
    """
    f = np.asarray(f)
    if f.ndim != 4:
        raise ValueError(f"malformed tensor: expected 4 dimensions, got {f.ndim}")
    if min(f.shape) == 0:
        raise ValueError(f"malformed tensor: zero-sized dimension in shape {f.shape}")
    n, c, h, w = f.shape
    m = f.reshape(n, c, h * w)
    return m @ np.transpose(m, (0, 2, 1))


def damp_spd(g: np.ndarray, eps_rel: float = 0.1, floor_abs: float = 1e-8) -> np.ndarray:
    """Add a trace-scaled ridge: g + (eps_rel * tr(g) / d + floor_abs) * I.

    Keeps near-singular estimates invertible before a root solve. g must be
    symmetric within 1e-10 (absolute, entrywise).
    """
    g = _check_square(g)
    if eps_rel < 0.0 or floor_abs < 0.0:
        raise ValueError("damping terms eps_rel and floor_abs must be nonnegative")
    if not np.allclose(g, g.T, rtol=0.0, atol=1e-10):
        raise ValueError("matrix is not symmetric within 1e-10")
    d = g.shape[0]
    ridge = eps_rel * float(np.trace(g)) / d + floor_abs
    return g + ridge * np.eye(d, dtype=g.dtype)


def db_sqrt(
    a: np.ndarray, max_iters: int = 50, tol: float = 1e-10
) -> tuple[np.ndarray, np.ndarray, SpdSolveReport]:
    """Coupled Denman-Beavers iteration for the SPD square root.

    Y_{k+1} = (Y_k + Z_k^-1) / 2 and Z_{k+1} = (Z_k + Y_k^-1) / 2 starting
    from Y = a, Z = I converge to (sqrt(a), sqrt(a)^-1). Iteration stops when
    the relative Frobenius change of Y drops below tol.
    """
    a = _check_square(a)
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if not np.all(np.isfinite(a)):
        raise SolverError("matrix contains non-finite entries")
    y = a.copy()
    z = np.eye(a.shape[0], dtype=a.dtype)
    eye = np.eye(a.shape[0], dtype=a.dtype)
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        try:
            y_inv = np.linalg.inv(y)
            z_inv = np.linalg.inv(z)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular iterate at iteration {iterations}") from exc
        y_next = 0.5 * (y + z_inv)
        z_next = 0.5 * (z + y_inv)
        denom = float(np.linalg.norm(y_next))
        change = float(np.linalg.norm(y_next - y)) / max(denom, np.finfo(y.dtype).tiny)
        y, z = y_next, z_next
        if change < tol:
            converged = True
            break
    residual = float(np.linalg.norm(z @ a @ z - eye))
    return y, z, SpdSolveReport(iterations, residual, converged)


def ns_invsqrt(
    a: np.ndarray, iters: int = 20, tol: float = 1e-6
) -> tuple[np.ndarray, SpdSolveReport]:
    """Inverse-free Newton-Schulz iteration for the SPD inverse square root.

    The input is pre-scaled by its trace so every eigenvalue lands in (0, 1],
    inside the iteration's convergence region; the result is de-scaled by
    1/sqrt(trace). Runs a fixed budget of iterations using only matrix
    multiplies, no inversion or factorization. tol only grades the report's
    converged flag against the final residual.
    """
    a = _check_square(a)
    if iters < 1:
        raise ValueError("iters must be at least 1")
    if not np.all(np.isfinite(a)):
        raise SolverError("matrix contains non-finite entries")
    trace = float(np.trace(a))
    if not trace > 0.0:  # also catches nan
        raise SolverError("not positive-definite: trace is not positive")
    eye = np.eye(a.shape[0], dtype=a.dtype)
    b = a / trace
    y = b.copy()
    z = eye.copy()
    for _ in range(iters):
        corr = 3.0 * eye - z @ y
        y = 0.5 * (y @ corr)
        z = 0.5 * (corr @ z)
    z = z / np.sqrt(trace)
    residual = float(np.linalg.norm(z @ a @ z - eye))
    return z, SpdSolveReport(iters, residual, residual <= tol)


def jacobi_eigh(a: np.ndarray, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps row by row, rotating away each off-diagonal entry, until the
    off-diagonal Frobenius mass falls below 1e-14 of the matrix norm. Returns
    (eigenvalues ascending, Q with matching columns) with a = Q diag(vals) Q.T.
    Shares no code with the iterative solvers, which it serves as the
    reference route for.
    """
    a = _check_square(a)
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10):
        raise ValueError("matrix is not symmetric within 1e-10")
    n = a.shape[0]
    w = a.astype(np.float64, copy=True)
    q = np.eye(n)
    norm = float(np.linalg.norm(w))
    for sweep in range(max_sweeps + 1):
        # Off-diagonal Frobenius mass, summed directly (subtracting the
        # diagonal mass from the total cancels catastrophically near zero).
        strut = w.copy()
        np.fill_diagonal(strut, 0.0)
        off = float(np.linalg.norm(strut))
        if off <= 1e-14 * max(norm, np.finfo(np.float64).tiny):
            vals = np.diag(w).copy()
            order = np.argsort(vals)
            return vals[order], q[:, order]
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = w[p, r]
                if apr == 0.0:
                    continue
                tau = (w[r, r] - w[p, p]) / (2.0 * apr)
                # hypot avoids overflow when tau is huge (negligible pivots)
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0.0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                row_p, row_r = w[p, :].copy(), w[r, :].copy()
                w[p, :] = c * row_p - s * row_r
                w[r, :] = s * row_p + c * row_r
                col_p, col_r = w[:, p].copy(), w[:, r].copy()
                w[:, p] = c * col_p - s * col_r
                w[:, r] = s * col_p + c * col_r
                q_p, q_r = q[:, p].copy(), q[:, r].copy()
                q[:, p] = c * q_p - s * q_r
                q[:, r] = s * q_p + c * q_r
    raise SolverError(f"Jacobi sweeps did not converge within {max_sweeps} sweeps")


def spd_invsqrt_oracle(a: np.ndarray, max_sweeps: int = 100) -> np.ndarray:
    """Reference inverse square root: Q diag(vals^-1/2) Q.T via jacobi_eigh."""
    vals, q = jacobi_eigh(a, max_sweeps=max_sweeps)
    if vals[0] <= 0.0:
        raise SolverError(f"not positive-definite: smallest eigenvalue {vals[0]:.3e}")
    return (q / np.sqrt(vals)) @ q.T


def random_spd(
    dim: int,
    rng: np.random.Generator,
    cond: float = 100.0,
    scale: float = 1.0,
) -> np.ndarray:
    """Random SPD matrix with largest eigenvalue `scale` and condition `cond`.

    Eigenvalues are log-uniform over [scale/cond, scale] with both endpoints
    pinned (for dim >= 2), in a uniformly random orthogonal basis.
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    if cond < 1.0 or scale <= 0.0:
        raise ValueError("need cond >= 1 and scale > 0")
    gauss = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diagonal(r))
    if dim == 1:
        vals = np.array([scale])
    else:
        vals = scale * cond ** -rng.uniform(0.0, 1.0, size=dim)
        vals[0] = scale
        vals[1] = scale / cond
    mat = (q * vals) @ q.T
    return 0.5 * (mat + mat.T)
