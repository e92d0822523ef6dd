"""Empirical neural tangent kernel and gradient-alignment scores.

The empirical NTK of a network with out_dim = n outputs over N inputs
is the N*n x N*n Gram matrix of per-example Jacobians, stored in
example-major order: block (i, j) is the n x n matrix J_i @ J_j^T.

Materializing the kernel is quadratic in N and only feasible for small
problems, so scoring never builds it. The score of example i,
s_i = || sum_j K(x_i, x_j) g_j ||, factorizes through parameter space:
with v = sum_j J_j^T g_j (one reverse pass over the batch), s_i is the
norm of the forward directional derivative J_i v. Total cost is two
network-sized passes instead of N^2 Jacobian contractions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import (
    MlpParams,
    NetworkConfig,
    ForwardCache,
    backward_params,
    forward,
    jvp_params,
    output_jacobian,
)

# Materialization guards: ntk_exact allocates an (N*n)^2 kernel plus the
# stacked Jacobians, ntk_row an n x N*n slab. Beyond these sizes the
# caller should be using the factorized path instead.
EXACT_MAX_ROWS = 4096
ROW_MAX_ENTRIES = 2**22


@dataclass(frozen=True)
class NtkMatrix:
    """Dense empirical kernel with its block structure."""

    matrix: np.ndarray
    num_examples: int
    out_dim: int

    def block(self, i: int, j: int) -> np.ndarray:
        n = self.out_dim
        return self.matrix[i * n : (i + 1) * n, j * n : (j + 1) * n]


@dataclass(frozen=True)
class ScoreVector:
    """Per-example scores plus the iteration they were computed at."""

    scores: np.ndarray
    iteration_computed: int


def _stacked_jacobians(params: MlpParams, config: NetworkConfig, X: np.ndarray) -> np.ndarray:
    """Per-example Jacobians as one (N*n, P) matrix, example-major.

    One shared forward pass, then a reverse sweep that keeps the batch
    axis and seeds all n output channels at once.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    N = X.shape[0]
    n = config.out_dim
    _, cache = forward(params, config, X)
    L = len(params.layout)
    jac = np.zeros((N, n, params.size))
    dz = np.broadcast_to(np.eye(n), (N, n, n))
    for layer in range(L - 1, -1, -1):
        fi, fo, w_off, b_off = params.layout[layer]
        h_prev = cache.h0 if layer == 0 else cache.hs[layer - 1]
        jac[:, :, w_off : w_off + fi * fo] = np.einsum("bco,bi->bcoi", dz, h_prev).reshape(
            N, n, fo * fi
        )
        jac[:, :, b_off : b_off + fo] = dz
        if layer > 0:
            deriv = _deriv(config, cache.zs[layer - 1])
            dz = np.einsum("bco,oi->bci", dz, params.weight(layer)) * deriv[:, None, :]
    return jac.reshape(N * n, params.size)


def _deriv(config: NetworkConfig, z: np.ndarray) -> np.ndarray:
    if config.activation == "sine":
        return config.omega0 * np.cos(config.omega0 * z)
    return (z > 0.0).astype(np.float64)


def ntk_exact(params: MlpParams, config: NetworkConfig, X: np.ndarray) -> NtkMatrix:
    """Dense empirical NTK over a coordinate set. Quadratic; guarded."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    N = X.shape[0]
    n = config.out_dim
    if N * n > EXACT_MAX_ROWS:
        raise ValueError(
            f"exact kernel has {N * n} rows, over the {EXACT_MAX_ROWS} row limit; "
            "use the factorized scores instead"
        )
    J = _stacked_jacobians(params, config, X)
    return NtkMatrix(matrix=J @ J.T, num_examples=N, out_dim=n)


def ntk_row(params: MlpParams, config: NetworkConfig, X: np.ndarray, i: int) -> np.ndarray:
    """Block row i of the kernel: n x (N*n), without forming the matrix.

    Each output channel of example i contributes one parameter-space
    direction J_i[c]; pushing it back through the network as a JVP
    yields K(x_i, x_j) for every j at O(N*P) cost.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    N = X.shape[0]
    n = config.out_dim
    if not 0 <= i < N:
        raise IndexError(f"row index {i} out of range for {N} examples")
    if N * n * n > ROW_MAX_ENTRIES:
        raise ValueError(
            f"kernel row has {N * n * n} entries, over the {ROW_MAX_ENTRIES} limit"
        )
    J_i = output_jacobian(params, config, X[i])
    row = np.empty((n, N * n))
    for c in range(n):
        row[c] = jvp_params(params, config, X, J_i[c]).reshape(-1)
    return row


def nint_scores(
    params: MlpParams,
    config: NetworkConfig,
    X: np.ndarray,
    residuals: np.ndarray,
    cache: ForwardCache | None = None,
) -> np.ndarray:
    """Factorized per-example scores s_i = || K(x_i, :) @ g ||_2.

    residuals is the stacked per-example loss gradient g (N x n). The
    kernel-vector product collapses to v = sum_j J_j^T g_j followed by
    one JVP, so the cost is linear in N. A forward cache for X may be
    passed to reuse the trainer's evaluation pass.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if cache is None:
        _, cache = forward(params, config, X)
    v = backward_params(params, config, cache, residuals)
    u = jvp_params(params, config, X, v)
    return np.linalg.norm(u, axis=1)


def identity_scores(residuals: np.ndarray) -> np.ndarray:
    """Scores under K = I: the per-example residual norms."""
    residuals = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
    return np.linalg.norm(residuals, axis=1)


def ntk_patch(
    params: MlpParams, config: NetworkConfig, X: np.ndarray, indices: np.ndarray
) -> NtkMatrix:
    """Exact kernel restricted to a subset of examples."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    indices = np.asarray(indices, dtype=np.intp)
    if indices.ndim != 1 or indices.size == 0:
        raise ValueError("indices must be a non-empty 1-D array")
    if indices.min() < 0 or indices.max() >= X.shape[0]:
        raise IndexError("patch indices out of range")
    return ntk_exact(params, config, X[indices])


# ---------------------------------------------------------------------------
# Kernel dumps
# ---------------------------------------------------------------------------


def dump_kernel_csv(path: str | Path, kernel: NtkMatrix) -> None:
    """Write the dense kernel as plain CSV, 17 significant digits."""
    np.savetxt(path, kernel.matrix, fmt="%.17g", delimiter=",", newline="\n")


def dump_kernel_binary(path: str | Path, kernel: NtkMatrix) -> None:
    """Write an 'N n' ASCII header line, then row-major float64 payload."""
    with open(path, "wb") as f:
        f.write(f"{kernel.num_examples} {kernel.out_dim}\n".encode("ascii"))
        f.write(np.ascontiguousarray(kernel.matrix, dtype="<f8").tobytes())


def load_kernel_binary(path: str | Path) -> NtkMatrix:
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").split()
        if len(header) != 2:
            raise ValueError("malformed kernel header")
        N, n = int(header[0]), int(header[1])
        matrix = np.frombuffer(f.read(), dtype="<f8").reshape(N * n, N * n).copy()
    return NtkMatrix(matrix=matrix, num_examples=N, out_dim=n)
