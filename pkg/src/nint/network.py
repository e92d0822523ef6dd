"""Coordinate MLP: forward evaluation, reverse-mode gradients, Jacobians.

The network is a stack of L affine layers; layers 1..L-1 apply an
activation (sine with frequency scale omega0, or relu optionally fed by
a fixed Fourier-feature embedding) and the final layer is linear.
Parameters live in one flat float64 vector with a recorded per-layer
layout, which keeps checkpointing, optimizers and NTK algebra simple.

Differentiation is written out by hand against the cached forward pass:
a batched vector-Jacobian product (seeds in output space), per-example
Jacobians via output-seeded reverse passes, and a Jacobian-vector
product in parameter space. Everything runs in float64 and is
deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = "NINT-CKPT v1"


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture and initialization of the coordinate MLP.

    depth counts affine layers (a "5x256" network has depth 5 and width
    256: one input layer, three hidden blocks, one linear output).
    fourier_count > 0 enables the fixed random-feature front end and is
    only valid with relu activation.
    """

    depth: int
    width: int
    in_dim: int
    out_dim: int
    activation: str = "sine"  # "sine" | "relu"
    omega0: float = 30.0
    fourier_count: int = 0
    fourier_scale: float = 1.0
    init_seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("in_dim and out_dim must be >= 1")
        if self.activation not in ("sine", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "sine" and self.omega0 <= 0:
            raise ValueError("omega0 must be positive for sine activation")
        if self.fourier_count > 0 and self.activation != "relu":
            raise ValueError("fourier features require relu activation")
        if self.fourier_count > 0 and self.fourier_scale <= 0:
            raise ValueError("fourier_scale must be positive")


def layer_dims(config: NetworkConfig) -> list[tuple[int, int]]:
    """(fan_in, fan_out) per affine layer, accounting for Fourier input."""
    in0 = 2 * config.fourier_count if config.fourier_count > 0 else config.in_dim
    if config.depth == 1:
        return [(in0, config.out_dim)]
    dims = [(in0, config.width)]
    dims += [(config.width, config.width)] * (config.depth - 2)
    dims.append((config.width, config.out_dim))
    return dims


def param_count(config: NetworkConfig) -> int:
    return sum(fi * fo + fo for fi, fo in layer_dims(config))


@dataclass(frozen=True)
class MlpParams:
    """Flat parameter vector plus its per-layer layout.

    layout holds (fan_in, fan_out, w_offset, b_offset) per layer; weight
    blocks are stored row-major as (fan_out, fan_in). fourier_freqs is
    the fixed (non-trainable) frequency matrix when the front end is on.
    """

    theta: np.ndarray
    layout: tuple[tuple[int, int, int, int], ...]
    fourier_freqs: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.theta.size

    def weight(self, layer: int) -> np.ndarray:
        fi, fo, w_off, _ = self.layout[layer]
        return self.theta[w_off : w_off + fi * fo].reshape(fo, fi)

    def bias(self, layer: int) -> np.ndarray:
        fi, fo, _, b_off = self.layout[layer]
        return self.theta[b_off : b_off + fo]

    def with_theta(self, theta: np.ndarray) -> "MlpParams":
        if theta.shape != self.theta.shape:
            raise ValueError("replacement theta has wrong length")
        return replace(self, theta=np.asarray(theta, dtype=np.float64))


def _build_layout(config: NetworkConfig) -> tuple[tuple[int, int, int, int], ...]:
    layout = []
    offset = 0
    for fi, fo in layer_dims(config):
        layout.append((fi, fo, offset, offset + fi * fo))
        offset += fi * fo + fo
    return tuple(layout)


def init(config: NetworkConfig) -> MlpParams:
    """Initialize parameters from config.init_seed.

    sine: first layer U(-1/in_dim, 1/in_dim), deeper layers
    U(+-sqrt(6/fan_in)/omega0); the forward pass multiplies every sine
    pre-activation by omega0, which is the convention these bounds are
    balanced against. relu: Kaiming-uniform U(+-sqrt(6/fan_in)). Biases
    start at zero. The Fourier frequency matrix, when enabled, is drawn
    first (Normal(0, fourier_scale^2)) so it is reproducible on reload.
    """
    rng = np.random.default_rng(config.init_seed)
    freqs = None
    if config.fourier_count > 0:
        freqs = rng.normal(0.0, config.fourier_scale, size=(config.fourier_count, config.in_dim))
        freqs.flags.writeable = False

    layout = _build_layout(config)
    theta = np.zeros(sum(fi * fo + fo for fi, fo, _, _ in layout))
    for layer, (fi, fo, w_off, _) in enumerate(layout):
        if config.activation == "sine":
            bound = 1.0 / fi if layer == 0 else np.sqrt(6.0 / fi) / config.omega0
        else:
            bound = np.sqrt(6.0 / fi)
        theta[w_off : w_off + fi * fo] = rng.uniform(-bound, bound, size=fi * fo)
    theta.flags.writeable = False
    return MlpParams(theta=theta, layout=layout, fourier_freqs=freqs)


def fourier_embed(params: MlpParams, X: np.ndarray) -> np.ndarray:
    proj = 2.0 * np.pi * X @ params.fourier_freqs.T
    return np.concatenate([np.sin(proj), np.cos(proj)], axis=1)


@dataclass
class ForwardCache:
    """Per-layer activations of one batch, sufficient for reverse passes.

    h0 is the network input (after the Fourier embedding, if any); zs[l]
    the pre-activation of layer l; hs[l] the post-activation of layers
    0..L-2. outputs == zs[-1] since the last layer is linear.
    """

    h0: np.ndarray
    zs: list[np.ndarray]
    hs: list[np.ndarray]
    outputs: np.ndarray

    @property
    def batch(self) -> int:
        return self.h0.shape[0]

    def rows(self, idx: np.ndarray) -> "ForwardCache":
        """Cache restricted to a subset of batch rows."""
        return ForwardCache(
            h0=self.h0[idx],
            zs=[z[idx] for z in self.zs],
            hs=[h[idx] for h in self.hs],
            outputs=self.outputs[idx],
        )


def _act(config: NetworkConfig, z: np.ndarray) -> np.ndarray:
    if config.activation == "sine":
        return np.sin(config.omega0 * z)
    return np.maximum(z, 0.0)


def _act_deriv(config: NetworkConfig, z: np.ndarray) -> np.ndarray:
    if config.activation == "sine":
        return config.omega0 * np.cos(config.omega0 * z)
    return (z > 0.0).astype(np.float64)


def forward(
    params: MlpParams, config: NetworkConfig, X: np.ndarray
) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the MLP on a batch of coordinates.

    Returns (outputs batch x out_dim, cache for reverse passes). The
    final layer is linear.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != config.in_dim:
        raise ValueError(f"expected {config.in_dim} input columns, got {X.shape[1]}")
    h = fourier_embed(params, X) if config.fourier_count > 0 else X
    h0 = h
    zs: list[np.ndarray] = []
    hs: list[np.ndarray] = []
    L = len(params.layout)
    for layer in range(L):
        z = h @ params.weight(layer).T + params.bias(layer)
        zs.append(z)
        if layer < L - 1:
            h = _act(config, z)
            hs.append(h)
    return zs[-1], ForwardCache(h0=h0, zs=zs, hs=hs, outputs=zs[-1])


def loss_grad_output(outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-example gradient of 1/2 ||f - y||^2 with respect to f."""
    outputs = np.asarray(outputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if outputs.shape != targets.shape:
        raise ValueError(f"shape mismatch: {outputs.shape} vs {targets.shape}")
    return outputs - targets


def backward_params(
    params: MlpParams, config: NetworkConfig, cache: ForwardCache, seeds: np.ndarray
) -> np.ndarray:
    """Accumulated vector-Jacobian product: sum_i J(x_i)^T seed_i.

    seeds is batch x out_dim; the result is a flat length-P vector. This
    single reverse pass backs both the batch loss gradient (seeds = g)
    and the factorized scoring vector v = J^T g.
    """
    seeds = np.asarray(seeds, dtype=np.float64)
    if seeds.shape != cache.outputs.shape:
        raise ValueError(f"seed shape {seeds.shape} does not match batch outputs")
    grad = np.zeros_like(params.theta)
    L = len(params.layout)
    dz = seeds
    for layer in range(L - 1, -1, -1):
        fi, fo, w_off, b_off = params.layout[layer]
        h_prev = cache.h0 if layer == 0 else cache.hs[layer - 1]
        grad[w_off : w_off + fi * fo] = (dz.T @ h_prev).ravel()
        grad[b_off : b_off + fo] = dz.sum(axis=0)
        if layer > 0:
            dh = dz @ params.weight(layer)
            dz = dh * _act_deriv(config, cache.zs[layer - 1])
    return grad


def param_grad(
    params: MlpParams, config: NetworkConfig, X: np.ndarray, Y: np.ndarray
) -> np.ndarray:
    """Batch-averaged gradient of the half-squared error loss."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    outputs, cache = forward(params, config, X)
    g = loss_grad_output(outputs, Y)
    return backward_params(params, config, cache, g) / X.shape[0]


def output_jacobian(params: MlpParams, config: NetworkConfig, x: np.ndarray) -> np.ndarray:
    """Jacobian of the outputs at one coordinate: out_dim x P.

    Row c is the gradient of output channel c with respect to theta,
    obtained from out_dim reverse passes seeded with unit vectors (all
    sharing one cached forward evaluation).
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    _, cache = forward(params, config, x)
    n = config.out_dim
    L = len(params.layout)
    jac = np.zeros((n, params.size))
    dz = np.eye(n)  # row c: sensitivity of output channel c
    for layer in range(L - 1, -1, -1):
        fi, fo, w_off, b_off = params.layout[layer]
        h_prev = (cache.h0 if layer == 0 else cache.hs[layer - 1])[0]
        jac[:, w_off : w_off + fi * fo] = np.einsum("co,i->coi", dz, h_prev).reshape(n, fi * fo)
        jac[:, b_off : b_off + fo] = dz
        if layer > 0:
            dz = (dz @ params.weight(layer)) * _act_deriv(config, cache.zs[layer - 1][0])
    return jac


def jvp_params(
    params: MlpParams, config: NetworkConfig, X: np.ndarray, v: np.ndarray
) -> np.ndarray:
    """Directional derivative of outputs along a parameter direction.

    Returns batch x out_dim where row i equals J(x_i) @ v. Coordinates
    are fixed, so only the parameter tangent propagates.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (params.size,):
        raise ValueError(f"direction must have length {params.size}")
    h = fourier_embed(params, X) if config.fourier_count > 0 else X
    t = np.zeros_like(h)
    L = len(params.layout)
    for layer in range(L):
        fi, fo, w_off, b_off = params.layout[layer]
        dW = v[w_off : w_off + fi * fo].reshape(fo, fi)
        db = v[b_off : b_off + fo]
        z = h @ params.weight(layer).T + params.bias(layer)
        dz = h @ dW.T + t @ params.weight(layer).T + db
        if layer < L - 1:
            t = _act_deriv(config, z) * dz
            h = _act(config, z)
        else:
            return dz
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# Checkpoints: text header (magic + config) followed by raw float64 theta
# ---------------------------------------------------------------------------


def save_checkpoint(path: str | Path, params: MlpParams, config: NetworkConfig) -> None:
    header = [
        CHECKPOINT_MAGIC,
        f"depth={config.depth}",
        f"width={config.width}",
        f"in_dim={config.in_dim}",
        f"out_dim={config.out_dim}",
        f"activation={config.activation}",
        f"omega0={config.omega0!r}",
        f"fourier_count={config.fourier_count}",
        f"fourier_scale={config.fourier_scale!r}",
        f"init_seed={config.init_seed}",
        f"theta_len={params.size}",
        "---",
    ]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(params.theta, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[MlpParams, NetworkConfig]:
    with open(path, "rb") as f:
        magic = f.readline().decode("ascii").rstrip("\n")
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file (magic {magic!r})")
        fields = {}
        while True:
            line = f.readline().decode("ascii").rstrip("\n")
            if line == "---":
                break
            if line == "":
                raise ValueError("truncated checkpoint header")
            key, _, value = line.partition("=")
            fields[key] = value
        payload = f.read()
    config = NetworkConfig(
        depth=int(fields["depth"]),
        width=int(fields["width"]),
        in_dim=int(fields["in_dim"]),
        out_dim=int(fields["out_dim"]),
        activation=fields["activation"],
        omega0=float(fields["omega0"]),
        fourier_count=int(fields["fourier_count"]),
        fourier_scale=float(fields["fourier_scale"]),
        init_seed=int(fields["init_seed"]),
    )
    theta_len = int(fields["theta_len"])
    theta = np.frombuffer(payload, dtype="<f8")
    if theta.size != theta_len or theta_len != param_count(config):
        raise ValueError("checkpoint payload length does not match its config")
    # Rebuild the layout and the Fourier matrix from the stored config,
    # then drop in the trained theta.
    return init(config).with_theta(theta.copy()), config
