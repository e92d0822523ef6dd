"""Per-iteration coordinate selection strategies and batch-size schedules.

Four strategies: full batch, uniform random, error-top-k (largest
residual norms), and the hybrid NINT selector. The hybrid splits the
budget B three ways: a fixed random ratio xi, an NTK-guided ratio
(1 - xi) * exp(-lambda * t / alpha) that decays over training, and the
remainder chosen by residual norm. NTK scores are expensive, so they
are cached and refreshed only every alpha iterations.

Every selector returns exactly B distinct in-range indices, sorted
ascending. Sorted output makes selection order-canonical: when B = N
the batch is identical, element for element, to the full-batch index
set, so gradient reductions accumulate in the same order and the
trajectories agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ntk import ScoreVector

STRATEGIES = ("full", "uniform", "error_topk", "nint")
SCHEDULERS = ("constant", "step", "linear")


@dataclass(frozen=True)
class SamplerConfig:
    strategy: str = "nint"
    batch_fraction: float = 0.2
    xi: float = 0.7
    alpha: int = 10
    lambda_decay: float = 1.0
    scheduler: str = "constant"
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not 0.0 < self.batch_fraction <= 1.0:
            raise ValueError("batch_fraction must be in (0, 1]")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError("xi must be in [0, 1]")
        if self.alpha < 1:
            raise ValueError("alpha must be a positive integer")
        if self.lambda_decay < 0.0:
            raise ValueError("lambda_decay must be nonnegative")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"unknown scheduler {self.scheduler!r}")


@dataclass
class SelectionState:
    """Mutable per-run selection state, confined to the training loop.

    rng is reseeded by the trainer each iteration from (seed, t) so a
    single iteration's draws are reproducible in isolation.
    """

    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    cached_ntk_scores: ScoreVector | None = None
    last_ntk_iteration: int = -1


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def nint_ratios(t: int, xi: float, alpha: int, lambda_decay: float) -> tuple[float, float, float]:
    """Budget split (r_rand, r_ntk, r_err) at iteration t.

    r_rand = xi, r_ntk = (1 - xi) * exp(-lambda * t / alpha), and r_err
    takes whatever remains of the non-random share, so the three always
    sum to one.
    """
    r_rand = xi
    r_ntk = (1.0 - xi) * np.exp(-lambda_decay * t / alpha)
    r_err = (1.0 - xi) - r_ntk
    return r_rand, r_ntk, r_err


def batch_size_at(config: SamplerConfig, t: int, N: int, total_iterations: int) -> int:
    """Batch size at iteration t, always clamped to [1, N].

    constant: round(batch_fraction * N) throughout. step: the constant
    size, doubled from t = T/2 on. linear: interpolated from the
    constant size at t = 0 up to N at t = T.
    """
    if t < 0:
        raise ValueError("iteration must be nonnegative")
    base = min(max(_round_half_up(config.batch_fraction * N), 1), N)
    if config.scheduler == "constant":
        return base
    if config.scheduler == "step":
        size = 2 * base if 2 * t >= total_iterations else base
        return min(size, N)
    frac = min(t, total_iterations) / total_iterations
    return min(max(_round_half_up(base + (N - base) * frac), 1), N)


def select_full(N: int) -> np.ndarray:
    return np.arange(N, dtype=np.intp)


def select_uniform(state: SelectionState, N: int, B: int) -> np.ndarray:
    if not 1 <= B <= N:
        raise ValueError(f"batch size {B} out of range for {N} examples")
    return np.sort(state.rng.choice(N, size=B, replace=False))


def _topk_desc(scores: np.ndarray, k: int) -> np.ndarray:
    # Stable sort on the negated scores: ties resolve to the lower index.
    return np.argsort(-scores, kind="stable")[:k]


def _as_residual_matrix(g: np.ndarray) -> np.ndarray:
    # 1-D input means N scalar residuals, one per example.
    g = np.asarray(g, dtype=np.float64)
    return g.reshape(-1, 1) if g.ndim == 1 else g


def select_error_topk(g: np.ndarray, B: int) -> np.ndarray:
    """Indices of the B largest per-example residual norms.

    The l2 norm of a fixed-size subset is maximized by taking the largest
    magnitudes, so plain top-k is also the norm-maximizing batch. Ties
    break toward the lower index.
    """
    g = _as_residual_matrix(g)
    N = g.shape[0]
    if not 1 <= B <= N:
        raise ValueError(f"batch size {B} out of range for {N} examples")
    if not np.isfinite(g).all():
        raise ValueError("non-finite residuals")
    return np.sort(_topk_desc(np.linalg.norm(g, axis=1), B))


def select_nint(
    state: SelectionState,
    config: SamplerConfig,
    t: int,
    g: np.ndarray,
    score_fn: Callable[[], np.ndarray],
    N: int,
    B: int,
) -> np.ndarray:
    """Hybrid selection: NTK-guided, then error-guided, then random.

    Pool counts are n_rand = round(r_rand * B), n_ntk = round(r_ntk * B)
    and n_err = B - n_rand - n_ntk clamped at zero. Pools draw in the
    order NTK -> error -> random, each restricted to indices not already
    chosen and to the remaining budget, with a final uniform backfill,
    so the result is always exactly B distinct indices.

    score_fn computes fresh factorized scores over all N examples; it is
    invoked when the cache is absent or alpha iterations old, once per
    alpha-interval regardless of the current NTK share.
    """
    g = _as_residual_matrix(g)
    if not 1 <= B <= N:
        raise ValueError(f"batch size {B} out of range for {N} examples")
    if state.cached_ntk_scores is None or t - state.last_ntk_iteration >= config.alpha:
        scores = np.asarray(score_fn(), dtype=np.float64)
        if scores.shape != (N,):
            raise ValueError(f"score_fn must return {N} scores, got shape {scores.shape}")
        state.cached_ntk_scores = ScoreVector(scores=scores, iteration_computed=t)
        state.last_ntk_iteration = t

    r_rand, r_ntk, _ = nint_ratios(t, config.xi, config.alpha, config.lambda_decay)
    n_rand = _round_half_up(r_rand * B)
    n_ntk = _round_half_up(r_ntk * B)
    n_err = max(B - n_rand - n_ntk, 0)

    taken = np.zeros(N, dtype=bool)
    chosen: list[np.ndarray] = []
    budget = B

    def draw_top(scores: np.ndarray, k: int) -> None:
        nonlocal budget
        k = min(k, budget)
        if k <= 0:
            return
        pool = np.flatnonzero(~taken)
        picks = pool[_topk_desc(scores[pool], k)]
        taken[picks] = True
        chosen.append(picks)
        budget -= picks.size

    draw_top(state.cached_ntk_scores.scores, n_ntk)
    draw_top(np.linalg.norm(g, axis=1), n_err)

    k = min(n_rand, budget)
    if k > 0:
        picks = state.rng.choice(np.flatnonzero(~taken), size=k, replace=False)
        taken[picks] = True
        chosen.append(picks)
        budget -= k
    if budget > 0:  # uniform backfill; unreachable when counts sum to B
        picks = state.rng.choice(np.flatnonzero(~taken), size=budget, replace=False)
        chosen.append(picks)
    return np.sort(np.concatenate(chosen).astype(np.intp))


def select_batch(
    state: SelectionState,
    config: SamplerConfig,
    t: int,
    g: np.ndarray,
    score_fn: Callable[[], np.ndarray],
    N: int,
    B: int,
) -> np.ndarray:
    """Dispatch to the configured strategy."""
    if config.strategy == "full":
        return select_full(N)
    if config.strategy == "uniform":
        return select_uniform(state, N, B)
    if config.strategy == "error_topk":
        return select_error_topk(g, B)
    return select_nint(state, config, t, g, score_fn, N, B)
