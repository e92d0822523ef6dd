"""Training loop: forward everything, score, select, step.

Every iteration runs one forward pass over all N coordinates. That pass
is reused three ways: the residual g = f(x) - y drives the error pool
and the batch gradient seed, the NTK score refresh reads the cached
activations, and on evaluation iterations the same predictions feed the
metric record. The selected batch never triggers a second forward; its
gradient comes from slicing the cached activations.

Timing uses a monotonic clock and is logged but never fed back into
training decisions, so two runs of the same config produce identical
trajectories regardless of machine load.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .network import (
    MlpParams,
    NetworkConfig,
    backward_params,
    forward,
    init,
    loss_grad_output,
)
from .ntk import nint_scores
from .sampler import SamplerConfig, SelectionState, batch_size_at, nint_ratios, select_batch
from .signal import SignalDataset, image_array, save_snapshot

OPTIMIZERS = ("sgd", "adam")


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    iterations: int = 2000
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 100
    snapshot_every: int = 0  # 0 disables snapshots
    thresholds: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("adam betas must be in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")


@dataclass
class OptimizerState:
    """Adam moments and step counter; all fields idle under sgd."""

    m: np.ndarray | None = None
    v: np.ndarray | None = None
    step: int = 0


def optimizer_step(
    state: OptimizerState,
    config: TrainConfig,
    theta: np.ndarray,
    grad: np.ndarray,
) -> np.ndarray:
    """One parameter update on a batch-averaged gradient."""
    if not np.isfinite(grad).all():
        raise ValueError("non-finite gradient")
    if config.optimizer == "sgd":
        return theta - config.learning_rate * grad
    if state.m is None:
        state.m = np.zeros_like(theta)
        state.v = np.zeros_like(theta)
    state.step += 1
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
    m_hat = state.m / (1.0 - config.beta1**state.step)
    v_hat = state.v / (1.0 - config.beta2**state.step)
    return theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)


@dataclass(frozen=True)
class EvalRecord:
    iteration: int
    wall_ms: float
    mse: float
    psnr: float
    ssim: float | None
    si_snr: float | None
    batch_size: int
    r_ntk: float
    r_err: float
    n_score_recomputes: int


@dataclass(frozen=True)
class ThresholdRecord:
    metric: str
    target: float
    iteration: int
    wall_ms: float


@dataclass
class TrainLog:
    records: list[EvalRecord] = field(default_factory=list)
    crossings: list[ThresholdRecord] = field(default_factory=list)


def _metric_record(dataset: SignalDataset, outputs: np.ndarray) -> metrics_mod.MetricRecord:
    mse = metrics_mod.mse(outputs, dataset.attrs)
    psnr = metrics_mod.psnr(outputs, dataset.attrs)
    ssim = None
    si_snr = None
    if dataset.modality == "image":
        pred = image_array(dataset, np.clip(outputs, 0.0, 1.0))
        target = image_array(dataset)
        if min(pred.shape[:2]) >= metrics_mod.SSIM_WINDOW:
            if pred.ndim == 2:
                ssim = metrics_mod.ssim(pred, target)
            else:
                ssim = metrics_mod.ssim_multichannel(pred, target)
    elif dataset.modality == "audio":
        si_snr = metrics_mod.si_snr(outputs.ravel(), dataset.attrs.ravel())
    return metrics_mod.MetricRecord(mse=mse, psnr=psnr, ssim=ssim, si_snr=si_snr)


def evaluate(
    params: MlpParams, net_config: NetworkConfig, dataset: SignalDataset
) -> metrics_mod.MetricRecord:
    """Full-dataset metric record for the current parameters."""
    outputs, _ = forward(params, net_config, dataset.coords)
    return _metric_record(dataset, outputs)


def threshold_metric_name(dataset: SignalDataset) -> str:
    return "si_snr" if dataset.modality == "audio" else "psnr"


def _threshold_value(dataset: SignalDataset, outputs: np.ndarray, mse: float) -> float:
    if dataset.modality == "audio":
        return metrics_mod.si_snr(outputs.ravel(), dataset.attrs.ravel())
    return metrics_mod.psnr_from_mse(mse)


def train(
    dataset: SignalDataset,
    net_config: NetworkConfig,
    sampler_config: SamplerConfig,
    train_config: TrainConfig,
    out_dir: str | Path | None = None,
) -> tuple[MlpParams, TrainLog]:
    """Run the selection-driven fit and return final parameters and log.

    Per iteration t: forward all N coordinates with theta_t, form the
    residual g, pick a batch by the configured strategy, average the
    selected per-example gradients and apply the optimizer. Metrics are
    logged against theta_t on the eval_every grid and once more for the
    final parameters; threshold crossings are checked every iteration.
    Snapshots (image runs only, when out_dir is given) reuse the same
    predictions.

    Raises TrainingDiverged when the loss stops being finite.
    """
    if dataset.coord_dim != net_config.in_dim or dataset.attr_dim != net_config.out_dim:
        raise ValueError(
            f"dataset is {dataset.coord_dim}->{dataset.attr_dim} but network is "
            f"{net_config.in_dim}->{net_config.out_dim}"
        )
    N = dataset.size
    T = train_config.iterations
    params = init(net_config)
    opt_state = OptimizerState()
    sel_state = SelectionState()
    log = TrainLog()
    metric_name = threshold_metric_name(dataset)
    pending = sorted(train_config.thresholds)
    recomputes = 0
    out_path = Path(out_dir) if out_dir is not None else None
    snapshots = (
        out_path is not None
        and train_config.snapshot_every > 0
        and dataset.modality == "image"
    )
    t0 = time.perf_counter()

    def wall_ms() -> float:
        return (time.perf_counter() - t0) * 1000.0

    def check_thresholds(t: int, outputs: np.ndarray, mse: float) -> None:
        nonlocal pending
        if not pending:
            return
        value = _threshold_value(dataset, outputs, mse)
        crossed = [th for th in pending if value >= th]
        if crossed:
            now = wall_ms()
            for th in crossed:
                log.crossings.append(ThresholdRecord(metric_name, th, t, now))
            pending = [th for th in pending if value < th]

    for t in range(T):
        outputs, cache = forward(params, net_config, dataset.coords)
        g = loss_grad_output(outputs, dataset.attrs)
        mse = float(np.mean(g * g))
        if not np.isfinite(mse):
            raise TrainingDiverged(
                f"non-finite loss at iteration {t} "
                f"(theta norm {np.linalg.norm(params.theta):.6g})"
            )
        check_thresholds(t, outputs, mse)

        B = batch_size_at(sampler_config, t, N, T)
        sel_state.rng = np.random.default_rng([sampler_config.seed, t])

        def score_fn() -> np.ndarray:
            nonlocal recomputes
            recomputes += 1
            return nint_scores(params, net_config, dataset.coords, g, cache=cache)

        idx = select_batch(sel_state, sampler_config, t, g, score_fn, N, B)

        # The loop-head forward at iteration t evaluates theta_t, i.e. the
        # parameters after t updates, so the record grid is the multiples
        # of eval_every in (0, T); theta_T gets its record after the loop.
        if t > 0 and t % train_config.eval_every == 0:
            rec = _metric_record(dataset, outputs)
            r_ntk, r_err = 0.0, 0.0
            if sampler_config.strategy == "nint":
                _, r_ntk, r_err = nint_ratios(
                    t, sampler_config.xi, sampler_config.alpha, sampler_config.lambda_decay
                )
            log.records.append(
                EvalRecord(
                    iteration=t,
                    wall_ms=wall_ms(),
                    mse=rec.mse,
                    psnr=rec.psnr,
                    ssim=rec.ssim,
                    si_snr=rec.si_snr,
                    batch_size=B,
                    r_ntk=r_ntk,
                    r_err=r_err,
                    n_score_recomputes=recomputes,
                )
            )
        if snapshots and t > 0 and t % train_config.snapshot_every == 0:
            _write_snapshot(dataset, outputs, out_path, t)

        grad = backward_params(params, net_config, cache.rows(idx), g[idx]) / idx.size
        params = params.with_theta(
            optimizer_step(opt_state, train_config, params.theta, grad)
        )

    # Final record for theta_T, which the loop above never evaluates.
    outputs, _ = forward(params, net_config, dataset.coords)
    g = loss_grad_output(outputs, dataset.attrs)
    mse = float(np.mean(g * g))
    if not np.isfinite(mse):
        raise TrainingDiverged(
            f"non-finite loss at iteration {T} "
            f"(theta norm {np.linalg.norm(params.theta):.6g})"
        )
    check_thresholds(T, outputs, mse)
    rec = _metric_record(dataset, outputs)
    r_ntk, r_err = 0.0, 0.0
    if sampler_config.strategy == "nint":
        _, r_ntk, r_err = nint_ratios(
            T, sampler_config.xi, sampler_config.alpha, sampler_config.lambda_decay
        )
    log.records.append(
        EvalRecord(
            iteration=T,
            wall_ms=wall_ms(),
            mse=rec.mse,
            psnr=rec.psnr,
            ssim=rec.ssim,
            si_snr=rec.si_snr,
            batch_size=batch_size_at(sampler_config, T - 1, N, T),
            r_ntk=r_ntk,
            r_err=r_err,
            n_score_recomputes=recomputes,
        )
    )
    if snapshots:
        _write_snapshot(dataset, outputs, out_path, T)
    return params, log


def _write_snapshot(
    dataset: SignalDataset, outputs: np.ndarray, out_dir: Path, t: int
) -> None:
    ext = "pgm" if dataset.shape_meta.get("channels", 1) == 1 else "ppm"
    save_snapshot(dataset, outputs, out_dir / f"snapshot_{t:06d}.{ext}")
