"""NTK-guided coordinate sampling for implicit neural representation training."""

from .metrics import MetricRecord, mse, psnr, si_snr, ssim
from .network import (
    MlpParams,
    NetworkConfig,
    forward,
    init,
    load_checkpoint,
    output_jacobian,
    param_grad,
    save_checkpoint,
)
from .ntk import NtkMatrix, ScoreVector, identity_scores, nint_scores, ntk_exact, ntk_row
from .sampler import (
    SamplerConfig,
    SelectionState,
    batch_size_at,
    nint_ratios,
    select_batch,
    select_error_topk,
    select_full,
    select_nint,
    select_uniform,
)
from .signal import CoordinateGrid, SignalDataset, load_audio, load_image, make_grid
from .trainer import TrainConfig, TrainLog, TrainingDiverged, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "MetricRecord",
    "MlpParams",
    "NetworkConfig",
    "NtkMatrix",
    "SamplerConfig",
    "ScoreVector",
    "SelectionState",
    "SignalDataset",
    "CoordinateGrid",
    "TrainConfig",
    "TrainLog",
    "TrainingDiverged",
    "batch_size_at",
    "evaluate",
    "forward",
    "identity_scores",
    "init",
    "load_audio",
    "load_checkpoint",
    "load_image",
    "make_grid",
    "mse",
    "nint_ratios",
    "nint_scores",
    "ntk_exact",
    "ntk_row",
    "output_jacobian",
    "param_grad",
    "psnr",
    "save_checkpoint",
    "select_batch",
    "select_error_topk",
    "select_full",
    "select_nint",
    "select_uniform",
    "si_snr",
    "ssim",
    "train",
]
