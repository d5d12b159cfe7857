"""fairlift: 2D-to-3D pose lifting with implicit-fairing graph convolutions."""

__version__ = "0.1.0"

from .data import CameraModel, Dataset, NormStats, denormalize, load_poses, normalize, save_poses, synth_generate
from .fairing import FairingConfig, fair_direct, fair_jacobi, fair_spectral
from .graph import GraphOperators, SkeletonGraph, build_operators, default_human36m_skeleton, load_skeleton
from .linalg import kabsch_align, matmul, solve_spd, sym_eigen
from .metrics import EvalReport, evaluate_poses, mpjpe, pa_mpjpe, pck_auc
from .model import (
    NetworkConfig,
    NetworkParams,
    load_checkpoint,
    network_backward,
    network_forward,
    params_count,
    params_init,
    save_checkpoint,
    scale_factor,
)
from .train import TrainConfig, TrainResult, adam_step, mse_loss, train

__all__ = [
    "CameraModel",
    "Dataset",
    "EvalReport",
    "FairingConfig",
    "GraphOperators",
    "NetworkConfig",
    "NetworkParams",
    "NormStats",
    "SkeletonGraph",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "build_operators",
    "default_human36m_skeleton",
    "denormalize",
    "evaluate_poses",
    "fair_direct",
    "fair_jacobi",
    "fair_spectral",
    "kabsch_align",
    "load_checkpoint",
    "load_poses",
    "load_skeleton",
    "matmul",
    "mpjpe",
    "mse_loss",
    "network_backward",
    "network_forward",
    "normalize",
    "pa_mpjpe",
    "params_count",
    "params_init",
    "pck_auc",
    "save_checkpoint",
    "save_poses",
    "scale_factor",
    "solve_spd",
    "sym_eigen",
    "synth_generate",
    "train",
]
