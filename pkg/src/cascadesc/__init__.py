"""Cascaded residual dictionary learning and sparse coding for grayscale images."""

from .apps import (
    RatePoint,
    baseline_ksvd,
    baseline_ksvd_masked,
    code_image,
    denoise,
    inpaint,
    tolerance_schedule,
)
from .cascade import (
    CascadeConfig,
    CascadeModel,
    LayerCodes,
    decode,
    encode,
    encode_with_estimate,
    first_pass,
    fit_model,
    second_pass_train,
)
from .image import add_gaussian_noise, build_pyramid, downsample, psnr, upsample
from .ksvd import TrainConfig, dct_dictionary, rank_one_svd, train
from .omp import (
    BACKEND,
    Both,
    Budget,
    SparseCode,
    StopRule,
    Tolerance,
    encode_batch,
    omp_encode,
    omp_encode_masked,
    set_num_threads,
)
from .patches import PatchGrid, aggregate, extract, make_grid

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Both",
    "Budget",
    "CascadeConfig",
    "CascadeModel",
    "LayerCodes",
    "PatchGrid",
    "RatePoint",
    "SparseCode",
    "StopRule",
    "Tolerance",
    "TrainConfig",
    "add_gaussian_noise",
    "aggregate",
    "baseline_ksvd",
    "baseline_ksvd_masked",
    "build_pyramid",
    "code_image",
    "dct_dictionary",
    "decode",
    "denoise",
    "downsample",
    "encode",
    "encode_batch",
    "encode_with_estimate",
    "extract",
    "first_pass",
    "fit_model",
    "inpaint",
    "make_grid",
    "omp_encode",
    "omp_encode_masked",
    "psnr",
    "rank_one_svd",
    "second_pass_train",
    "set_num_threads",
    "tolerance_schedule",
    "train",
    "upsample",
]
