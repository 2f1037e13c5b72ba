"""Recover hidden sign bits of blockwise DCT coefficients.

An image is coded as N x N block DCT coefficients (optionally level
shifted, quantized, category coded and DC-differentially coded).  The
signs of the first U zigzag coefficients of every block are hidden, and
the recovery methods pick signs that make the decoded image as smooth as
possible (minimum total variation), either through an LP relaxation or a
two-level regional MILP.
"""

from .codecmodel import (
    CodingConfig,
    DiffChain,
    SignMask,
    Unknown,
    encode_image,
    mask_signs,
    read_coeff_file,
    read_truth_file,
    write_coeff_file,
    write_truth_file,
)
from .imagecore import PixelImage, read_pgm, write_pgm
from .lpmodel import LinearModel, ModelScope, build_model
from .metrics import psnr, ssim
from .recovery import METHODS, RecoveryConfig, RecoveryResult, recover
from .solver import SolveResult, solve_lp, solve_milp
from .transform import CoeffImage, DctBasis, QuantTable, forward_dct, inverse_dct

__version__ = "0.1.0"

__all__ = [
    "CodingConfig",
    "CoeffImage",
    "DctBasis",
    "DiffChain",
    "LinearModel",
    "METHODS",
    "ModelScope",
    "PixelImage",
    "QuantTable",
    "RecoveryConfig",
    "RecoveryResult",
    "SignMask",
    "SolveResult",
    "Unknown",
    "build_model",
    "encode_image",
    "forward_dct",
    "inverse_dct",
    "mask_signs",
    "psnr",
    "read_coeff_file",
    "read_pgm",
    "read_truth_file",
    "recover",
    "solve_lp",
    "solve_milp",
    "ssim",
    "write_coeff_file",
    "write_pgm",
    "write_truth_file",
]
