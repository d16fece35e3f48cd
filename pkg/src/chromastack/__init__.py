"""Multispectral focal stack reconstruction from a chromatic focal-stack camera."""

from .core import (
    LLTMaps,
    MultispectralFocalStack,
    ReconConfig,
    Slice,
    SpectralVaryingStack,
    StackError,
    ValidationResult,
    validate_stack,
)
from .llt import FitReport, fit_llt, llt_gradients, llt_objective, reconstruct_focal_stack, transfer_channel
from .metrics import EvalTable, evaluate_stack, psnr, ssim

__version__ = "0.1.0"
