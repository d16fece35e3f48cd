"""PSNR / SSIM and per-cell evaluation of focal stacks."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator, Tuple

import numpy as np

from .core import MultispectralFocalStack
from .imgops import gaussian_blur

SSIM_SIGMA = 1.5  # radius ceil(3 * 1.5) = 5 -> 11x11 window
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 1.0


def _check_pair(a, b) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(reference, test) -> float:
    """PSNR in dB with peak 1.0; ``inf`` for identical images."""
    a, b = _check_pair(reference, test)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DATA_RANGE**2 / mse)


def ssim_map(reference, test) -> np.ndarray:
    """Local SSIM with an 11x11 Gaussian window (sigma 1.5) and replicate boundary."""
    x, y = _check_pair(reference, test)
    if min(x.shape) < 11:
        raise ValueError(f"image {x.shape} smaller than the 11x11 SSIM window")
    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2
    mu_x = gaussian_blur(x, SSIM_SIGMA)
    mu_y = gaussian_blur(y, SSIM_SIGMA)
    var_x = gaussian_blur(x * x, SSIM_SIGMA) - mu_x * mu_x
    var_y = gaussian_blur(y * y, SSIM_SIGMA) - mu_y * mu_y
    cov = gaussian_blur(x * y, SSIM_SIGMA) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return num / den


def ssim(reference, test) -> float:
    return float(np.mean(ssim_map(reference, test)))


def _fmt_psnr(v: float) -> str:
    return "Inf" if math.isinf(v) else f"{v:.2f}"


def _fmt_wavelength(w: float) -> str:
    return f"{w:g}"


@dataclass(frozen=True)
class EvalTable:
    """Per-cell PSNR/SSIM of a reconstruction against ground truth."""

    depth_schedule: Tuple[float, ...]
    wavelength_schedule: Tuple[float, ...]
    psnr: np.ndarray  # (N, M), may contain inf
    ssim: np.ndarray  # (N, M)

    @property
    def off_diagonal(self) -> np.ndarray:
        n, m = self.psnr.shape
        mask = np.ones((n, m), dtype=bool)
        d = min(n, m)
        mask[np.arange(d), np.arange(d)] = False
        return mask

    def depth_means(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.psnr.mean(axis=1), self.ssim.mean(axis=1)

    def overall_means(self) -> Tuple[float, float]:
        return float(self.psnr.mean()), float(self.ssim.mean())

    def off_diagonal_means(self) -> Tuple[float, float]:
        mask = self.off_diagonal
        if not mask.any():
            return math.nan, math.nan
        return float(self.psnr[mask].mean()), float(self.ssim[mask].mean())

    def rows(self) -> Iterator[Tuple[int, str, str, str]]:
        for k in range(self.psnr.shape[0]):
            for i, w in enumerate(self.wavelength_schedule):
                yield k, _fmt_wavelength(w), _fmt_psnr(self.psnr[k, i]), f"{self.ssim[k, i]:.4f}"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["depth_index", "wavelength_nm", "psnr_db", "ssim"])
            writer.writerows(self.rows())

    def summary(self) -> str:
        p, s = self.overall_means()
        po, so = self.off_diagonal_means()
        lines = [f"cells: {self.psnr.size}  mean PSNR {_fmt_psnr(p)} dB  mean SSIM {s:.4f}"]
        if self.off_diagonal.any():
            lines.append(f"off-diagonal: mean PSNR {_fmt_psnr(po)} dB  mean SSIM {so:.4f}")
        dp, ds = self.depth_means()
        for k in range(len(dp)):
            lines.append(f"depth {k}: mean PSNR {_fmt_psnr(dp[k])} dB  mean SSIM {ds[k]:.4f}")
        return "\n".join(lines)


def evaluate_stack(gt: MultispectralFocalStack, recon: MultispectralFocalStack) -> EvalTable:
    if gt.data.shape != recon.data.shape:
        raise ValueError(f"stack shape mismatch: {gt.data.shape} vs {recon.data.shape}")
    if gt.wavelength_schedule != recon.wavelength_schedule or gt.depth_schedule != recon.depth_schedule:
        raise ValueError("stack schedules differ")
    n, m = gt.depths, gt.wavelengths
    p = np.empty((n, m))
    s = np.empty((n, m))
    for k in range(n):
        for i in range(m):
            p[k, i] = psnr(gt.cell(k, i), recon.cell(k, i))
            s[k, i] = ssim(gt.cell(k, i), recon.cell(k, i))
    return EvalTable(gt.depth_schedule, gt.wavelength_schedule, p, s)
