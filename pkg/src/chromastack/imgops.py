"""Discrete image operators: Gaussian blur, forward-difference gradient and its adjoint."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise ValueError(f"dimension mismatch: {np.shape(a)} vs {np.shape(b)}")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian truncated at radius ``ceil(3 * sigma)``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _correlate_rows(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # replicate padding along axis 1
    r = kernel.size // 2
    w = img.shape[1]
    padded = np.pad(img, ((0, 0), (r, r)), mode="edge")
    out = kernel[0] * padded[:, 0:w]
    for j in range(1, kernel.size):
        out += kernel[j] * padded[:, j : j + w]
    return out


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with replicate boundary.

    Horizontal pass first, then vertical. The kernel is symmetric, so
    correlation and convolution coincide.
    """
    kernel = gaussian_kernel(sigma)
    img = np.asarray(img, dtype=np.float64)
    tmp = _correlate_rows(img, kernel)
    return _correlate_rows(tmp.T, kernel).T.copy()


@dataclass(frozen=True)
class GradientPair:
    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        _same_shape(self.gx, self.gy)


def gradient(img: np.ndarray) -> GradientPair:
    """Forward differences; the last column of ``gx`` and last row of ``gy`` are zero."""
    img = np.asarray(img, dtype=np.float64)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    return GradientPair(gx, gy)


def gradient_adjoint(g: GradientPair) -> np.ndarray:
    """Exact adjoint of :func:`gradient`, so ``<grad u, v> == <u, grad^T v>``.

    Entries of ``gx``'s last column and ``gy``'s last row are ignored, since
    the forward operator never writes there.
    """
    gx = np.asarray(g.gx, dtype=np.float64)
    gy = np.asarray(g.gy, dtype=np.float64)
    _same_shape(gx, gy)
    out = np.zeros_like(gx)
    out[:, 1:] += gx[:, :-1]
    out[:, :-1] -= gx[:, :-1]
    out[1:, :] += gy[:-1, :]
    out[:-1, :] -= gy[:-1, :]
    return out


def laplacian_term(img: np.ndarray) -> np.ndarray:
    """``grad^T grad img``, built from the two operators above."""
    return gradient_adjoint(gradient(img))


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return np.multiply(a, b)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return np.add(a, b)


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return np.subtract(a, b)


def scale(a: np.ndarray, s: float) -> np.ndarray:
    return np.multiply(a, float(s))
