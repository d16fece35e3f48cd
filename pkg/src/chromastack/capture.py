"""Synthetic layered multispectral scenes and a chromatic focal-stack camera.

A scene is a back-to-front list of layers, each with a depth, a coverage mask
and one reflectance texture per wavelength. Defocus is Gaussian with width
``kappa * |layer_depth - focus_depth|``. The simulated camera keeps only the
diagonal of the ground-truth grid: slice ``k`` is focused at depth ``k`` and
recorded at wavelength ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import (
    DEFAULT_WAVELENGTHS,
    MultispectralFocalStack,
    Slice,
    SpectralVaryingStack,
    as_image,
)
from .imgops import gaussian_blur

DEFAULT_KAPPA = 1.5


@dataclass(frozen=True)
class Layer:
    depth: float
    mask: np.ndarray  # (H, W), values in [0, 1]
    spectra: np.ndarray  # (M, H, W) reflectance per wavelength

    def __post_init__(self):
        mask = as_image(self.mask)
        spectra = np.array(self.spectra, dtype=np.float64)
        if spectra.ndim != 3 or spectra.shape[1:] != mask.shape:
            raise ValueError(f"spectra shape {spectra.shape} does not match mask {mask.shape}")
        spectra.setflags(write=False)
        object.__setattr__(self, "depth", float(self.depth))
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "spectra", spectra)


@dataclass(frozen=True)
class LayeredScene:
    layers: Tuple[Layer, ...]  # back to front
    wavelength_schedule: Tuple[float, ...]
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "wavelength_schedule", tuple(float(w) for w in self.wavelength_schedule))
        if not self.layers:
            raise ValueError("scene needs at least one layer")
        m = len(self.wavelength_schedule)
        depths = [layer.depth for layer in self.layers]
        if len(set(depths)) != len(depths):
            raise ValueError(f"layer depths must be distinct, got {depths}")
        for j, layer in enumerate(self.layers):
            if layer.spectra.shape != (m, self.height, self.width):
                raise ValueError(f"layer {j} spectra shape {layer.spectra.shape} != {(m, self.height, self.width)}")
        coverage = np.zeros((self.height, self.width))
        for layer in self.layers:
            coverage = np.maximum(coverage, layer.mask)
        if np.any(coverage <= 0):
            raise ValueError("layer masks do not cover the frame")


@dataclass(frozen=True)
class DefocusModel:
    kappa: float
    focus_depths: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "focus_depths", tuple(float(d) for d in self.focus_depths))
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if len(set(self.focus_depths)) != len(self.focus_depths):
            raise ValueError("focus depths must be distinct")

    @classmethod
    def uniform(cls, n: int, kappa: float = DEFAULT_KAPPA, start: float = 1.0, stop: Optional[float] = None):
        """``n`` focus depths spaced one unit apart from ``start`` (or spread to ``stop``)."""
        stop = start + (n - 1) if stop is None else stop
        return cls(kappa, tuple(np.linspace(start, stop, n)))


def default_wavelengths(m: int) -> Tuple[float, ...]:
    if m == len(DEFAULT_WAVELENGTHS):
        return DEFAULT_WAVELENGTHS
    return tuple(float(w) for w in np.linspace(430.0, 700.0, m))


def _smooth_noise(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    """Band-limited noise rescaled to [0, 1]."""
    field = gaussian_blur(rng.standard_normal(shape), sigma)
    lo, hi = field.min(), field.max()
    return (field - lo) / (hi - lo) if hi > lo else np.zeros(shape)


def _random_mask(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = rng.uniform(0.25, 0.75) * h, rng.uniform(0.25, 0.75) * w
    if rng.random() < 0.5:
        ry, rx = rng.uniform(0.15, 0.3) * h, rng.uniform(0.15, 0.3) * w
        theta = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        return ((u / rx) ** 2 + (v / ry) ** 2 <= 1.0).astype(np.float64)
    # convex polygon: sorted random angles on a jittered circle
    n = int(rng.integers(3, 7))
    angles = np.sort(rng.uniform(0, 2 * np.pi, n))
    radius = rng.uniform(0.2, 0.35) * min(h, w) * rng.uniform(0.8, 1.2, n)
    px, py = cx + radius * np.cos(angles), cy + radius * np.sin(angles)
    inside = np.ones((h, w), dtype=bool)
    for j in range(n):
        x0, y0, x1, y1 = px[j], py[j], px[(j + 1) % n], py[(j + 1) % n]
        inside &= (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0) >= 0
    return inside.astype(np.float64)


def _layer_spectra(rng: np.random.Generator, h: int, w: int, wavelengths: np.ndarray) -> np.ndarray:
    # two materials with smooth reflectance curves, mixed by a slowly varying
    # weight and modulated by a shared achromatic detail texture
    lam = (wavelengths - 430.0) / 270.0
    curves = []
    for _ in range(2):
        centre = rng.uniform(-0.2, 1.2)
        width = rng.uniform(0.3, 0.8)
        base, amp = rng.uniform(0.05, 0.3), rng.uniform(0.4, 0.7)
        curves.append(base + amp * np.exp(-0.5 * ((lam - centre) / width) ** 2))
    mix = _smooth_noise(rng, (h, w), sigma=max(h, w) / 6.0)
    detail = 0.5 * _smooth_noise(rng, (h, w), sigma=1.0) + 0.5 * _smooth_noise(rng, (h, w), sigma=3.0)
    shading = 0.35 + 0.65 * detail
    refl = mix[None] * curves[0][:, None, None] + (1.0 - mix[None]) * curves[1][:, None, None]
    return np.clip(refl * shading[None], 0.0, 1.0)


def synth_scene(
    width: int,
    height: int,
    n_layers: int,
    n_wavelengths: int,
    seed: int,
    depth_range: Tuple[float, float] = (1.0, 10.0),
    wavelength_schedule: Optional[Sequence[float]] = None,
) -> LayeredScene:
    """Deterministic random layered scene.

    Layer depths are spread over ``depth_range`` with the backmost layer at the
    far end; the backmost mask covers the whole frame.
    """
    if width < 16 or height < 16:
        raise ValueError("scene dimensions must be >= 16")
    if n_layers < 1 or n_wavelengths < 2:
        raise ValueError("need n_layers >= 1 and n_wavelengths >= 2")
    wavelengths = default_wavelengths(n_wavelengths) if wavelength_schedule is None else tuple(wavelength_schedule)
    if len(wavelengths) != n_wavelengths:
        raise ValueError("wavelength schedule length does not match n_wavelengths")

    rng = np.random.default_rng(seed)
    near, far = depth_range
    if n_layers == 1:
        depths = [far]
    else:
        slots = np.linspace(far, near, n_layers)
        jitter = rng.uniform(-0.25, 0.25, n_layers) * (far - near) / n_layers
        depths = list(np.clip(slots + jitter, near, far))

    lam = np.asarray(wavelengths, dtype=np.float64)
    layers = []
    for j, depth in enumerate(depths):
        mask = np.ones((height, width)) if j == 0 else _random_mask(rng, height, width)
        layers.append(Layer(depth, mask, _layer_spectra(rng, height, width, lam)))
    return LayeredScene(tuple(layers), wavelengths, width, height)


def render_slice(scene: LayeredScene, focus_depth: float, model: DefocusModel, wavelength_index: int) -> np.ndarray:
    """Composite the scene back to front as seen with focus at ``focus_depth``."""
    if not 0 <= wavelength_index < len(scene.wavelength_schedule):
        raise IndexError(f"wavelength index {wavelength_index} out of range")
    canvas = np.zeros((scene.height, scene.width))
    for layer in scene.layers:
        sigma = model.kappa * abs(layer.depth - focus_depth)
        tex = layer.spectra[wavelength_index]
        mask = layer.mask
        if sigma > 0:
            tex = gaussian_blur(tex, sigma)
            mask = gaussian_blur(mask, sigma)
        canvas = mask * tex + (1.0 - mask) * canvas
    return canvas


def render_ground_truth(
    scene: LayeredScene,
    model: DefocusModel,
    wavelength_schedule: Optional[Sequence[float]] = None,
) -> MultispectralFocalStack:
    if wavelength_schedule is None:
        wavelength_schedule = scene.wavelength_schedule
    m = len(scene.wavelength_schedule)
    if len(wavelength_schedule) != m:
        raise ValueError(f"wavelength schedule has {len(wavelength_schedule)} entries, scene has {m} channels")
    n = len(model.focus_depths)
    data = np.empty((n, m, scene.height, scene.width))
    for k, focus in enumerate(model.focus_depths):
        for i in range(m):
            data[k, i] = render_slice(scene, focus, model, i)
    return MultispectralFocalStack(data, model.focus_depths, wavelength_schedule)


def capture_spectral_varying(gt: MultispectralFocalStack) -> SpectralVaryingStack:
    """Keep one channel per depth: slice ``k`` is ground-truth cell ``(k, k)``."""
    if gt.depths != gt.wavelengths:
        raise ValueError(f"capture needs as many depths as wavelengths, got {gt.depths}x{gt.wavelengths}")
    slices = tuple(Slice(k, gt.wavelength_schedule[k], gt.cell(k, k)) for k in range(gt.depths))
    return SpectralVaryingStack(slices, gt.depth_schedule, gt.wavelength_schedule)
