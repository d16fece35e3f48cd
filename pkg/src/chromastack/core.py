"""Stack containers and their validation.

Images are plain 2-D ``float64`` numpy arrays with nominal range [0, 1].
Containers freeze the arrays they hold (``writeable=False``) so a constructed
stack can be shared between workers without copying.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

Image = npt.NDArray[np.float64]


class StackError(ValueError):
    """A stack failed validation; ``result`` carries the first violation."""

    def __init__(self, result: "ValidationResult"):
        super().__init__(result.message)
        self.result = result


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    kind: Optional[str] = None  # "dimension" | "duplicate_depth" | "depth_coverage" | "wavelength_order" | "schedule" | "non_finite"
    message: str = ""
    location: Optional[Tuple[int, ...]] = None

    def __bool__(self) -> bool:
        return self.ok

    def raise_if_failed(self) -> None:
        if not self.ok:
            raise StackError(self)


OK = ValidationResult(True)


def _fail(kind: str, message: str, location: Optional[Tuple[int, ...]] = None) -> ValidationResult:
    return ValidationResult(False, kind, message, location)


def as_image(data, copy: bool = True) -> Image:
    """Return ``data`` as a frozen 2-D float64 array."""
    arr = np.array(data, dtype=np.float64, copy=copy)
    if arr.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _first_non_finite(img: np.ndarray) -> Optional[Tuple[int, int]]:
    bad = ~np.isfinite(img)
    if not bad.any():
        return None
    r, c = np.argwhere(bad)[0]
    return int(r), int(c)


def _check_wavelengths(wavelengths: Sequence[float]) -> ValidationResult:
    w = np.asarray(wavelengths, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        return _fail("schedule", "wavelength schedule must be a non-empty 1-D sequence")
    steps = np.diff(w)
    if np.any(steps <= 0):
        j = int(np.argmax(steps <= 0)) + 1
        return _fail(
            "wavelength_order",
            f"wavelength schedule not strictly increasing at position {j} ({w[j - 1]:g} -> {w[j]:g})",
            (j,),
        )
    return OK


@dataclass(frozen=True)
class Slice:
    depth_index: int
    wavelength_nm: float
    image: Image


def check_spectral_varying(
    slices: Sequence[Slice],
    depth_schedule: Sequence[float],
    wavelength_schedule: Sequence[float],
) -> ValidationResult:
    n = len(slices)
    if n == 0:
        return _fail("schedule", "stack has no slices")
    if len(depth_schedule) != n or len(wavelength_schedule) != n:
        return _fail(
            "schedule",
            f"{n} slices but {len(depth_schedule)} depths and {len(wavelength_schedule)} wavelengths",
        )
    res = _check_wavelengths(wavelength_schedule)
    if not res:
        return res

    shape = np.shape(slices[0].image)
    seen = set()
    for k, s in enumerate(slices):
        img = np.asarray(s.image)
        if img.ndim != 2 or img.shape != shape:
            return _fail("dimension", f"slice {k} has shape {img.shape}, expected {shape}", (k,))
        if s.depth_index in seen:
            return _fail("duplicate_depth", f"duplicate depth index {s.depth_index} at slice {k}", (k,))
        seen.add(s.depth_index)
        if not 0 <= s.depth_index < n:
            return _fail("depth_coverage", f"depth index {s.depth_index} at slice {k} outside 0..{n - 1}", (k,))
        if s.wavelength_nm != wavelength_schedule[k]:
            return _fail(
                "schedule",
                f"slice {k} carries {s.wavelength_nm:g} nm, schedule says {wavelength_schedule[k]:g} nm",
                (k,),
            )
        pos = _first_non_finite(img)
        if pos is not None:
            return _fail("non_finite", f"non-finite pixel in slice {k} at (row={pos[0]}, col={pos[1]})", (k, *pos))
    return OK


def check_focal_stack(
    data: np.ndarray,
    depth_schedule: Sequence[float],
    wavelength_schedule: Sequence[float],
) -> ValidationResult:
    data = np.asarray(data)
    if data.ndim != 4:
        return _fail("dimension", f"focal stack data must be (depths, wavelengths, H, W), got shape {data.shape}")
    n, m = data.shape[:2]
    if n == 0 or m == 0:
        return _fail("schedule", "focal stack has no cells")
    if len(depth_schedule) != n or len(wavelength_schedule) != m:
        return _fail(
            "schedule",
            f"grid is {n}x{m} but schedules have {len(depth_schedule)} depths and {len(wavelength_schedule)} wavelengths",
        )
    res = _check_wavelengths(wavelength_schedule)
    if not res:
        return res
    if not np.isfinite(data).all():
        k, i, r, c = (int(v) for v in np.argwhere(~np.isfinite(data))[0])
        return _fail("non_finite", f"non-finite pixel in cell ({k}, {i}) at (row={r}, col={c})", (k, i, r, c))
    return OK


@dataclass(frozen=True)
class SpectralVaryingStack:
    """Camera output: one captured wavelength per focus depth.

    Slice ``k`` carries ``wavelength_schedule[k]``; ``depth_index`` values are a
    permutation of ``0..N-1``.
    """

    slices: Tuple[Slice, ...]
    depth_schedule: Tuple[float, ...]
    wavelength_schedule: Tuple[float, ...]

    def __post_init__(self):
        slices = tuple(Slice(int(s.depth_index), float(s.wavelength_nm), as_image(s.image)) for s in self.slices)
        object.__setattr__(self, "slices", slices)
        object.__setattr__(self, "depth_schedule", tuple(float(d) for d in self.depth_schedule))
        object.__setattr__(self, "wavelength_schedule", tuple(float(w) for w in self.wavelength_schedule))
        check_spectral_varying(self.slices, self.depth_schedule, self.wavelength_schedule).raise_if_failed()

    def __len__(self) -> int:
        return len(self.slices)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.slices[0].image.shape

    def by_depth(self, depth_index: int) -> Slice:
        for s in self.slices:
            if s.depth_index == depth_index:
                return s
        raise KeyError(depth_index)


@dataclass(frozen=True)
class MultispectralFocalStack:
    """Depths x wavelengths grid of images, stored as one (N, M, H, W) array."""

    data: np.ndarray
    depth_schedule: Tuple[float, ...]
    wavelength_schedule: Tuple[float, ...]

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "depth_schedule", tuple(float(d) for d in self.depth_schedule))
        object.__setattr__(self, "wavelength_schedule", tuple(float(w) for w in self.wavelength_schedule))
        check_focal_stack(self.data, self.depth_schedule, self.wavelength_schedule).raise_if_failed()

    @property
    def depths(self) -> int:
        return self.data.shape[0]

    @property
    def wavelengths(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape[2:]

    def cell(self, depth_index: int, wavelength_index: int) -> Image:
        return self.data[depth_index, wavelength_index]


Stack = Union[SpectralVaryingStack, MultispectralFocalStack]


def validate_stack(stack: Stack) -> ValidationResult:
    """Re-check every invariant of ``stack``; returns the first violation found."""
    if isinstance(stack, SpectralVaryingStack):
        return check_spectral_varying(stack.slices, stack.depth_schedule, stack.wavelength_schedule)
    if isinstance(stack, MultispectralFocalStack):
        return check_focal_stack(stack.data, stack.depth_schedule, stack.wavelength_schedule)
    raise TypeError(f"not a stack: {type(stack).__name__}")


@dataclass(frozen=True)
class LLTMaps:
    """Per-pixel gain and offset relating a source channel to a target channel."""

    gain: Image
    offset: Image

    def __post_init__(self):
        gain, offset = as_image(self.gain), as_image(self.offset)
        if gain.shape != offset.shape:
            raise ValueError(f"gain {gain.shape} and offset {offset.shape} differ in shape")
        if not (np.isfinite(gain).all() and np.isfinite(offset).all()):
            raise ValueError("LLT maps contain non-finite values")
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def identity(cls, shape: Tuple[int, int]) -> "LLTMaps":
        return cls(np.ones(shape), np.zeros(shape))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.gain.shape


@dataclass(frozen=True)
class ReconConfig:
    blur_sigma: float = 10.0
    alpha: float = 1.0
    beta: float = 0.1
    max_iters: int = 500
    rel_tol: float = 1e-6
    init_step: float = 1.0

    def __post_init__(self):
        if not self.blur_sigma > 0:
            raise ValueError("blur_sigma must be > 0")
        if not (self.alpha >= 0 and self.beta >= 0):
            raise ValueError("alpha and beta must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.rel_tol > 0 and self.init_step > 0):
            raise ValueError("rel_tol and init_step must be > 0")


DEFAULT_WAVELENGTHS: Tuple[float, ...] = tuple(float(w) for w in range(430, 701, 30))
