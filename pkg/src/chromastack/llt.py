"""Local linear transformation (LLT) fitting and focal-stack reconstruction.

Maps ``A`` (gain) and ``B`` (offset) relate a blurred source channel ``I_k``
to a blurred target channel ``I_i`` by minimizing::

    E = |A*I_k + B - I_i|^2
        + alpha * (|A*dx(I_k) - dx(I_i)|^2 + |A*dy(I_k) - dy(I_i)|^2)
        + beta * (|grad A|^2 + |grad B|^2)

with plain gradient descent and a backtracking (Armijo) line search. The
fitted maps are then applied to the *sharp* source slice to synthesize the
missing channel.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import (
    LLTMaps,
    MultispectralFocalStack,
    ReconConfig,
    SpectralVaryingStack,
)
from .imgops import gaussian_blur, gradient, gradient_adjoint

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MAX_HALVINGS = 60


class FitError(RuntimeError):
    pass


@dataclass
class FitReport:
    initial_objective: float
    final_objective: float
    iterations: int
    converged: bool
    step_history: List[float] = field(default_factory=list)
    objective_history: List[float] = field(default_factory=list)  # E after each accepted step, starting with E0


class _Problem:
    """Cached source/target derivatives for repeated objective evaluations."""

    def __init__(self, source: np.ndarray, target: np.ndarray, alpha: float, beta: float):
        source = np.asarray(source, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        if source.shape != target.shape or source.ndim != 2:
            raise ValueError(f"dimension mismatch: {source.shape} vs {target.shape}")
        if not (np.isfinite(source).all() and np.isfinite(target).all()):
            raise ValueError("non-finite input image")
        self.src = source
        self.tgt = target
        gs, gt = gradient(source), gradient(target)
        self.sx, self.sy = gs.gx, gs.gy
        self.tx, self.ty = gt.gx, gt.gy
        self.alpha = float(alpha)
        self.beta = float(beta)

    def residuals(self, A, B):
        r = A * self.src + B - self.tgt
        rx = A * self.sx - self.tx
        ry = A * self.sy - self.ty
        return r, rx, ry

    def objective(self, A, B) -> float:
        # overflow surfaces as a non-finite value, which callers check
        with np.errstate(over="ignore", invalid="ignore"):
            r, rx, ry = self.residuals(A, B)
            ga, gb = gradient(A), gradient(B)
            e = np.sum(r * r)
            e += self.alpha * (np.sum(rx * rx) + np.sum(ry * ry))
            e += self.beta * (np.sum(ga.gx**2) + np.sum(ga.gy**2) + np.sum(gb.gx**2) + np.sum(gb.gy**2))
        return float(e)

    def gradients(self, A, B) -> Tuple[np.ndarray, np.ndarray]:
        r, rx, ry = self.residuals(A, B)
        gA = 2.0 * self.src * r + 2.0 * self.alpha * (self.sx * rx + self.sy * ry)
        gB = 2.0 * r
        if self.beta:
            gA += 2.0 * self.beta * gradient_adjoint(gradient(A))
            gB += 2.0 * self.beta * gradient_adjoint(gradient(B))
        return gA, gB


def llt_objective(maps: LLTMaps, source, target, alpha: float, beta: float) -> float:
    """Energy of ``maps`` transforming blurred ``source`` into blurred ``target``."""
    prob = _Problem(source, target, alpha, beta)
    if maps.shape != prob.src.shape:
        raise ValueError(f"dimension mismatch: maps {maps.shape} vs images {prob.src.shape}")
    return prob.objective(maps.gain, maps.offset)


def llt_gradients(maps: LLTMaps, source, target, alpha: float, beta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of :func:`llt_objective` w.r.t. gain and offset."""
    prob = _Problem(source, target, alpha, beta)
    if maps.shape != prob.src.shape:
        raise ValueError(f"dimension mismatch: maps {maps.shape} vs images {prob.src.shape}")
    return prob.gradients(maps.gain, maps.offset)


def fit_llt(source, target, cfg: ReconConfig = ReconConfig()) -> Tuple[LLTMaps, FitReport]:
    """Fit LLT maps by gradient descent from the identity transform.

    ``source`` and ``target`` must already be blurred. Each iteration tries
    ``cfg.init_step`` and halves it until the Armijo condition holds. The loop
    stops when the relative decrease drops below ``cfg.rel_tol`` or after
    ``cfg.max_iters`` iterations. If no decreasing step exists at machine
    precision the current maps are returned with ``converged=False``.
    """
    prob = _Problem(source, target, cfg.alpha, cfg.beta)
    A = np.ones_like(prob.src)
    B = np.zeros_like(prob.src)
    E = prob.objective(A, B)
    if not np.isfinite(E):
        raise FitError("non-finite objective at initialization")
    report = FitReport(initial_objective=E, final_objective=E, iterations=0, converged=False, objective_history=[E])

    for it in range(cfg.max_iters):
        gA, gB = prob.gradients(A, B)
        gnorm2 = float(np.sum(gA * gA) + np.sum(gB * gB))
        if E == 0.0 or gnorm2 == 0.0:
            report.converged = True
            break

        t = cfg.init_step
        for _ in range(MAX_HALVINGS):
            A_new = A - t * gA
            B_new = B - t * gB
            E_new = prob.objective(A_new, B_new)
            if not np.isfinite(E_new):
                raise FitError(f"non-finite objective at iteration {it}, step {t:g}")
            if E_new <= E - ARMIJO_C * t * gnorm2:
                break
            t *= 0.5
        else:
            log.debug("line search failed at iteration %d", it)
            break

        if E_new >= E:
            # Armijo can accept a step whose decrease underflows; treat as stall
            break
        rel = (E - E_new) / E
        A, B, E = A_new, B_new, E_new
        report.iterations = it + 1
        report.step_history.append(t)
        report.objective_history.append(E)
        if rel < cfg.rel_tol:
            report.converged = True
            break

    report.final_objective = E
    return LLTMaps(A, B), report


def transfer_channel(maps: LLTMaps, sharp_source) -> np.ndarray:
    """Apply the maps to a sharp slice, clamped to [0, 1]."""
    sharp_source = np.asarray(sharp_source, dtype=np.float64)
    if sharp_source.shape != maps.shape:
        raise ValueError(f"dimension mismatch: maps {maps.shape} vs image {sharp_source.shape}")
    return np.clip(maps.gain * sharp_source + maps.offset, 0.0, 1.0)


def _fit_cell(args):
    k, i, src_blur, tgt_blur, sharp, cfg = args
    try:
        maps, report = fit_llt(src_blur, tgt_blur, cfg)
    except Exception as exc:
        raise FitError(f"fit for depth {k}, wavelength {i} failed: {exc}") from exc
    return k, i, transfer_channel(maps, sharp), report


def default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def reconstruct_with_reports(
    captured: SpectralVaryingStack,
    cfg: ReconConfig = ReconConfig(),
    jobs: Optional[int] = 1,
) -> Tuple[MultispectralFocalStack, Dict[Tuple[int, int], FitReport]]:
    """Like :func:`reconstruct_focal_stack` but also returns the per-cell fit reports."""
    n = len(captured)
    if n < 2:
        raise ValueError(f"reconstruction needs at least 2 slices, got {n}")
    jobs = default_jobs() if jobs is None else max(1, int(jobs))

    # slice order k <-> wavelength_schedule[k]; index sharp images by depth
    sharp = {}
    wl_of_depth = {}
    for pos, s in enumerate(captured.slices):
        sharp[s.depth_index] = s.image
        wl_of_depth[s.depth_index] = pos
    if any(wl_of_depth[d] != d for d in range(n)):
        raise ValueError("reconstruction requires slice k to be captured at depth index k")
    blurred = {d: gaussian_blur(img, cfg.blur_sigma) for d, img in sharp.items()}

    out = np.empty((n, n) + captured.shape, dtype=np.float64)
    for k in range(n):
        out[k, k] = sharp[k]
    tasks = [(k, i, blurred[k], blurred[i], sharp[k], cfg) for k in range(n) for i in range(n) if i != k]

    reports: Dict[Tuple[int, int], FitReport] = {}
    if jobs == 1:
        results = map(_fit_cell, tasks)
        for k, i, img, rep in results:
            out[k, i] = img
            reports[(k, i)] = rep
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for k, i, img, rep in pool.map(_fit_cell, tasks, chunksize=max(1, len(tasks) // (4 * jobs))):
                out[k, i] = img
                reports[(k, i)] = rep

    stack = MultispectralFocalStack(out, captured.depth_schedule, captured.wavelength_schedule)
    return stack, reports


def reconstruct_focal_stack(
    captured: SpectralVaryingStack,
    cfg: ReconConfig = ReconConfig(),
    jobs: Optional[int] = 1,
) -> MultispectralFocalStack:
    """Fill every missing (depth, wavelength) cell of a spectral-varying stack.

    Cell ``(k, k)`` is the captured slice itself. Every other cell ``(k, i)``
    comes from maps fitted between blurred slices ``k`` (source) and ``i``
    (target), applied to sharp slice ``k``.
    """
    return reconstruct_with_reports(captured, cfg, jobs)[0]
