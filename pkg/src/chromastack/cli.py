"""Command-line entry point: ``chromastack {synth,simulate,reconstruct,fit,evaluate}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import capture, llt, metrics, stackio
from .core import MultispectralFocalStack, ReconConfig, SpectralVaryingStack
from .imgops import gaussian_blur

log = logging.getLogger("chromastack")

SCENE_DIR = "scene"


class CLIError(Exception):
    """Expected failure; reported as one line on stderr."""


def _add_fit_options(p: argparse.ArgumentParser) -> None:
    d = ReconConfig()
    p.add_argument("--sigma", type=float, default=d.blur_sigma, help="pre-blur Gaussian sigma in pixels")
    p.add_argument("--alpha", type=float, default=d.alpha, help="weight of the gradient-matching term")
    p.add_argument("--beta", type=float, default=d.beta, help="weight of the map smoothness term")
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--rel-tol", type=float, default=d.rel_tol)
    p.add_argument("--init-step", type=float, default=d.init_step)


def _config(args) -> ReconConfig:
    try:
        return ReconConfig(args.sigma, args.alpha, args.beta, args.max_iters, args.rel_tol, args.init_step)
    except ValueError as exc:
        raise CLIError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chromastack", description="Multispectral focal stack toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="{synth,simulate,reconstruct,fit,evaluate}")
    sub.required = True

    p = sub.add_parser("synth", help="generate a layered scene and its ground-truth focal stack")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--channels", type=int, default=10)
    p.add_argument("--depths", type=int, default=None, help="number of focus depths (default: --channels)")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--kappa", type=float, default=capture.DEFAULT_KAPPA, help="defocus growth, px per depth unit")

    p = sub.add_parser("simulate", help="select one channel per depth, as the chromatic camera does")
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument(
        "--kappa",
        type=float,
        default=None,
        help="re-render the ground truth from GT/scene with this defocus growth; written to OUT/gt",
    )

    p = sub.add_parser("reconstruct", help="recover the full multispectral focal stack")
    p.add_argument("--in", dest="input", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _add_fit_options(p)
    p.add_argument("--jobs", type=int, default=None, help="concurrent fits (default: available CPUs)")

    p = sub.add_parser("fit", help="fit one LLT map pair and save it for inspection")
    p.add_argument("--source", required=True, type=Path)
    p.add_argument("--target", required=True, type=Path)
    p.add_argument("--out-a", required=True, type=Path)
    p.add_argument("--out-b", required=True, type=Path)
    _add_fit_options(p)

    p = sub.add_parser("evaluate", help="PSNR/SSIM of a reconstruction against ground truth")
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--recon", required=True, type=Path)
    p.add_argument("--report", required=True, type=Path)
    return parser


def _read(path: Path, kind):
    stack = stackio.read_stack(path)
    if not isinstance(stack, kind):
        raise CLIError(f"{path} holds a {type(stack).__name__}, expected {kind.__name__}")
    return stack


def cmd_synth(args) -> None:
    n = args.channels if args.depths is None else args.depths
    scene = capture.synth_scene(args.width, args.height, args.layers, args.channels, args.seed)
    model = capture.DefocusModel.uniform(n, kappa=args.kappa)
    gt = capture.render_ground_truth(scene, model)
    stackio.write_scene(scene, model, args.out / SCENE_DIR)
    stackio.write_stack(gt, args.out)
    log.info("wrote %dx%d ground truth to %s", gt.depths, gt.wavelengths, args.out)


def cmd_simulate(args) -> None:
    if args.kappa is None:
        gt = _read(args.gt, MultispectralFocalStack)
    else:
        scene, model = stackio.read_scene(args.gt / SCENE_DIR)
        model = capture.DefocusModel(args.kappa, model.focus_depths)
        gt = capture.render_ground_truth(scene, model)
        stackio.write_stack(gt, args.out / "gt")
    stackio.write_stack(capture.capture_spectral_varying(gt), args.out)


def cmd_reconstruct(args) -> None:
    captured = _read(args.input, SpectralVaryingStack)
    jobs = llt.default_jobs() if args.jobs is None else args.jobs
    if jobs < 1:
        raise CLIError("--jobs must be >= 1")
    recon = llt.reconstruct_focal_stack(captured, _config(args), jobs=jobs)
    stackio.write_stack(recon, args.out)


def _write_map(img: np.ndarray, path: Path) -> None:
    lo, hi = float(img.min()), float(img.max())
    vis = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    path.parent.mkdir(parents=True, exist_ok=True)
    stackio.write_pgm(path, vis)
    # value = min + pixel * (max - min)
    path.with_suffix(".scale.txt").write_text(f"min {lo!r}\nmax {hi!r}\n")


def cmd_fit(args) -> None:
    cfg = _config(args)
    src = stackio.read_pgm(args.source)
    tgt = stackio.read_pgm(args.target)
    if src.shape != tgt.shape:
        raise CLIError(f"source {src.shape} and target {tgt.shape} differ in size")
    maps, report = llt.fit_llt(gaussian_blur(src, cfg.blur_sigma), gaussian_blur(tgt, cfg.blur_sigma), cfg)
    _write_map(maps.gain, args.out_a)
    _write_map(maps.offset, args.out_b)
    print(
        f"iterations {report.iterations}  converged {report.converged}  "
        f"E {report.initial_objective:.6g} -> {report.final_objective:.6g}"
    )


def cmd_evaluate(args) -> None:
    gt = _read(args.gt, MultispectralFocalStack)
    recon = _read(args.recon, MultispectralFocalStack)
    table = metrics.evaluate_stack(gt, recon)
    args.report.parent.mkdir(parents=True, exist_ok=True)
    table.write_csv(args.report)
    print(table.summary())


COMMANDS = {
    "synth": cmd_synth,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
}


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except (CLIError, ValueError, OSError, RuntimeError, KeyError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {args.command}: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
