"""On-disk stacks: 16-bit binary PGM slices plus a JSON manifest.

Layout of a stack directory::

    manifest.json
    d00_w430.pgm
    d00_w460.pgm
    ...

The manifest is written last, so a directory without one is an incomplete
write. Pixel values are quantized to ``round(v * 65535)`` after clamping to
[0, 1] and normalized back on read.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Union

import numpy as np

from .core import MultispectralFocalStack, Slice, SpectralVaryingStack, Stack

FORMAT_VERSION = 1
MAXVAL = 65535
MANIFEST = "manifest.json"


class StackFormatError(ValueError):
    pass


def quantize(img: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * MAXVAL).astype(np.uint16)


def dequantize(q: np.ndarray) -> np.ndarray:
    return q.astype(np.float64) / MAXVAL


def write_pgm(path, img: np.ndarray) -> None:
    """Write a normalized image as binary P5 with maxval 65535 (big-endian samples)."""
    q = quantize(np.asarray(img, dtype=np.float64))
    h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{MAXVAL}\n".encode("ascii"))
        fh.write(q.astype(">u2").tobytes())


def _header_tokens(buf: bytes):
    """Yield (token, end_offset) for the four PGM header fields, skipping comments."""
    pos, n = 0, len(buf)
    for _ in range(4):
        while pos < n:
            if buf[pos : pos + 1] == b"#":
                while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif buf[pos : pos + 1].isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise StackFormatError("truncated PGM header")
        yield buf[start:pos], pos


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (8- or 16-bit) into a float image in [0, 1]."""
    buf = Path(path).read_bytes()
    try:
        tokens = list(_header_tokens(buf))
        magic = tokens[0][0]
        w, h, maxval = (int(t) for t, _ in tokens[1:])
    except (ValueError, StackFormatError) as exc:
        raise StackFormatError(f"{path}: bad PGM header ({exc})") from None
    if magic != b"P5":
        raise StackFormatError(f"{path}: not a binary PGM (magic {magic!r})")
    if not 0 < maxval <= 65535:
        raise StackFormatError(f"{path}: invalid maxval {maxval}")
    start = tokens[-1][1] + 1  # one whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    nbytes = w * h * dtype.itemsize
    if len(buf) - start < nbytes:
        raise StackFormatError(f"{path}: expected {nbytes} pixel bytes, found {len(buf) - start}")
    q = np.frombuffer(buf, dtype=dtype, count=w * h, offset=start).reshape(h, w)
    return q.astype(np.float64) / maxval


def slice_filename(depth_index: int, wavelength_nm: float) -> str:
    return f"d{depth_index:02d}_w{int(round(wavelength_nm)):03d}.pgm"


def write_stack(stack: Stack, directory) -> Path:
    """Write ``stack`` under ``directory``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if isinstance(stack, SpectralVaryingStack):
        kind = "spectral_varying"
        h, w = stack.shape
        entries = []
        for pos, s in enumerate(stack.slices):
            name = slice_filename(s.depth_index, s.wavelength_nm)
            write_pgm(directory / name, s.image)
            entries.append(
                {"depth_index": s.depth_index, "wavelength_index": pos, "wavelength_nm": s.wavelength_nm, "path": name}
            )
    elif isinstance(stack, MultispectralFocalStack):
        kind = "focal_stack"
        h, w = stack.shape
        entries = []
        for k in range(stack.depths):
            for i, wl in enumerate(stack.wavelength_schedule):
                name = slice_filename(k, wl)
                write_pgm(directory / name, stack.cell(k, i))
                entries.append({"depth_index": k, "wavelength_index": i, "wavelength_nm": wl, "path": name})
    else:
        raise TypeError(f"not a stack: {type(stack).__name__}")

    names = [e["path"] for e in entries]
    if len(set(names)) != len(names):
        raise StackFormatError("wavelengths collide after rounding to whole nanometers")
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "width": w,
        "height": h,
        "depth_schedule": list(stack.depth_schedule),
        "wavelength_schedule": list(stack.wavelength_schedule),
        "slices": entries,
    }
    path = directory / MANIFEST
    tmp = directory / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def _load_entry(directory: Path, entry: dict, w: int, h: int) -> np.ndarray:
    path = directory / entry["path"]
    if not path.is_file():
        raise StackFormatError(f"missing slice file: {path}")
    img = read_pgm(path)
    if img.shape != (h, w):
        raise StackFormatError(f"{path}: size {img.shape[1]}x{img.shape[0]}, manifest says {w}x{h}")
    return img


def read_stack(directory) -> Union[SpectralVaryingStack, MultispectralFocalStack]:
    """Load and validate the stack stored in ``directory``."""
    directory = Path(directory)
    mpath = directory / MANIFEST
    if not mpath.is_file():
        raise StackFormatError(f"missing manifest: {mpath}")
    try:
        m = json.loads(mpath.read_text())
        version = int(m["format_version"])
        kind = m["kind"]
        w, h = int(m["width"]), int(m["height"])
        depths = [float(d) for d in m["depth_schedule"]]
        wavelengths = [float(x) for x in m["wavelength_schedule"]]
        entries = list(m["slices"])
    except (KeyError, TypeError, ValueError) as exc:
        raise StackFormatError(f"{mpath}: malformed manifest ({exc})") from None
    if version != FORMAT_VERSION:
        raise StackFormatError(f"{mpath}: unsupported format_version {version}")

    if kind == "spectral_varying":
        entries.sort(key=lambda e: int(e["wavelength_index"]))
        if [int(e["wavelength_index"]) for e in entries] != list(range(len(wavelengths))):
            raise StackFormatError(f"{mpath}: slice entries do not match the wavelength schedule")
        slices = [
            Slice(int(e["depth_index"]), float(e["wavelength_nm"]), _load_entry(directory, e, w, h)) for e in entries
        ]
        return SpectralVaryingStack(tuple(slices), depths, wavelengths)
    if kind == "focal_stack":
        data = np.full((len(depths), len(wavelengths), h, w), np.nan)
        seen = set()
        for e in entries:
            k, i = int(e["depth_index"]), int(e["wavelength_index"])
            if not (0 <= k < len(depths) and 0 <= i < len(wavelengths)) or (k, i) in seen:
                raise StackFormatError(f"{mpath}: bad or duplicate cell ({k}, {i})")
            if float(e["wavelength_nm"]) != wavelengths[i]:
                raise StackFormatError(f"{mpath}: cell ({k}, {i}) wavelength disagrees with schedule")
            seen.add((k, i))
            data[k, i] = _load_entry(directory, e, w, h)
        if len(seen) != data.shape[0] * data.shape[1]:
            raise StackFormatError(f"{mpath}: {data.shape[0] * data.shape[1] - len(seen)} cells missing")
        return MultispectralFocalStack(data, depths, wavelengths)
    raise StackFormatError(f"{mpath}: unknown stack kind {kind!r}")


SCENE_MANIFEST = "scene.json"


def write_scene(scene, model, directory) -> Path:
    """Persist a layered scene and its defocus model (16-bit quantized textures)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    layers = []
    for j, layer in enumerate(scene.layers):
        mask_name = f"layer{j:02d}_mask.pgm"
        write_pgm(directory / mask_name, layer.mask)
        tex_names = []
        for i, wl in enumerate(scene.wavelength_schedule):
            name = f"layer{j:02d}_w{int(round(wl)):03d}.pgm"
            write_pgm(directory / name, layer.spectra[i])
            tex_names.append(name)
        layers.append({"depth": layer.depth, "mask": mask_name, "spectra": tex_names})
    manifest = {
        "format_version": FORMAT_VERSION,
        "width": scene.width,
        "height": scene.height,
        "wavelength_schedule": list(scene.wavelength_schedule),
        "kappa": model.kappa,
        "focus_depths": list(model.focus_depths),
        "layers": layers,
    }
    path = directory / SCENE_MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_scene(directory):
    """Inverse of :func:`write_scene`; returns ``(LayeredScene, DefocusModel)``."""
    from .capture import DefocusModel, LayeredScene, Layer

    directory = Path(directory)
    mpath = directory / SCENE_MANIFEST
    if not mpath.is_file():
        raise StackFormatError(f"missing scene manifest: {mpath}")
    m = json.loads(mpath.read_text())
    layers = []
    for entry in m["layers"]:
        mask = read_pgm(directory / entry["mask"])
        spectra = np.stack([read_pgm(directory / name) for name in entry["spectra"]])
        layers.append(Layer(entry["depth"], mask, spectra))
    scene = LayeredScene(tuple(layers), m["wavelength_schedule"], int(m["width"]), int(m["height"]))
    return scene, DefocusModel(float(m["kappa"]), m["focus_depths"])
