"""Raster files, metadata sidecars and PNG previews.

Raster layout: a 16-byte little-endian header (4-byte magic, uint32 format
version, uint32 rows, uint32 cols) followed by float64 values in column-major
order.  Complex rasters (magic ``CPLX``) store interleaved ``(re, im)`` pairs,
real rasters (magic ``REAL``) one value per pixel.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import as_image
from .optics import MaskSet
from .sensor import ObservationSet, model_from_dict, model_to_dict
from .sparse import Dictionary

MAGIC_COMPLEX = b"CPLX"
MAGIC_REAL = b"REAL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class RasterFormatError(ValueError):
    """Raised for malformed raster files."""


def write_raster(path, values):
    """Write a 2-D real or complex array; the dtype picks the magic."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError(f"rasters must be 2-D, got shape {arr.shape}")
    rows, cols = arr.shape
    if np.iscomplexobj(arr):
        flat = arr.astype(np.complex128).ravel(order="F")
        body = np.empty(2 * flat.size, dtype="<f8")
        body[0::2], body[1::2] = flat.real, flat.imag
        magic = MAGIC_COMPLEX
    else:
        body = arr.astype("<f8").ravel(order="F")
        magic = MAGIC_REAL
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(magic, FORMAT_VERSION, rows, cols))
        f.write(body.tobytes())
    return path


def read_raster(path):
    """Read a raster written by ``write_raster``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise RasterFormatError(f"{path}: file shorter than the header")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise RasterFormatError(f"{path}: unsupported format version {version}")
    if magic not in (MAGIC_COMPLEX, MAGIC_REAL):
        raise RasterFormatError(f"{path}: unknown magic {magic!r}")
    per = 2 if magic == MAGIC_COMPLEX else 1
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != per * rows * cols:
        raise RasterFormatError(f"{path}: expected {per * rows * cols} values, found {body.size}")
    if per == 2:
        body = body[0::2] + 1j * body[1::2]
    return body.reshape((rows, cols), order="F").copy()


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def save_png(path, values, kind="phase"):
    """Preview image: ``kind`` is ``"phase"`` (wrapped, cyclic colormap) or ``"amplitude"``."""
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib import image

    arr = np.asarray(values)
    if kind == "phase":
        img = np.angle(arr) if np.iscomplexobj(arr) else arr
        image.imsave(path, img, cmap="twilight", vmin=-np.pi, vmax=np.pi)
    elif kind == "amplitude":
        image.imsave(path, np.abs(arr), cmap="gray")
    else:
        raise ValueError(f"unknown preview kind {kind!r}")
    return Path(path)


def save_field(path, x):
    return write_raster(path, as_image(x).astype(complex))


def save_masks(directory, masks: MaskSet):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for s in range(masks.count):
        write_raster(d / f"mask_{s:02d}.real", masks.phases[s])
    write_json(d / "masks.json", {"count": masks.count, "rows": masks.shape[0],
                                 "cols": masks.shape[1], "seed": masks.seed})


def load_masks(directory):
    d = Path(directory)
    meta = read_json(d / "masks.json")
    phases = np.stack([read_raster(d / f"mask_{s:02d}.real") for s in range(meta["count"])])
    return MaskSet(phases, seed=meta.get("seed"))


def save_observations(directory, obs: ObservationSet):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for s in range(obs.count):
        write_raster(d / f"obs_{s:02d}.real", obs.z[s])
    meta = model_to_dict(obs.model)
    meta.update(count=obs.count, seed=obs.seed)
    write_json(d / "observations.json", meta)


def load_observations(directory):
    d = Path(directory)
    meta = read_json(d / "observations.json")
    z = np.stack([read_raster(d / f"obs_{s:02d}.real") for s in range(meta["count"])])
    return ObservationSet(z, model_from_dict(meta), seed=meta.get("seed"))


def save_dictionary(path, D: Dictionary, meta=None):
    """Atoms as a ``w**2 x k`` complex raster plus a ``.json`` sidecar."""
    path = Path(path)
    write_raster(path, D.atoms)
    info = {"w": D.w, "k": D.k}
    info.update(meta or {})
    write_json(path.with_suffix(".json"), info)
    return path


def load_dictionary(path):
    path = Path(path)
    atoms = read_raster(path)
    side = path.with_suffix(".json")
    meta = read_json(side) if side.exists() else {}
    return Dictionary(atoms, meta)
