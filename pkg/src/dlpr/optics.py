"""Coded diffraction patterns: random phase masks and ``A_s = F M_s``.

``F`` is the orthonormal 2-D DFT, so every ``A_s`` is unitary and
``A_s^H A_s = I`` holds to rounding error.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .core import DimensionError, as_image

#: The four-level mask alphabet, in radians.
MASK_LEVELS = np.array([0.0, np.pi / 2, -np.pi / 2, np.pi])


def fft_workers():
    """Worker count for the FFT backend (``DLPR_THREADS`` overrides)."""
    env = os.environ.get("DLPR_THREADS")
    return max(1, int(env)) if env else 1


@dataclass(frozen=True)
class MaskSet:
    """``S`` diagonal phase masks stored as a ``(S, rows, cols)`` phase stack."""

    phases: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=float)
        if ph.ndim != 3 or 0 in ph.shape:
            raise DimensionError(f"mask stack must be (S, rows, cols), got {ph.shape}")
        ph = ph.copy()
        ph.setflags(write=False)
        object.__setattr__(self, "phases", ph)
        fac = np.exp(1j * ph)
        fac.setflags(write=False)
        object.__setattr__(self, "factors", fac)

    @property
    def count(self):
        return self.phases.shape[0]

    @property
    def shape(self):
        return self.phases.shape[1:]

    def __len__(self):
        return self.count


def generate_masks(rows, cols, count, seed):
    """Draw ``count`` masks with i.i.d. uniform entries from ``MASK_LEVELS``."""
    if count < 1 or rows < 1 or cols < 1:
        raise ValueError("mask count and raster dimensions must be positive")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(MASK_LEVELS), size=(count, rows, cols))
    return MaskSet(MASK_LEVELS[idx], seed=seed)


def _check(x, masks, s):
    img = as_image(x)
    if img.shape != masks.shape:
        raise DimensionError(f"field shape {img.shape} does not match masks {masks.shape}")
    if s is not None and not (0 <= s < masks.count):
        raise IndexError(f"mask index {s} out of range for {masks.count} masks")
    return img


def propagate_forward(x, masks, s=None):
    """Compute ``A_s x``; with ``s=None`` return the full ``(S, rows, cols)`` stack."""
    img = _check(x, masks, s)
    fac = masks.factors if s is None else masks.factors[s]
    return scipy.fft.fft2(fac * img, norm="ortho", workers=fft_workers())


def propagate_adjoint(u, masks, s=None):
    """Compute ``A_s^H u`` for one mask, or each slice of a stack when ``s=None``."""
    u = np.asarray(u)
    if s is None:
        if u.shape != masks.phases.shape:
            raise DimensionError(f"stack shape {u.shape} does not match masks {masks.phases.shape}")
        fac = masks.factors
    else:
        _check(u, masks, s)
        fac = masks.factors[s]
    return np.conj(fac) * scipy.fft.ifft2(u, norm="ortho", workers=fft_workers())


def intensities(x, masks):
    """Noise-free measurements ``y_s = |A_s x|^2`` as a stack."""
    return np.abs(propagate_forward(x, masks)) ** 2
