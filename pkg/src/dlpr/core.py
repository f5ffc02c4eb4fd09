"""Complex wavefronts, phase wrapping, patch plumbing and the phase RMSE.

Vectorization convention
------------------------
Rasters are held as 2-D arrays of shape ``(rows, cols)``.  Whenever a raster
is flattened into a vector (``ComplexField.data``, a patch vector, the patch
index set) the order is column-major, i.e. the row index runs fastest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes are inconsistent with each other."""


class UncoveredPixelError(ValueError):
    """Raised when aggregation meets a pixel no patch covers."""


def _check_finite(values, name="input"):
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} contains non-finite values")


def wrap(phase):
    """Wrap phase values into ``[-pi, pi)``.

    Computes ``mod(phase + pi, 2 pi) - pi`` elementwise.  Scalars in give a
    float out, arrays give an array of the same shape.
    """
    phase = np.asarray(phase, dtype=float)
    _check_finite(phase, "phase")
    out = np.mod(phase + np.pi, 2.0 * np.pi) - np.pi
    # mod() can round up to exactly 2 pi for inputs just below a multiple
    out = np.where(out >= np.pi, out - 2.0 * np.pi, out)
    if out.ndim == 0:
        return float(out)
    return out


def angle(x):
    """Elementwise argument of ``x`` with ``angle(0) = 0``."""
    return np.angle(x)


@dataclass(frozen=True)
class ComplexField:
    """A complex wavefront ``x = a * exp(j psi)`` on a ``rows x cols`` raster."""

    image: np.ndarray

    def __post_init__(self):
        img = np.asarray(self.image, dtype=complex)
        if img.ndim != 2 or img.size == 0:
            raise DimensionError(f"expected a non-empty 2-D raster, got shape {img.shape}")
        _check_finite(img, "field")
        img = img.copy()
        img.setflags(write=False)
        object.__setattr__(self, "image", img)

    @classmethod
    def from_vector(cls, data, rows, cols):
        data = np.asarray(data, dtype=complex).ravel()
        if rows <= 0 or cols <= 0 or data.size != rows * cols:
            raise DimensionError(f"vector of length {data.size} does not fit {rows}x{cols}")
        return cls(data.reshape((rows, cols), order="F"))

    @classmethod
    def from_polar(cls, amplitude, phase):
        return cls(np.asarray(amplitude, dtype=float) * np.exp(1j * np.asarray(phase, dtype=float)))

    @property
    def rows(self):
        return self.image.shape[0]

    @property
    def cols(self):
        return self.image.shape[1]

    @property
    def shape(self):
        return self.image.shape

    @property
    def n(self):
        return self.image.size

    @property
    def data(self):
        """Column-major vectorization of the raster."""
        return self.image.ravel(order="F")

    @property
    def amplitude(self):
        return np.abs(self.image)

    @property
    def phase(self):
        """Interferometric (wrapped) phase."""
        return angle(self.image)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.image
        return self.image.astype(dtype)


def as_image(x):
    """Return a 2-D complex array for a ``ComplexField`` or array-like."""
    if isinstance(x, ComplexField):
        return x.image
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D raster, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PatchGrid:
    """Square ``w x w`` patches laid out on a raster without wraparound.

    Patch ``i`` has its top-left pixel at ``positions[i]``.  Positions are
    enumerated column-major (row offset fastest), matching the vectorization
    used everywhere else.
    """

    rows: int
    cols: int
    w: int
    stride: int = 1
    positions: np.ndarray = field(init=False, repr=False)
    multiplicity: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.w <= 0 or self.stride <= 0:
            raise ValueError("patch side and stride must be positive")
        if self.rows < self.w or self.cols < self.w:
            raise DimensionError(f"patch side {self.w} exceeds raster {self.rows}x{self.cols}")
        r0 = np.arange(0, self.rows - self.w + 1, self.stride)
        c0 = np.arange(0, self.cols - self.w + 1, self.stride)
        cc, rr = np.meshgrid(c0, r0)
        pos = np.stack([rr.ravel(order="F"), cc.ravel(order="F")], axis=1)
        pos.setflags(write=False)
        mu = np.zeros((self.rows, self.cols), dtype=np.int64)
        for dr in range(self.w):
            for dc in range(self.w):
                mu[r0[0] + dr:r0[-1] + dr + 1:self.stride,
                   c0[0] + dc:c0[-1] + dc + 1:self.stride] += 1
        mu.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "multiplicity", mu)
        object.__setattr__(self, "_n_r", len(r0))
        object.__setattr__(self, "_n_c", len(c0))

    @property
    def count(self):
        """Number of patches, ``|I_p|``."""
        return len(self.positions)

    @property
    def dim(self):
        """Patch vector length ``w**2``."""
        return self.w * self.w

    @property
    def grid_shape(self):
        return self._n_r, self._n_c

    def covers_all(self):
        return bool(np.all(self.multiplicity > 0))


@dataclass(frozen=True)
class PatchSet:
    """Patch vectors stored as the columns of a ``(w**2, |I_p|)`` matrix."""

    patches: np.ndarray
    grid: PatchGrid

    def __post_init__(self):
        p = np.asarray(self.patches)
        if p.shape != (self.grid.dim, self.grid.count):
            raise DimensionError(
                f"patch matrix shape {p.shape} does not match grid "
                f"({self.grid.dim}, {self.grid.count})")

    def __len__(self):
        return self.grid.count


def extract_patches(x, grid):
    """Apply every ``R_i`` to ``x``.

    Parameters
    ----------
    x : ComplexField or ndarray
        Raster of shape ``(grid.rows, grid.cols)``.
    grid : PatchGrid

    Returns
    -------
    PatchSet
        Column ``i`` is the window at ``grid.positions[i]`` flattened
        column-major.
    """
    img = as_image(x)
    if img.shape != (grid.rows, grid.cols):
        raise DimensionError(f"field shape {img.shape} does not match grid {(grid.rows, grid.cols)}")
    win = np.lib.stride_tricks.sliding_window_view(img, (grid.w, grid.w))
    win = win[::grid.stride, ::grid.stride]
    # (n_r, n_c, w_r, w_c) -> (w_c, w_r, n_c, n_r); C-order reshape then
    # yields row-fastest order both inside a patch and across positions
    block = np.ascontiguousarray(win.transpose(3, 2, 1, 0))
    return PatchSet(block.reshape(grid.dim, grid.count), grid)


def scatter_patches(patches, grid):
    """Sum of patches put back at their locations, ``sum_i R_i^H p_i``."""
    p = np.asarray(patches.patches if isinstance(patches, PatchSet) else patches)
    if p.shape != (grid.dim, grid.count):
        raise DimensionError(f"patch matrix shape {p.shape} does not match grid")
    n_r, n_c = grid.grid_shape
    block = p.reshape(grid.w, grid.w, n_c, n_r)
    acc = np.zeros((grid.rows, grid.cols), dtype=np.result_type(p.dtype, float))
    s = grid.stride
    for dc in range(grid.w):
        for dr in range(grid.w):
            acc[dr:dr + s * (n_r - 1) + 1:s, dc:dc + s * (n_c - 1) + 1:s] += block[dc, dr].T
    return acc


def aggregate_patches(patches, grid=None):
    """Average overlapping patches back into a raster.

    Returns ``(sum_i R_i^H R_i)^{-1} sum_i R_i^H p_i`` as a ``ComplexField``.
    """
    if grid is None:
        grid = patches.grid
    if not grid.covers_all():
        raise UncoveredPixelError("some pixels are not covered by any patch")
    acc = scatter_patches(patches, grid)
    return ComplexField(acc / grid.multiplicity)


def global_phase_offset(estimate, truth):
    """Constant phase ``c`` best aligning ``exp(j c) * estimate`` to truth."""
    est, tru = as_image(estimate), as_image(truth)
    return float(np.angle(np.sum(np.exp(1j * (angle(tru) - angle(est))))))


def rmse_wrapped(estimate, truth, align_global_phase=True):
    """Root mean square of the wrapped phase error, in radians.

    With ``align_global_phase`` the constant offset that best aligns the two
    phase maps (the one maximizing ``|sum exp(j (psi_hat - psi))|``) is removed
    first; intensity measurements cannot determine it.
    """
    est, tru = as_image(estimate), as_image(truth)
    if est.shape != tru.shape:
        raise DimensionError(f"shape mismatch {est.shape} vs {tru.shape}")
    diff = angle(est) - angle(tru)
    if align_global_phase:
        diff = diff - np.angle(np.sum(np.exp(1j * diff)))
    return float(np.sqrt(np.mean(wrap(diff) ** 2)))
