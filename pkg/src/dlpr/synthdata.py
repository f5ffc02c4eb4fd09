"""Synthetic phase surfaces, amplitude-phase coupling groups and the test corpus."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import ComplexField, DimensionError

SURFACE_KINDS = ("gaussian", "truncated_gaussian", "mountain", "quadratic", "shear_plane",
                 "alternate_octant_gaussian")
COUPLINGS = {1: "none", 2: "unit", 3: "normalized_abs", 4: "abs_cos15"}


@dataclass(frozen=True)
class SurfaceSpec:
    """Parametric surface on a ``rows x cols`` raster.

    ``peak`` is the largest phase value of the generated raster.
    ``width`` is the Gaussian standard deviation as a fraction of the smaller
    side, ``radius`` the truncation disk radius (same units), ``smoothness``
    the mountain low-pass width as a fraction of the smaller side.
    """

    kind: str
    rows: int = 100
    cols: int = 100
    peak: float = 8.0
    width: float = 1.0 / 6.0
    radius: float = 1.0 / 3.0
    smoothness: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}; expected one of {SURFACE_KINDS}")
        if self.rows < 1 or self.cols < 1:
            raise DimensionError(f"invalid raster size {self.rows}x{self.cols}")
        if not np.isfinite(self.peak):
            raise ValueError("peak must be finite")
        if not (self.width > 0 and self.radius > 0 and self.smoothness > 0):
            raise ValueError("shape parameters must be positive")

    def with_size(self, rows, cols):
        return SurfaceSpec(self.kind, rows, cols, self.peak, self.width, self.radius,
                           self.smoothness, self.seed)


@dataclass(frozen=True)
class GroupSpec:
    """Amplitude model ``a = k0 + k1 * f(psi)`` selected by group number."""

    group: int
    k0: float = 1.0
    k1: float = 1.0
    coupling: str = field(default="")

    def __post_init__(self):
        if self.group not in COUPLINGS:
            raise ValueError(f"group must be one of 1..4, got {self.group}")
        if not self.coupling:
            object.__setattr__(self, "coupling", COUPLINGS[self.group])
        elif self.coupling != COUPLINGS[self.group]:
            raise ValueError(f"group {self.group} uses coupling {COUPLINGS[self.group]!r}")


def _centered(rows, cols):
    r = np.arange(rows) - (rows - 1) / 2.0
    c = np.arange(cols) - (cols - 1) / 2.0
    return np.meshgrid(r, c, indexing="ij")


def _gaussian(spec):
    rr, cc = _centered(spec.rows, spec.cols)
    s = spec.width * min(spec.rows, spec.cols)
    return spec.peak * np.exp(-(rr ** 2 + cc ** 2) / (2.0 * s * s))


def octant_index(rows, cols):
    """Angular bin ``k`` with ``atan2 mod 2 pi`` in ``[k pi/4, (k+1) pi/4)`` around the center."""
    rr, cc = _centered(rows, cols)
    ang = np.mod(np.arctan2(rr, cc), 2.0 * np.pi)
    return np.minimum((ang // (np.pi / 4)).astype(int), 7)


def make_surface(spec: SurfaceSpec):
    """Real phase raster in radians for ``spec``."""
    rows, cols = spec.rows, spec.cols
    if spec.kind == "gaussian":
        out = _gaussian(spec)
    elif spec.kind == "truncated_gaussian":
        rr, cc = _centered(rows, cols)
        rad = spec.radius * min(rows, cols)
        out = np.where(rr ** 2 + cc ** 2 <= rad * rad, _gaussian(spec), 0.0)
    elif spec.kind == "alternate_octant_gaussian":
        out = np.where(octant_index(rows, cols) % 2 == 1, 0.0, _gaussian(spec))
    elif spec.kind == "quadratic":
        rr, cc = _centered(rows, cols)
        rn = rr / max((rows - 1) / 2.0, 1.0)
        cn = cc / max((cols - 1) / 2.0, 1.0)
        out = spec.peak * (rn ** 2 + cn ** 2) / 2.0
    elif spec.kind == "shear_plane":
        rn = np.arange(rows)[:, None] / max(rows - 1, 1)
        cn = np.arange(cols)[None, :] / max(cols - 1, 1)
        out = spec.peak * (rn + cn) / 2.0
    else:  # mountain
        rng = np.random.default_rng(spec.seed)
        noise = rng.standard_normal((rows, cols))
        terrain = gaussian_filter(noise, spec.smoothness * min(rows, cols), mode="reflect")
        out = terrain - terrain.min()
    # the raster maximum of |psi| is pinned to |peak|, also when the analytic peak falls between pixels
    out = np.asarray(out, dtype=float)
    top = np.max(np.abs(out))
    return out * (abs(spec.peak) / top) if top > 0 else np.zeros((rows, cols))


def amplitude_for(phase, group: GroupSpec, amp_surface=None):
    """Amplitude raster for a phase raster under a coupling group."""
    psi = np.asarray(phase, dtype=float)
    if group.group == 1:
        return np.ones_like(psi)
    if group.group == 2:
        if amp_surface is None:
            raise ValueError("group 2 needs an independent amplitude surface")
        s = np.asarray(amp_surface, dtype=float)
        if s.shape != psi.shape:
            raise DimensionError("amplitude surface shape does not match the phase")
        top = np.max(np.abs(s))
        return group.k0 + group.k1 * (s / top if top > 0 else s)
    if group.group == 3:
        top = np.max(np.abs(psi))
        return group.k0 + group.k1 * (np.abs(psi) / top if top > 0 else 0.0 * psi)
    return group.k0 + group.k1 * np.abs(np.cos(15.0 * psi))


def make_signal(phase_spec: SurfaceSpec, group: GroupSpec, amp_spec: SurfaceSpec | None = None):
    """Complex test image ``a * exp(j psi)``."""
    psi = make_surface(phase_spec)
    amp_surface = None
    if group.group == 2:
        if amp_spec is None:
            raise ValueError("group 2 signals need amp_spec")
        amp_surface = make_surface(amp_spec.with_size(phase_spec.rows, phase_spec.cols))
    return ComplexField.from_polar(amplitude_for(psi, group, amp_surface), psi)


@dataclass(frozen=True)
class CorpusEntry:
    number: int
    name: str
    phase: SurfaceSpec
    group: GroupSpec
    amplitude: SurfaceSpec | None = None

    def signal(self, rows=None, cols=None):
        phase = self.phase if rows is None else self.phase.with_size(rows, cols or rows)
        return make_signal(phase, self.group, self.amplitude)


def corpus_table(rows=100, cols=100, peak=8.0):
    """The nine simulated test images, numbered 1 to 9."""
    tg = SurfaceSpec("truncated_gaussian", rows, cols, peak)
    sh = SurfaceSpec("shear_plane", rows, cols, peak)
    amp = {k: SurfaceSpec(k, rows, cols, 1.0, seed=1) for k in ("mountain", "quadratic", "gaussian")}
    g1, g2, g3, g4 = (GroupSpec(g) for g in (1, 2, 3, 4))
    rows_ = [
        ("constant amplitude, truncated gaussian phase", tg, g1, None),
        ("constant amplitude, shear plane phase", sh, g1, None),
        ("mountain amplitude, shear plane phase", sh, g2, amp["mountain"]),
        ("quadratic amplitude, truncated gaussian phase", tg, g2, amp["quadratic"]),
        ("gaussian amplitude, shear plane phase", sh, g2, amp["gaussian"]),
        ("high similarity, truncated gaussian phase", tg, g3, None),
        ("high similarity, shear plane phase", sh, g3, None),
        ("less similarity, truncated gaussian phase", tg, g4, None),
        ("less similarity, shear plane phase", sh, g4, None),
    ]
    return [CorpusEntry(i + 1, n, p, g, a) for i, (n, p, g, a) in enumerate(rows_)]


def corpus_entry(number, rows=100, cols=100, peak=8.0):
    table = corpus_table(rows, cols, peak)
    if not 1 <= number <= len(table):
        raise ValueError(f"corpus row must be in 1..{len(table)}, got {number}")
    return table[number - 1]


def quarter_gaussians(rows=100, cols=100, peak=8.0):
    """A Gaussian plus four copies each keeping a single quadrant, zero elsewhere."""
    base = _gaussian(SurfaceSpec("gaussian", rows, cols, peak))
    rr, cc = _centered(rows, cols)
    quads = [(rr < 0) & (cc < 0), (rr < 0) & (cc >= 0), (rr >= 0) & (cc < 0), (rr >= 0) & (cc >= 0)]
    return [base] + [np.where(q, base, 0.0) for q in quads]


def prior_training_set(rows=100, cols=100, peak=8.0):
    """Clean unit-amplitude complex images for class-specific dictionary training."""
    return [ComplexField.from_polar(np.ones((rows, cols)), psi)
            for psi in quarter_gaussians(rows, cols, peak)]


def textured_scene(rows=64, cols=64, peak=8.0, seed=0):
    """Unit-amplitude signal with a mountain (rough terrain) phase."""
    return make_signal(SurfaceSpec("mountain", rows, cols, peak, seed=seed), GroupSpec(1))
