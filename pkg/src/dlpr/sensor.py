"""Sensor-plane models: noisy observation simulation, SNR and amplitude filters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import DimensionError
from .optics import MaskSet, intensities


@dataclass(frozen=True)
class Poisson:
    """Photon-counting noise, ``z ~ P(chi * y)``."""

    chi: float

    def __post_init__(self):
        if not (np.isfinite(self.chi) and self.chi > 0):
            raise ValueError(f"chi must be a positive finite number, got {self.chi}")


@dataclass(frozen=True)
class Gaussian:
    """Additive white noise of standard deviation ``sigma`` on intensities."""

    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be a positive finite number, got {self.sigma}")


@dataclass(frozen=True)
class Noiseless:
    """Exact intensities; the sensor step becomes a magnitude projection."""


NoiseModel = Union[Poisson, Gaussian, Noiseless]


def model_to_dict(model):
    if isinstance(model, Poisson):
        return {"model": "poisson", "chi": model.chi}
    if isinstance(model, Gaussian):
        return {"model": "gaussian", "sigma": model.sigma}
    if isinstance(model, Noiseless):
        return {"model": "noiseless"}
    raise TypeError(f"unknown noise model {model!r}")


def model_from_dict(d):
    kind = d.get("model")
    if kind == "poisson":
        return Poisson(float(d["chi"]))
    if kind == "gaussian":
        return Gaussian(float(d["sigma"]))
    if kind == "noiseless":
        return Noiseless()
    raise ValueError(f"unknown noise model {kind!r}")


@dataclass(frozen=True)
class ObservationSet:
    """``S`` measured intensity rasters together with their noise model."""

    z: np.ndarray
    model: NoiseModel
    seed: int | None = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 3 or 0 in z.shape:
            raise DimensionError(f"observations must be (S, rows, cols), got {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ValueError("observations contain non-finite values")
        if isinstance(self.model, Poisson):
            if np.any(z < 0) or np.any(z != np.round(z)):
                raise ValueError("Poisson observations must be nonnegative integers")
        elif isinstance(self.model, Noiseless) and np.any(z < 0):
            raise ValueError("noiseless intensities must be nonnegative")
        z = z.copy()
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def count(self):
        return self.z.shape[0]

    @property
    def shape(self):
        return self.z.shape[1:]


def _streams(seed, count):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def simulate_poisson(x, masks: MaskSet, chi, seed):
    """Photon counts ``z_s[l] ~ Poisson(chi * |A_s x|^2[l])``, one RNG stream per mask."""
    model = Poisson(chi)
    y = intensities(x, masks)
    z = np.stack([rng.poisson(y[s] * model.chi) for s, rng in enumerate(_streams(seed, masks.count))])
    return ObservationSet(z.astype(float), model, seed)


def simulate_gaussian(x, masks: MaskSet, sigma, seed):
    """Intensities ``z_s = |A_s x|^2 + sigma * eps_s`` with standard normal ``eps_s``."""
    model = Gaussian(sigma)
    y = intensities(x, masks)
    z = np.stack([y[s] + model.sigma * rng.standard_normal(y[s].shape)
                  for s, rng in enumerate(_streams(seed, masks.count))])
    return ObservationSet(z, model, seed)


def simulate_noiseless(x, masks: MaskSet):
    return ObservationSet(intensities(x, masks), Noiseless())


def snr_pointwise(y, chi):
    """Poisson SNR of a single measurement, ``E^2 / Var = y * chi``."""
    if chi <= 0:
        raise ValueError("chi must be positive")
    return np.asarray(y, dtype=float) * chi


def snr_global(y, chi):
    """Global Poisson SNR ``chi * sum(y^2) / sum(y)`` over all masks and pixels."""
    if chi <= 0:
        raise ValueError("chi must be positive")
    y = np.asarray(y, dtype=float)
    total = y.sum()
    if total <= 0:
        raise ValueError("SNR undefined for all-zero intensities")
    return float(chi * np.sum(y * y) / total)


def to_db(ratio):
    return float(10.0 * np.log10(ratio))


def from_db(db):
    return float(10.0 ** (db / 10.0))


def snr_global_db(y, chi):
    return to_db(snr_global(y, chi))


def gaussian_sigma_for_snr(y, snr_db):
    """Noise level giving ``mean(y^2) / sigma^2`` equal to ``snr_db``."""
    y = np.asarray(y, dtype=float)
    return float(np.sqrt(np.mean(y * y) / from_db(snr_db)))


def intensity_scale_for_snr(x, masks, chi=1e-5, snr_db=-7.0):
    """Amplitude factor ``c`` with ``snr_global(|A_s c x|^2, chi)`` at ``snr_db``.

    The global SNR is proportional to ``c**2``, so the factor is exact.
    """
    return float(np.sqrt(from_db(snr_db) / snr_global(intensities(x, masks), chi)))


def sensor_filter_poisson(v_abs, z, gamma, chi):
    """Proximal amplitude update for the Poisson likelihood.

    Minimizer over ``b >= 0`` of ``b^2 chi - z log(b^2 chi) + (b - |v|)^2 / gamma``::

        b = (|v| + sqrt(|v|^2 + 4 z gamma (1 + gamma chi))) / (2 (1 + gamma chi))
    """
    if np.any(np.asarray(gamma) <= 0) or np.any(np.asarray(chi) <= 0):
        raise ValueError("gamma and chi must be positive")
    v_abs = np.asarray(v_abs, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("Poisson counts must be nonnegative")
    k = 1.0 + gamma * chi
    return (v_abs + np.sqrt(v_abs * v_abs + 4.0 * z * gamma * k)) / (2.0 * k)


def _largest_real_root(p, q):
    """Largest real root of the depressed cubic ``b^3 + p b + q``, vectorized."""
    p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    root = np.empty(p.shape)

    one = disc > 0
    if np.any(one):
        pp, qq, dd = p[one], q[one], disc[one]
        h = -qq / 2.0
        w1 = np.cbrt(h + np.copysign(np.sqrt(dd), h))
        w2 = -pp / (3.0 * w1)
        # w1 + w2 rewritten as a quotient with a positive denominator
        root[one] = 2.0 * h / (w1 * w1 - w1 * w2 + w2 * w2)

    three = ~one
    if np.any(three):
        pp, qq = p[three], q[three]
        r = np.zeros(pp.shape)
        nz = pp < 0
        m = np.sqrt(-pp[nz] / 3.0)
        cos_arg = np.clip(3.0 * qq[nz] / (2.0 * pp[nz]) / m, -1.0, 1.0)
        r[nz] = 2.0 * m * np.cos(np.arccos(cos_arg) / 3.0)
        root[three] = r

    # one Newton polish step
    f = root ** 3 + p * root + q
    fp = 3.0 * root * root + p
    ok = np.abs(fp) > 1e-300
    root = np.where(ok, root - np.divide(f, fp, out=np.zeros_like(f), where=ok), root)
    return root


def sensor_filter_gaussian(v_abs, z, gamma, sigma):
    """Proximal amplitude update for the Gaussian likelihood.

    Solves the Cardan equation ``b^3 + C b + D = 0`` with
    ``C = sigma^2 / (2 gamma) - z`` and ``D = -sigma^2 |v| / (2 gamma)``.
    For ``D < 0`` the cubic has exactly one positive root; for ``D = 0`` the
    objective ``(b^2 - z)^2 / sigma^2 + (b - |v|)^2 / gamma`` is minimized by
    the largest real root as well, so that root is always returned.
    """
    if np.any(np.asarray(gamma) <= 0) or np.any(np.asarray(sigma) <= 0):
        raise ValueError("gamma and sigma must be positive")
    v_abs = np.asarray(v_abs, dtype=float)
    z = np.asarray(z, dtype=float)
    kappa = sigma * sigma / (2.0 * gamma)
    b = _largest_real_root(kappa - z, -kappa * v_abs)
    return np.maximum(b, 0.0)


def amplitude_update(v_abs, z, model, gamma):
    """Model-dispatched sensor amplitude ``b``."""
    if isinstance(model, Poisson):
        return sensor_filter_poisson(v_abs, z, gamma, model.chi)
    if isinstance(model, Gaussian):
        return sensor_filter_gaussian(v_abs, z, gamma, model.sigma)
    if isinstance(model, Noiseless):
        return np.sqrt(np.maximum(np.asarray(z, dtype=float), 0.0))
    raise TypeError(f"unknown noise model {model!r}")


def sensor_update(v, obs: ObservationSet, gamma):
    """Sensor-plane filtering ``u_s = b_s * exp(j angle(v_s))`` for a stack ``v``."""
    v = np.asarray(v)
    if v.shape != obs.z.shape:
        raise DimensionError(f"propagated stack {v.shape} does not match observations {obs.z.shape}")
    mag = np.abs(v)
    b = amplitude_update(mag, obs.z, obs.model, gamma)
    # angle(0) = 0: unit phasor where v vanishes
    phasor = np.divide(v, mag, out=np.ones_like(v), where=mag > 0)
    return b * phasor


def data_fidelity(u, obs: ObservationSet):
    """Sum of the per-measurement negative log-likelihood terms ``g_s(u_s[l])``.

    Poisson: ``|u|^2 chi - z log(|u|^2 chi)``, with the ``z log`` term dropped
    where ``z = 0`` and ``+inf`` where ``u = 0 < z``.  Gaussian:
    ``(|u|^2 - z)^2 / sigma^2``.  Noiseless: unweighted ``(|u|^2 - z)^2``.
    """
    p = np.abs(np.asarray(u)) ** 2
    z = obs.z
    model = obs.model
    if isinstance(model, Poisson):
        s = p * model.chi
        pos = z > 0
        if np.any(pos & (s <= 0)):
            return float("inf")
        log_term = np.zeros_like(s)
        log_term[pos] = z[pos] * np.log(s[pos])
        return float(np.sum(s) - np.sum(log_term))
    if isinstance(model, Gaussian):
        return float(np.sum((p - z) ** 2) / model.sigma ** 2)
    return float(np.sum((p - z) ** 2))
