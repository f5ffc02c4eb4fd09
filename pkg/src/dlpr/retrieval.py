"""Alternating-minimization phase retrieval drivers.

``dlpr`` learns the dictionary online while retrieving, ``dlpr_prior`` keeps a
fixed pre-learned dictionary, and ``gsf`` is the same loop with the
object-plane sparse modeling removed.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (ComplexField, DimensionError, PatchGrid, PatchSet, as_image, extract_patches,
                   aggregate_patches, rmse_wrapped, scatter_patches)
from .optics import MaskSet, propagate_adjoint, propagate_forward
from .sensor import Gaussian, Noiseless, ObservationSet, Poisson, data_fidelity, sensor_update
from .sparse import Dictionary, OnlineDictionaryLearner, init_dictionary, omp_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters.

    ``gamma`` and ``beta`` default (when ``None``) to the noise-model
    settings: Poisson ``gamma = 1/chi``, ``beta = chi/1000``; Gaussian
    ``gamma = sigma^2/10``, ``beta = 0.01/sigma^2``; noiseless ``gamma = 1``,
    ``beta = 1e-3``.

    ``delta`` is the OMP squared-residual tolerance per patch.  When ``None`` it
    is set every iteration to ``delta_scale * w**2 * var`` where ``var`` is the
    per-pixel noise variance of the back-propagated estimate, measured from
    the spread of the ``S`` individual back-propagations ``A_s^H u_s``.

    ``codl_lambda`` is the BPDN weight for patches normalized by the RMS
    amplitude of the current estimate.  Each outer iteration runs
    ``codl_batches`` C-ODL mini-batches warm-started from the previous
    dictionary and statistics; ``None`` means one pass
    (``|I_p| // batch_size`` mini-batches).  ``max_atoms`` defaults to
    ``w**2 // 2``.
    """

    gamma: float | None = None
    beta: float | None = None
    tau_a: float = 0.0
    delta: float | None = None
    delta_scale: float = 2.0
    max_atoms: int | None = None
    n_iter: int = 20
    patch_side: int = 10
    stride: int = 1
    dict_size: int = 256
    codl_lambda: float = 0.5
    batch_size: int = 256
    codl_batches: int | None = 4
    codl_bpdn_iter: int = 20
    bcd_tol: float = 1e-6
    bcd_max_sweeps: int = 5
    init_mode: str = "flat"
    seed: int = 0

    def __post_init__(self):
        for name in ("gamma", "beta"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if self.patch_side < 1 or self.stride < 1:
            raise ValueError("patch_side and stride must be positive")
        if self.tau_a < 0 or (self.delta is not None and self.delta < 0) or self.delta_scale < 0:
            raise ValueError("tau_a, delta and delta_scale must be nonnegative")
        if self.init_mode not in ("flat", "random"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")

    def weights(self, model):
        """Resolved ``(gamma, beta)`` for a noise model."""
        if isinstance(model, Poisson):
            g, b = 1.0 / model.chi, model.chi / 1000.0
        elif isinstance(model, Gaussian):
            g, b = model.sigma ** 2 / 10.0, 0.01 / model.sigma ** 2
        else:
            g, b = 1.0, 1e-3
        return (self.gamma if self.gamma is not None else g,
                self.beta if self.beta is not None else b)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class RetrievalResult:
    x: ComplexField
    trace: list
    dictionary: Dictionary | None = None
    codes: np.ndarray | None = None
    grid: PatchGrid | None = None

    @property
    def rmse_trace(self):
        return [row.get("rmse") for row in self.trace]

    @property
    def iterations(self):
        return len(self.trace)


def _check_inputs(obs, masks):
    if not isinstance(obs, ObservationSet) or not isinstance(masks, MaskSet):
        raise TypeError("expected an ObservationSet and a MaskSet")
    if obs.z.shape != masks.phases.shape:
        raise DimensionError(f"observations {obs.z.shape} do not match masks {masks.phases.shape}")


def initialize_wavefront(obs, masks, mode="flat", seed=0):
    """Starting estimate: uniform amplitude matched to the mean intensity.

    Because ``A_s`` is unitary the mean of ``y_s`` equals the mean of
    ``|x|^2``.  ``mode="flat"`` uses zero phase, ``mode="random"`` a seeded
    uniform phase in ``[-pi, pi)``.
    """
    _check_inputs(obs, masks)
    model = obs.model
    if isinstance(model, Poisson):
        level = np.mean(obs.z) / model.chi
    elif isinstance(model, Gaussian):
        level = max(float(np.mean(obs.z)), 1e-12)
    else:
        level = float(np.mean(obs.z))
    amp = np.sqrt(max(level, 0.0))
    shape = masks.shape
    if mode == "flat":
        return ComplexField(np.full(shape, amp, dtype=complex))
    if mode == "random":
        rng = np.random.default_rng(seed)
        return ComplexField(amp * np.exp(1j * rng.uniform(-np.pi, np.pi, size=shape)))
    raise ValueError(f"unknown init mode {mode!r}")


def x_update(u_all, masks, gamma, beta, coded=None, grid=None):
    """Object-plane least-squares step.

    Solves ``min_x (1/gamma) sum_s ||u_s - A_s x||^2 + beta sum_i ||R_i x - c_i||^2``
    for coded patches ``c_i = D alpha_i``; the normal matrix is diagonal with
    entries ``S / (beta gamma) + mu_j``.  With ``coded=None`` the patch term is
    absent and the result is the plain average ``(1/S) sum_s A_s^H u_s``.
    """
    back = propagate_adjoint(u_all, masks).sum(axis=0)
    S = masks.count
    if coded is None:
        return back / S
    if isinstance(coded, PatchSet):
        grid = coded.grid
    if grid is None:
        raise ValueError("x_update with coded patches needs their PatchGrid")
    bg = beta * gamma
    num = back / bg + scatter_patches(coded, grid)
    return num / (S / bg + grid.multiplicity)


def noise_variance(u_all, masks):
    """Per-pixel noise variance of ``mean_s A_s^H u_s`` estimated from its spread."""
    S = masks.count
    if S < 2:
        return 0.0
    back = propagate_adjoint(u_all, masks)
    spread = np.sum(np.abs(back - back.mean(axis=0)) ** 2, axis=0) / (S - 1)
    return float(np.mean(spread) / S)


def objective_value(x, u_all, codes, D, obs, masks, grid, gamma, beta, tau_a=0.0):
    """Full variational objective.

    ``sum g_s(u_s) + (1/gamma) sum ||u_s - A_s x||^2
    + sum_i (tau_a ||alpha_i||_0 + beta ||R_i x - D alpha_i||^2)``.  Without a
    dictionary (``D=None``) the sparse terms are dropped.
    """
    img = as_image(x)
    val = data_fidelity(u_all, obs)
    val += float(np.sum(np.abs(u_all - propagate_forward(img, masks)) ** 2)) / gamma
    if D is not None:
        atoms = D.atoms if isinstance(D, Dictionary) else np.asarray(D)
        resid = extract_patches(img, grid).patches - atoms @ codes
        val += tau_a * float(np.count_nonzero(codes)) + beta * float(np.sum(np.abs(resid) ** 2))
    return val


class _Run:
    """One retrieval run; holds the loop state so checkpoints can restore it."""

    def __init__(self, obs, masks, cfg, truth, mode, D_prior=None):
        _check_inputs(obs, masks)
        self.obs, self.masks, self.cfg, self.mode = obs, masks, cfg, mode
        self.truth = None if truth is None else as_image(truth)
        if self.truth is not None and self.truth.shape != masks.shape:
            raise DimensionError("truth shape does not match observations")
        self.gamma, self.beta = cfg.weights(obs.model)
        self.x = as_image(initialize_wavefront(obs, masks, cfg.init_mode, cfg.seed)).copy()
        self.trace = []
        self.t = 0
        self.grid = None
        self.coded = None
        self.codes = None
        self.learner = None
        self.D = None
        if mode == "gsf":
            return
        rows, cols = masks.shape
        self.grid = PatchGrid(rows, cols, cfg.patch_side, cfg.stride)
        self.coded = np.zeros((self.grid.dim, self.grid.count), dtype=complex)
        self.max_atoms = cfg.max_atoms if cfg.max_atoms is not None else max(1, self.grid.dim // 2)
        if mode == "prior":
            if D_prior is None:
                raise ValueError("prior-plugged retrieval needs a dictionary")
            if D_prior.w != cfg.patch_side:
                raise DimensionError(f"dictionary patch side {D_prior.w} != configured {cfg.patch_side}")
            self.D = D_prior

    def step(self):
        cfg, masks = self.cfg, self.masks
        tic = time.perf_counter()
        self.t += 1
        v = propagate_forward(self.x, masks)
        u = sensor_update(v, self.obs, self.gamma)
        row = {"iteration": self.t}
        if self.mode == "gsf":
            self.x = x_update(u, masks, self.gamma, self.beta)
            row["data_fidelity"] = data_fidelity(u, self.obs)
            row["objective"] = objective_value(self.x, u, None, None, self.obs, masks, None,
                                               self.gamma, self.beta)
        else:
            grid = self.grid
            x_half = x_update(u, masks, self.gamma, self.beta, self.coded, grid)
            patches = extract_patches(x_half, grid).patches
            var = noise_variance(u, masks)
            if self.mode == "dlpr":
                self._learn(patches, x_half)
            delta = cfg.delta if cfg.delta is not None else cfg.delta_scale * grid.dim * var
            atoms = self.D.atoms
            self.codes = omp_batch(patches, atoms, delta, self.max_atoms)
            self.coded = atoms @ self.codes
            row["data_fidelity"] = data_fidelity(u, self.obs)
            row["patch_residual"] = float(np.sum(np.abs(patches - self.coded) ** 2))
            row["objective"] = objective_value(x_half, u, self.codes, atoms, self.obs, masks, grid,
                                               self.gamma, self.beta, cfg.tau_a)
            row["delta"] = float(delta)
            row["mean_atoms"] = float(np.count_nonzero(self.codes) / grid.count)
            self.x = as_image(aggregate_patches(self.coded, grid)).copy()
        if self.truth is not None:
            row["rmse"] = rmse_wrapped(self.x, self.truth, align_global_phase=True)
        row["seconds"] = time.perf_counter() - tic
        self.trace.append(row)
        log.debug("iteration %d: %s", self.t, row)
        return row

    def _learn(self, patches, x_half):
        cfg = self.cfg
        scale = float(np.sqrt(np.mean(np.abs(x_half) ** 2)))
        scale = scale if scale > 0 else 1.0
        normed = patches / scale
        if self.learner is None:
            D0 = init_dictionary(normed, cfg.dict_size, seed=cfg.seed)
            self.learner = OnlineDictionaryLearner(
                D0, cfg.codl_lambda, batch_size=cfg.batch_size, seed=cfg.seed,
                bpdn_iter=cfg.codl_bpdn_iter, bcd_tol=cfg.bcd_tol, bcd_max_sweeps=cfg.bcd_max_sweeps)
        n_batches = cfg.codl_batches
        if n_batches is None:
            n_batches = max(1, self.grid.count // cfg.batch_size)
        self.learner.partial_fit(normed, n_iter=n_batches)
        self.D = self.learner.dictionary

    # ---- checkpointing

    def save(self, path):
        arrays = {"x": self.x, "t": np.array(self.t)}
        if self.coded is not None:
            arrays["coded"] = self.coded
        if self.codes is not None:
            arrays["codes"] = self.codes
        meta = {"mode": self.mode, "trace": self.trace, "config": self.cfg.to_dict()}
        if self.learner is not None:
            st = self.learner.state()
            arrays.update(D=st["D"], A=st["A"], B=st["B"])
            meta["learner"] = {"t": st["t"], "rng": st["rng"]}
        arrays["meta"] = np.array(json.dumps(meta))
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp.npz")
        np.savez(tmp, **arrays)
        tmp.replace(path)

    def load(self, path):
        with np.load(path, allow_pickle=False) as f:
            meta = json.loads(str(f["meta"]))
            if meta["mode"] != self.mode:
                raise ValueError(f"checkpoint is for {meta['mode']!r}, not {self.mode!r}")
            self.x = f["x"].copy()
            self.t = int(f["t"])
            self.trace = meta["trace"]
            if "coded" in f:
                self.coded = f["coded"].copy()
            if "codes" in f:
                self.codes = f["codes"].copy()
            if "learner" in meta:
                cfg = self.cfg
                self.learner = OnlineDictionaryLearner(
                    f["D"], cfg.codl_lambda, batch_size=cfg.batch_size, seed=cfg.seed,
                    bpdn_iter=cfg.codl_bpdn_iter, bcd_tol=cfg.bcd_tol, bcd_max_sweeps=cfg.bcd_max_sweeps)
                self.learner.load_state({"D": f["D"], "A": f["A"], "B": f["B"],
                                         "t": meta["learner"]["t"], "rng": meta["learner"]["rng"]})
                self.D = self.learner.dictionary

    def result(self):
        D = self.D if self.mode != "gsf" else None
        return RetrievalResult(ComplexField(self.x), list(self.trace), D, self.codes, self.grid)


def _drive(run, n_iter, checkpoint, checkpoint_every, resume, callback):
    if checkpoint is not None and resume and Path(checkpoint).exists():
        run.load(checkpoint)
    while run.t < n_iter:
        row = run.step()
        if callback is not None:
            callback(row)
        if checkpoint is not None and (run.t % checkpoint_every == 0 or run.t == n_iter):
            run.save(checkpoint)
    return run.result()


def dlpr(obs, masks, cfg=None, truth=None, checkpoint=None, checkpoint_every=1, resume=False,
         callback=None):
    """Dictionary-learning phase retrieval.

    Each iteration: forward propagation, sensor filtering, x-update, patch
    extraction, online dictionary update, OMP coding, sparse reconstruction
    of the patches and aggregation.  ``truth`` only feeds the RMSE trace.
    With ``checkpoint`` set, the state is written there every
    ``checkpoint_every`` iterations, and ``resume=True`` continues from it.
    """
    cfg = cfg or SolverConfig()
    run = _Run(obs, masks, cfg, truth, "dlpr")
    return _drive(run, cfg.n_iter, checkpoint, checkpoint_every, resume, callback)


def dlpr_prior(obs, masks, cfg, D_prior, truth=None, checkpoint=None, checkpoint_every=1,
               resume=False, callback=None):
    """Class-specific retrieval with a fixed, pre-learned dictionary."""
    cfg = cfg or SolverConfig()
    run = _Run(obs, masks, cfg, truth, "prior", D_prior=D_prior)
    return _drive(run, cfg.n_iter, checkpoint, checkpoint_every, resume, callback)


def gsf(obs, masks, cfg=None, truth=None, checkpoint=None, checkpoint_every=1, resume=False,
        callback=None):
    """Sensor-filtered Gerchberg-Saxton: the loop without object-plane modeling."""
    cfg = cfg or SolverConfig(n_iter=50)
    run = _Run(obs, masks, cfg, truth, "gsf")
    return _drive(run, cfg.n_iter, checkpoint, checkpoint_every, resume, callback)


def learn_dictionary(images, cfg=None, n_iter=None):
    """Train a dictionary on clean complex images for prior-plugged retrieval.

    Patches are taken from every image with the configured side and stride,
    each image scaled to unit RMS amplitude as in the online learner, and
    ``n_iter`` C-ODL mini-batches are run (default one pass over all patches).
    """
    cfg = cfg or SolverConfig()
    blocks = []
    for img in images:
        img = as_image(img)
        grid = PatchGrid(img.shape[0], img.shape[1], cfg.patch_side, cfg.stride)
        scale = float(np.sqrt(np.mean(np.abs(img) ** 2)))
        blocks.append(extract_patches(img, grid).patches / (scale if scale > 0 else 1.0))
    if not blocks:
        raise ValueError("no training images given")
    X = np.concatenate(blocks, axis=1)
    D0 = init_dictionary(X, cfg.dict_size, seed=cfg.seed)
    learner = OnlineDictionaryLearner(
        D0, cfg.codl_lambda, batch_size=cfg.batch_size, seed=cfg.seed,
        bpdn_iter=cfg.codl_bpdn_iter, bcd_tol=cfg.bcd_tol, bcd_max_sweeps=cfg.bcd_max_sweeps)
    learner.partial_fit(X, n_iter=n_iter)
    return Dictionary(learner.D.copy(), {"patches": int(X.shape[1]), "batches": learner.t})
