"""Complex-domain sparse coding and online dictionary learning.

Patches are the columns of a ``(w**2, P)`` matrix and codes the columns of a
``(k, P)`` matrix, so that ``D @ codes`` reconstructs the patches.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import DimensionError


@dataclass(frozen=True)
class Dictionary:
    """``w**2 x k`` complex atom matrix with every column in the unit ball."""

    atoms: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        a = np.array(self.atoms, dtype=complex)
        if a.ndim != 2 or 0 in a.shape:
            raise DimensionError(f"atom matrix must be 2-D and non-empty, got {a.shape}")
        w = int(round(np.sqrt(a.shape[0])))
        if w * w != a.shape[0]:
            raise DimensionError(f"atom length {a.shape[0]} is not a square patch size")
        if not np.all(np.isfinite(a)):
            raise ValueError("dictionary contains non-finite values")
        if np.max(np.linalg.norm(a, axis=0)) > 1.0 + 1e-12:
            raise ValueError("dictionary atoms must lie in the unit ball")
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)

    @property
    def w(self):
        return int(round(np.sqrt(self.atoms.shape[0])))

    @property
    def k(self):
        return self.atoms.shape[1]


@dataclass(frozen=True)
class SparseCode:
    values: np.ndarray
    support: tuple

    @classmethod
    def from_vector(cls, values, support=None):
        values = np.asarray(values, dtype=complex)
        if support is None:
            support = tuple(int(i) for i in np.flatnonzero(values))
        return cls(values, tuple(support))


def _atoms(D):
    return D.atoms if isinstance(D, Dictionary) else np.asarray(D, dtype=complex)


_INSIDE = 1.0 - 2.0 ** -50


def project_unit_ball(u):
    """Scale columns with norm above one back onto the unit sphere."""
    norms = np.linalg.norm(u, axis=0)
    # rescaled columns are pulled a few ulps inside so every norm evaluation stays <= 1
    out = u / np.where(norms > 1.0, norms / _INSIDE, 1.0)
    over = np.linalg.norm(out, axis=0) > 1.0
    while np.any(over):
        out[:, over] *= 1.0 - 2.0 ** -52
        over = np.linalg.norm(out, axis=0) > 1.0
    return out


def random_unit_vectors(rng, dim, count):
    v = rng.standard_normal((dim, count)) + 1j * rng.standard_normal((dim, count))
    return project_unit_ball(v / np.linalg.norm(v, axis=0))


def init_dictionary(patches, k, seed=0):
    """Initial dictionary from ``k`` sampled patches normalized to unit norm.

    Zero patches, and any shortfall when fewer than ``k`` patches exist, are
    replaced by random unit vectors.
    """
    patches = np.asarray(patches, dtype=complex)
    rng = np.random.default_rng(seed)
    dim, count = patches.shape
    take = rng.choice(count, size=min(k, count), replace=False)
    atoms = random_unit_vectors(rng, dim, k)
    picked = patches[:, take]
    norms = np.linalg.norm(picked, axis=0)
    good = norms > 1e-12 * max(1.0, norms.max(initial=0.0))
    cols = np.arange(len(take))[good]
    atoms[:, cols] = picked[:, good] / norms[good]
    return Dictionary(project_unit_ball(atoms))


# ---------------------------------------------------------------- OMP

def omp_batch(X, D, delta, max_atoms=None, return_support=False):
    """Orthogonal matching pursuit on every column of ``X``.

    For each patch, atoms are added greedily (largest ``|d_k^H r|``, lowest
    index on ties) and the coefficients refit by least squares against the
    patch, until ``||r||^2 <= delta`` or ``max_atoms`` atoms are in use.  A
    patch whose energy is already within ``delta`` gets the zero code.  If a
    newly picked atom is numerically dependent on the current support it is
    dropped and that patch stops.

    Parameters
    ----------
    X : ndarray, shape (w**2, P)
    D : Dictionary or ndarray, shape (w**2, k)
    delta : float or ndarray of shape (P,)
        Squared-residual tolerance.
    max_atoms : int, optional
        Support cap; defaults to ``w**2 // 4`` (at least 1).
    return_support : bool
        Also return the support sizes and the ``(P, max_atoms)`` array of
        selected atom indices (entries past the support size are -1).
    """
    Dm = _atoms(D)
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[0] != Dm.shape[0]:
        raise DimensionError(f"patch matrix {X.shape} incompatible with dictionary {Dm.shape}")
    dim, P = X.shape
    k = Dm.shape[1]
    if max_atoms is None:
        max_atoms = max(1, dim // 4)
    max_atoms = int(min(max_atoms, dim, k))
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (P,))
    if np.any(delta < 0):
        raise ValueError("delta must be nonnegative")

    # row-major operands so the kernel's inner loops run over contiguous memory
    Gc = np.ascontiguousarray((Dm.conj().T @ Dm).conj())
    Dxt = np.ascontiguousarray((Dm.conj().T @ X).T)
    codes = np.zeros((P, k), dtype=complex)
    support = np.full((P, max_atoms), -1, dtype=np.int64)
    nsel = np.zeros(P, dtype=np.int64)
    _omp_kernel(np.ascontiguousarray(X.T), np.ascontiguousarray(Dm.T), Dxt, Gc,
                np.ascontiguousarray(delta), max_atoms, codes, support, nsel)
    codes = np.ascontiguousarray(codes.T)
    if return_support:
        return codes, nsel, support
    return codes


@numba.njit(cache=True)
def _omp_kernel(Xt, Dt, Dxt, Gc, delta, max_atoms, codes, Q, nsel):
    # Xt (P, dim) patches, Dt (k, dim) atoms, Dxt (P, k) = (D^H X)^T,
    # Gc (k, k) = conj(D^H D); codes is filled as (P, k)
    P, dim = Xt.shape
    k = Dt.shape[0]
    L = np.zeros((max_atoms, max_atoms), dtype=np.complex128)
    y = np.zeros(max_atoms, dtype=np.complex128)
    beta = np.zeros(max_atoms, dtype=np.complex128)
    w = np.zeros(max_atoms, dtype=np.complex128)
    c = np.zeros(k, dtype=np.complex128)
    r = np.zeros(dim, dtype=np.complex128)
    used = np.zeros(k, dtype=np.bool_)
    for p in range(P):
        err = 0.0
        for d in range(dim):
            err += Xt[p, d].real ** 2 + Xt[p, d].imag ** 2
        if err <= delta[p]:
            continue
        for i in range(k):
            c[i] = Dxt[p, i]
            used[i] = False
        m = 0
        while m < max_atoms:
            best = -1
            cmax = -1.0
            for i in range(k):
                if not used[i]:
                    a = abs(c[i])
                    if a > cmax:
                        cmax = a
                        best = i
            if best < 0:
                break
            gbb = Gc[best, best].real
            # Cholesky extension: L w = G[Q, best], pivot^2 = g_bb - |w|^2
            piv2 = gbb
            for j in range(m):
                s = Gc[best, Q[p, j]]
                for i in range(j):
                    s -= L[j, i] * w[i]
                w[j] = s / L[j, j]
                piv2 -= w[j].real ** 2 + w[j].imag ** 2
            if piv2 <= 1e-10 * gbb or cmax <= 1e-13 * np.sqrt(err * gbb):
                break
            for j in range(m):
                L[m, j] = np.conj(w[j])
            L[m, m] = np.sqrt(piv2)
            Q[p, m] = best
            used[best] = True
            # L y = D_Q^H x (only the new entry changes), then L^H beta = y
            s = Dxt[p, best]
            for i in range(m):
                s -= L[m, i] * y[i]
            y[m] = s / L[m, m]
            m += 1
            for j in range(m - 1, -1, -1):
                s = y[j]
                for i in range(j + 1, m):
                    s -= np.conj(L[i, j]) * beta[i]
                beta[j] = s / L[j, j].real
            # explicit residual, then D^H r = D^H x - G[:, Q] beta
            for d in range(dim):
                r[d] = Xt[p, d]
            for j in range(m):
                bj = beta[j]
                q = Q[p, j]
                for d in range(dim):
                    r[d] -= Dt[q, d] * bj
            err = 0.0
            for d in range(dim):
                err += r[d].real ** 2 + r[d].imag ** 2
            if err <= delta[p]:
                break
            for i in range(k):
                c[i] = Dxt[p, i]
            for j in range(m):
                bj = beta[j]
                q = Q[p, j]
                for i in range(k):
                    c[i] -= Gc[q, i] * bj
        nsel[p] = m
        for j in range(m):
            codes[p, Q[p, j]] = beta[j]


def omp(patch, D, delta, max_atoms=None):
    """OMP for a single patch vector; returns a ``SparseCode``."""
    patch = np.asarray(patch, dtype=complex).ravel()
    codes, nsel, support = omp_batch(patch[:, None], D, delta, max_atoms, return_support=True)
    return SparseCode(codes[:, 0], tuple(int(i) for i in support[0, :nsel[0]]))


# ---------------------------------------------------------------- BPDN

@dataclass
class BPDNResult:
    codes: np.ndarray
    converged: bool
    n_iter: int
    kkt: float
    objective: np.ndarray
    trace: list = field(default_factory=list)


def soft_threshold(v, tau):
    """Complex soft threshold ``v * max(0, 1 - tau / |v|)``."""
    mag = np.abs(v)
    scale = np.maximum(0.0, 1.0 - np.divide(tau, mag, out=np.full_like(mag, np.inf), where=mag > 0))
    return v * scale


def bpdn_objective(X, D, codes, lam):
    """Per-column ``0.5 ||x - D a||^2 + lam * sum |a|``."""
    r = X - _atoms(D) @ codes
    return 0.5 * np.sum(np.abs(r) ** 2, axis=0) + lam * np.sum(np.abs(codes), axis=0)


def kkt_violation(X, D, codes, lam):
    """Largest optimality-condition violation of a BPDN solution, per column."""
    Dm = _atoms(D)
    corr = Dm.conj().T @ (X - Dm @ codes)
    return _kkt(corr, codes, lam)


def _kkt(corr, codes, lam):
    mag = np.abs(codes)
    on = mag > 0
    sub = np.where(on, np.abs(corr - lam * np.divide(codes, mag, out=np.zeros_like(codes), where=on)),
                   np.maximum(np.abs(corr) - lam, 0.0))
    return sub.max(axis=0)


def bpdn(X, D, lam, max_iter=5000, tol=1e-7, x0=None, record=False, warn=True, check_every=5):
    """Basis pursuit denoising ``min_a 0.5 ||x - D a||^2 + lam ||a||_1`` per column.

    Monotone FISTA (the reported iterate never increases the objective) with
    complex soft thresholding, step ``1 / ||D||_2^2`` and a momentum restart
    whenever a trial point is rejected.  Iteration stops once every column's
    KKT violation is at most ``tol`` (tested every ``check_every`` steps) or
    after ``max_iter`` steps.

    ``X`` may be a single vector or a ``(w**2, P)`` matrix; ``codes`` in the
    result has the matching shape.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    Dm = _atoms(D)
    X = np.asarray(X, dtype=complex)
    vector = X.ndim == 1
    if vector:
        X = X[:, None]
    if X.shape[0] != Dm.shape[0]:
        raise DimensionError(f"patch length {X.shape[0]} incompatible with dictionary {Dm.shape}")
    k, P = Dm.shape[1], X.shape[1]
    G = Dm.conj().T @ Dm
    Dx = Dm.conj().T @ X
    half_x2 = 0.5 * np.sum(np.abs(X) ** 2, axis=0)
    lip = max(float(np.linalg.eigvalsh(G)[-1]), 1e-300)
    step, thr = 1.0 / lip, lam / lip

    def objective(a, Ga):
        quad = np.real(np.sum(a.conj() * (0.5 * Ga - Dx), axis=0))
        return quad + half_x2 + lam * np.sum(np.abs(a), axis=0)

    a = np.zeros((k, P), dtype=complex) if x0 is None else np.array(x0, dtype=complex).reshape(k, P)
    Ga = G @ a
    Fa = objective(a, Ga)
    y, Gy = a, Ga
    t = np.ones(P)
    trace = [float(Fa.sum())] if record else []
    viol = _kkt(Dx - Ga, a, lam)
    it = 0
    while it < max_iter and viol.max() > tol:
        it += 1
        z = soft_threshold(y - step * (Gy - Dx), thr)
        Gz = G @ z
        Fz = objective(z, Gz)
        accept = Fz <= Fa
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        if accept.all():
            y = z + mom * (z - a)
            Gy = Gz + mom * (Gz - Ga)
            a, Ga, Fa, t = z, Gz, Fz, t_new
        else:
            # rejected columns keep their iterate and restart momentum
            c1 = np.where(accept, 1.0, t / t_new)
            a_new = np.where(accept, z, a)
            Ga_new = np.where(accept, Gz, Ga)
            y = np.where(accept, z + mom * (z - a), a + c1 * (z - a))
            Gy = np.where(accept, Gz + mom * (Gz - Ga), Ga + c1 * (Gz - Ga))
            rej = ~accept
            y[:, rej], Gy[:, rej] = a[:, rej], Ga[:, rej]
            a, Ga = a_new, Ga_new
            Fa = np.where(accept, Fz, Fa)
            t = np.where(accept, t_new, 1.0)
        if record:
            trace.append(float(Fa.sum()))
        if it % check_every == 0 or it == max_iter:
            viol = _kkt(Dx - Ga, a, lam)
    converged = bool(viol.max() <= tol)
    if not converged and warn:
        warnings.warn(f"bpdn stopped after {it} iterations with KKT violation {viol.max():.3g}",
                      RuntimeWarning, stacklevel=2)
    codes = a[:, 0] if vector else a
    return BPDNResult(codes, converged, it, float(viol.max()), Fa, trace)


# ---------------------------------------------------------------- C-ODL

def default_damping(t):
    """Forgetting factor ``1 - 1/t`` clipped to ``[0.9, 1)``."""
    return max(0.9, 1.0 - 1.0 / t)


class OnlineDictionaryLearner:
    """Online dictionary learning in the complex domain.

    Each iteration codes a mini-batch by BPDN, folds it into the damped
    statistics ``A = beta A + sum a a^H`` and ``B = beta B + sum x a^H``, then
    runs projected block-coordinate sweeps over the atoms.  The object keeps
    ``A``, ``B``, the iteration counter and the RNG between calls, so repeated
    ``partial_fit`` calls continue one learning run.
    """

    def __init__(self, D0, lam, batch_size=256, damping=default_damping, seed=0,
                 bpdn_iter=50, bpdn_tol=1e-6, bcd_tol=1e-6, bcd_max_sweeps=50, on_sweep=None):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if lam <= 0:
            raise ValueError("lam must be positive")
        self.D = np.array(_atoms(D0), dtype=complex)
        k = self.D.shape[1]
        self.A = np.zeros((k, k), dtype=complex)
        self.B = np.zeros_like(self.D)
        self.t = 0
        self.lam = lam
        self.batch_size = batch_size
        self.damping = damping
        self.bpdn_iter = bpdn_iter
        self.bpdn_tol = bpdn_tol
        self.bcd_tol = bcd_tol
        self.bcd_max_sweeps = bcd_max_sweeps
        self.rng = np.random.default_rng(seed)
        self.sweeps = []
        # optional hook called with the atom matrix after every BCD sweep
        self.on_sweep = on_sweep

    @property
    def dictionary(self):
        return Dictionary(self.D.copy())

    def _batches(self, count, n_iter):
        size = min(self.batch_size, count)
        perm, pos = self.rng.permutation(count), 0
        for _ in range(n_iter):
            if pos + size > count:
                perm, pos = self.rng.permutation(count), 0
            yield perm[pos:pos + size]
            pos += size

    def partial_fit(self, patches, n_iter=None):
        """Run ``n_iter`` mini-batch iterations (default: one pass, ``P // batch``)."""
        X = np.asarray(patches, dtype=complex)
        if X.ndim != 2 or X.shape[0] != self.D.shape[0]:
            raise DimensionError(f"patch matrix {X.shape} incompatible with dictionary {self.D.shape}")
        if n_iter is None:
            n_iter = max(1, X.shape[1] // self.batch_size)
        for idx in self._batches(X.shape[1], n_iter):
            xb = X[:, idx]
            codes = bpdn(xb, self.D, self.lam, max_iter=self.bpdn_iter, tol=self.bpdn_tol, warn=False).codes
            self.t += 1
            beta = self.damping(self.t)
            self.A = beta * self.A + codes @ codes.conj().T
            self.B = beta * self.B + xb @ codes.conj().T
            self._update_atoms()
        return self

    def _update_atoms(self):
        D, A, B = self.D, self.A, self.B
        diag = np.real(np.diag(A))
        floor = 1e-12 * max(diag.max(initial=0.0), 1e-300)
        live = [int(l) for l in np.flatnonzero(diag > floor)]
        inv = 1.0 / np.where(diag > floor, diag, 1.0)
        vdot = np.vdot
        tol2 = self.bcd_tol ** 2
        sweeps = 0
        for sweeps in range(1, self.bcd_max_sweeps + 1):
            change2 = 0.0
            for l in live:
                d_old = D[:, l]
                u = d_old + (B[:, l] - D @ A[:, l]) * inv[l]
                nrm2 = vdot(u, u).real
                if nrm2 == 0.0:
                    d = random_unit_vectors(self.rng, D.shape[0], 1)[:, 0]
                elif nrm2 > 1.0:
                    d = project_unit_ball(u[:, None])[:, 0]
                else:
                    d = u
                diff = d - d_old
                change2 = max(change2, vdot(diff, diff).real)
                D[:, l] = d
            if self.on_sweep is not None:
                self.on_sweep(D)
            if change2 < tol2:
                break
        self.sweeps.append(sweeps)

    def state(self):
        return {"D": self.D.copy(), "A": self.A.copy(), "B": self.B.copy(), "t": self.t,
                "rng": self.rng.bit_generator.state}

    def load_state(self, state):
        self.D = np.array(state["D"], dtype=complex)
        self.A = np.array(state["A"], dtype=complex)
        self.B = np.array(state["B"], dtype=complex)
        self.t = int(state["t"])
        self.rng.bit_generator.state = state["rng"]


def codl(patches, D0, n_iter, batch_size, lam, damping=default_damping, seed=0, **kwargs):
    """Learn a dictionary from patch columns; returns a ``Dictionary``."""
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    learner = OnlineDictionaryLearner(D0, lam, batch_size=batch_size, damping=damping, seed=seed, **kwargs)
    learner.partial_fit(patches, n_iter=n_iter)
    return learner.dictionary
