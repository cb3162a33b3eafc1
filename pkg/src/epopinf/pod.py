"""Proper orthogonal decomposition of snapshot data."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

__all__ = [
    "PODBasis",
    "ReducedData",
    "compute_pod",
    "energy_lost",
    "energy_retained",
    "project",
]


@dataclass(frozen=True)
class PODBasis:
    """Leading left singular vectors ``V`` and the full singular spectrum."""

    V: np.ndarray
    sigma: np.ndarray

    @property
    def n(self):
        return self.V.shape[0]

    @property
    def r_max(self):
        return self.V.shape[1]

    def Vr(self, r):
        if not 1 <= r <= self.r_max:
            raise ValueError(f"basis size must lie in [1, {self.r_max}], got {r}")
        return self.V[:, :r]


@dataclass(frozen=True)
class ReducedData:
    """Projected states and derivatives, columns in simulation-then-time order."""

    Xhat: np.ndarray
    Xdothat: np.ndarray

    def __post_init__(self):
        if self.Xhat.shape != self.Xdothat.shape:
            raise ValueError("reduced states and derivatives must share shape")

    @property
    def r(self):
        return self.Xhat.shape[0]

    @property
    def K(self):
        return self.Xhat.shape[1]


def _stack(snapshots, attr):
    mats = [np.asarray(getattr(s, attr), dtype=float) for s in snapshots]
    if not mats:
        raise ValueError("no snapshot sets given")
    if len({m.shape[0] for m in mats}) != 1:
        raise ValueError("snapshot sets disagree on the state dimension")
    return np.hstack(mats)


def _fix_signs(V):
    """Flip columns so each column's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def compute_pod(snapshots, r_max):
    """POD basis of the horizontally concatenated state matrices.

    No centering or scaling is applied. Raises ``ValueError`` when ``r_max``
    exceeds the numerical rank (singular values above ``1e-12 * sigma_1``).
    """
    X = _stack(snapshots, "X")
    if not 1 <= r_max <= X.shape[1]:
        raise ValueError(f"r_max={r_max} needs between 1 and {X.shape[1]} (column count)")
    U, sigma, _ = la.svd(X, full_matrices=False, lapack_driver="gesdd")
    rank = int(np.sum(sigma > 1e-12 * sigma[0])) if sigma[0] > 0 else 0
    if r_max > rank:
        raise ValueError(f"r_max={r_max} exceeds the numerical rank {rank} of the snapshots")
    return PODBasis(V=_fix_signs(U[:, :r_max]), sigma=sigma)


def energy_lost(sigma, r):
    """Fraction of snapshot energy in the truncated modes, sum_{i>r} s_i^2 / sum s_i^2."""
    sigma = np.asarray(sigma, dtype=float)
    if not 0 <= r <= sigma.size:
        raise ValueError(f"r must lie in [0, {sigma.size}]")
    s2 = sigma**2
    total = s2.sum()
    if total == 0:
        raise ValueError("all singular values are zero")
    return float(s2[r:].sum() / total)


def energy_retained(sigma, r):
    """Fraction of snapshot energy captured by the first r modes."""
    sigma = np.asarray(sigma, dtype=float)
    if not 0 <= r <= sigma.size:
        raise ValueError(f"r must lie in [0, {sigma.size}]")
    s2 = sigma**2
    total = s2.sum()
    if total == 0:
        raise ValueError("all singular values are zero")
    return float(s2[:r].sum() / total)


def project(basis, snapshots, r):
    """Reduced data ``Vr^T X`` and ``Vr^T Xdot`` over the concatenated sets."""
    Vr = basis.Vr(r)
    X = _stack(snapshots, "X")
    Xdot = _stack(snapshots, "Xdot")
    if X.shape[0] != basis.n:
        raise ValueError(f"snapshots have dimension {X.shape[0]}; basis has {basis.n}")
    return ReducedData(Xhat=Vr.T @ X, Xdothat=Vr.T @ Xdot)
