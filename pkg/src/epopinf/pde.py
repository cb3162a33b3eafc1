"""Full-order Burgers' and Kuramoto-Sivashinsky models on periodic grids.

Both PDEs are discretized with central finite differences. The convection
term ``-x x_w`` uses the skew-symmetric split

    N_i = -1/3 [x_i (x_{i+1} - x_{i-1}) + (x_{i+1}^2 - x_{i-1}^2)] / (2 dw)

which is exactly energy-neutral and momentum-conserving on a periodic grid.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as la
import scipy.sparse as sparse

from .tensor_ops import compact_width, vech_index, vech_pairs

__all__ = [
    "Grid1D",
    "QuadraticModel",
    "SnapshotSet",
    "SimulationBlowUp",
    "assemble_burgers",
    "assemble_kse",
    "burgers_ic",
    "kse_ic",
    "step_semi_implicit_euler",
    "step_cnab2",
    "integrate",
    "simulate",
    "simulate_batch",
    "SCHEMES",
]

SCHEMES = ("semi-implicit-euler", "cnab2")


class SimulationBlowUp(FloatingPointError):
    """A trajectory produced a non-finite state."""

    def __init__(self, step, columns=()):
        self.step = step
        self.columns = tuple(columns)
        where = f" in columns {list(self.columns)}" if self.columns else ""
        super().__init__(f"non-finite state at step {step}{where}")


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid ``w_i = i * dw`` on ``[0, L)``."""

    n: int
    L: float = 1.0

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"grid needs at least 4 points, got {self.n}")
        if self.L <= 0:
            raise ValueError("domain length must be positive")

    @property
    def dw(self):
        return self.L / self.n

    @property
    def points(self):
        return np.arange(self.n) * self.dw


@dataclass(frozen=True)
class QuadraticModel:
    """``dx/dt = A x + F x^[2]``; ``F`` may be dense or scipy-sparse."""

    A: np.ndarray
    F: object

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        if self.F.shape != (n, compact_width(n)):
            raise ValueError(f"F has shape {self.F.shape}; expected ({n}, {compact_width(n)})")

    @property
    def dim(self):
        return self.A.shape[0]

    @cached_property
    def _quad_parts(self):
        j_idx, k_idx = vech_pairs(self.dim)
        if sparse.issparse(self.F):
            F = self.F.tocsc()
            used = np.flatnonzero(np.diff(F.indptr))
            return F[:, used].tocsr(), j_idx[used], k_idx[used]
        return np.asarray(self.F, dtype=float), j_idx, k_idx

    def quadratic(self, x):
        F, j_idx, k_idx = self._quad_parts
        return F @ (x[j_idx] * x[k_idx])

    def rhs(self, x):
        return self.A @ x + self.quadratic(x)


@dataclass
class SnapshotSet:
    """States and time derivatives sampled along one trajectory."""

    X: np.ndarray
    Xdot: np.ndarray
    times: np.ndarray
    dt_sim: float
    stride: int
    ic_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.shape != self.Xdot.shape:
            raise ValueError("X and Xdot must share shape")
        if self.times.shape != (self.X.shape[1],):
            raise ValueError("one time stamp per snapshot column")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def K(self):
        return self.X.shape[1]


def _convection_operator(grid):
    n, dw = grid.n, grid.dw
    c = -1.0 / (6.0 * dw)
    rows, cols, vals = [], [], []

    def add(i, a, b, v):
        j, k = max(a, b), min(a, b)
        rows.append(i)
        cols.append(vech_index(j, k, n))
        vals.append(v)

    for i in range(n):
        ip, im = (i + 1) % n, (i - 1) % n
        add(i, i, ip, c)
        add(i, i, im, -c)
        add(i, ip, ip, c)
        add(i, im, im, -c)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, compact_width(n)))


def _circulant(n, stencil):
    """Dense circulant matrix from ``{offset: weight}``."""
    M = np.zeros((n, n))
    idx = np.arange(n)
    for off, w in stencil.items():
        M[idx, (idx + off) % n] += w
    return M


def assemble_burgers(grid, mu):
    """Viscous Burgers' ``x_t = mu x_ww - x x_w``."""
    if mu <= 0:
        raise ValueError("viscosity must be positive")
    dw2 = grid.dw**2
    A = mu * _circulant(grid.n, {-1: 1 / dw2, 0: -2 / dw2, 1: 1 / dw2})
    return QuadraticModel(A=A, F=_convection_operator(grid))


def assemble_kse(grid, mu):
    """Kuramoto-Sivashinsky ``x_t = -x_ww - mu x_wwww - x x_w``."""
    if grid.n < 6:
        raise ValueError(f"KSE stencil needs at least 6 points, got {grid.n}")
    if mu <= 0:
        raise ValueError("mu must be positive")
    dw = grid.dw
    D2 = _circulant(grid.n, {-1: 1.0, 0: -2.0, 1: 1.0}) / dw**2
    D4 = _circulant(grid.n, {-2: 1.0, -1: -4.0, 0: 6.0, 1: -4.0, 2: 1.0}) / dw**4
    return QuadraticModel(A=-(D2 + mu * D4), F=_convection_operator(grid))


def burgers_ic(grid, A_amp, f_freq, phi):
    """``A sin(2 pi f w + phi)`` sampled on the grid."""
    if f_freq < 1:
        raise ValueError("frequency must be >= 1")
    return A_amp * np.sin(2 * np.pi * f_freq * grid.points + phi)


def kse_ic(grid, a, b):
    """``a cos(2 pi w / L) + b cos(4 pi w / L)`` sampled on the grid."""
    w = grid.points
    return a * np.cos(2 * np.pi * w / grid.L) + b * np.cos(4 * np.pi * w / grid.L)


def _factor(M):
    lu = la.lu_factor(M, check_finite=False)
    rcond = 1.0 / np.linalg.cond(M, 1) if M.shape[0] else 1.0
    if not np.isfinite(rcond) or rcond < 1e-14:
        raise np.linalg.LinAlgError(f"implicit system is singular (rcond={rcond:.2e})")
    return lu


def step_semi_implicit_euler(model, x, dt, lu=None):
    """One step of ``(I - dt A) x+ = x + dt F x^[2]``."""
    if dt <= 0:
        raise ValueError("time step must be positive")
    if lu is None:
        lu = _factor(np.eye(model.dim) - dt * model.A)
    return la.lu_solve(lu, x + dt * model.quadratic(x), check_finite=False)


def step_cnab2(model, x, q_prev, dt, lu=None):
    """Crank-Nicolson on ``A``, Adams-Bashforth 2 on the quadratic term.

    Returns the new state and the quadratic term at ``x`` (the next call's
    ``q_prev``).
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    if lu is None:
        lu = _factor(np.eye(model.dim) - dt / 2 * model.A)
    q = model.quadratic(x)
    rhs = x + dt / 2 * (model.A @ x) + dt * (1.5 * q - 0.5 * q_prev)
    return la.lu_solve(lu, rhs, check_finite=False), q


def _num_steps(dt, T, stride):
    if dt <= 0 or T <= 0 or stride < 1:
        raise ValueError("need dt > 0, T > 0 and stride >= 1")
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * T:
        raise ValueError(f"T={T} is not a whole number of steps of dt={dt}")
    if nsteps % stride:
        raise ValueError(f"{nsteps} steps is not a multiple of stride {stride}")
    return nsteps


def integrate(model, x0, dt, T, stride, scheme="semi-implicit-euler", strict=True):
    """Integrate one or many initial states and keep every stride-th state.

    Parameters
    ----------
    x0 : (n,) or (n, m) ndarray
        Initial state(s); columns are independent trajectories.
    strict : bool
        Raise :class:`SimulationBlowUp` on a non-finite state. Otherwise the
        offending columns are filled with NaN from that step on and the rest
        continue.

    Returns
    -------
    states : (n, K) or (n, K, m) ndarray
        Stored states including ``x0``; ``K = T / (dt stride) + 1``.
    blowup : list of (int or None)
        First non-finite step per column (None when finite throughout).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    nsteps = _num_steps(dt, T, stride)
    x = np.array(x0, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[:, None]
    n, m = x.shape
    if n != model.dim:
        raise ValueError(f"initial state has length {n}; model has dimension {model.dim}")

    K = nsteps // stride + 1
    out = np.empty((n, K, m))
    out[:, 0] = x
    blowup = [None] * m
    alive = np.ones(m, dtype=bool)
    I = np.eye(n)
    if scheme == "semi-implicit-euler":
        lu = _factor(I - dt * model.A)
    else:
        lu = _factor(I - dt / 2 * model.A)
        B = I + dt / 2 * model.A
        q_prev = model.quadratic(x)

    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, nsteps + 1):
            if scheme == "semi-implicit-euler":
                x = la.lu_solve(lu, x + dt * model.quadratic(x), check_finite=False)
            else:
                q = model.quadratic(x)
                x = la.lu_solve(lu, B @ x + dt * (1.5 * q - 0.5 * q_prev), check_finite=False)
                q_prev = q
            bad = alive & ~np.isfinite(x).all(axis=0)
            if bad.any():
                cols = np.flatnonzero(bad)
                if strict:
                    raise SimulationBlowUp(step, cols)
                for c in cols:
                    blowup[c] = step
                alive &= ~bad
                x[:, ~alive] = 0.0
                if scheme == "cnab2":
                    q_prev[:, ~alive] = 0.0
            if step % stride == 0:
                out[:, step // stride] = x
                out[:, step // stride, ~alive] = np.nan
    if single:
        return out[:, :, 0], blowup
    return out, blowup


def finite_difference_derivatives(X, h):
    """Second-order central differences in time (one-sided at the ends)."""
    if X.shape[1] < 3:
        raise ValueError("need at least 3 snapshots for finite differences")
    return np.gradient(X, h, axis=1, edge_order=2)


def simulate_batch(model, x0s, dt, T, stride, scheme="semi-implicit-euler",
                   derivative_mode="exact-rhs", ic_params=None):
    """Simulate several initial conditions together; one SnapshotSet each."""
    X0 = np.column_stack([np.asarray(x, dtype=float) for x in x0s])
    states, _ = integrate(model, X0, dt, T, stride, scheme)
    K = states.shape[1]
    times = np.arange(K) * stride * dt
    ic_params = ic_params or [{} for _ in x0s]
    sets = []
    for c in range(X0.shape[1]):
        X = states[:, :, c]
        if derivative_mode == "exact-rhs":
            Xdot = model.rhs(X)
        elif derivative_mode == "finite-difference":
            Xdot = finite_difference_derivatives(X, stride * dt)
        else:
            raise ValueError(f"unknown derivative mode {derivative_mode!r}")
        sets.append(SnapshotSet(X=X, Xdot=Xdot, times=times, dt_sim=dt,
                                stride=stride, ic_params=dict(ic_params[c])))
    return sets


def simulate(model, x0, dt, T, stride, scheme="semi-implicit-euler",
             derivative_mode="exact-rhs", ic_params=None):
    """Simulate one trajectory; derivatives are exact right-hand sides by default."""
    return simulate_batch(model, [x0], dt, T, stride, scheme, derivative_mode,
                          [ic_params or {}])[0]
