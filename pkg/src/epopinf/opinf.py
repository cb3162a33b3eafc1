"""Reduced operators: intrusive projection, Operator Inference, EP-OpInf.

All learners work on the compact quadratic form. The unknowns of a fit are
the rows of ``O = [A_hat, F_hat]`` (r x (r + r(r+1)/2)); the data matrix
``D`` has one row ``[x_hat^T, (x_hat^[2])^T]`` per sample.

Columns of ``D`` are normalized to unit 2-norm before solving and the
solution is mapped back afterwards. Ridge penalties always act on the
unscaled operator entries.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .pde import QuadraticModel
from .tensor_ops import (
    ConstraintSystem,
    compact_width,
    ep_violation,
    extract_submodel,
    vech_pairs,
    vech_square,
)

__all__ = [
    "PROVENANCES",
    "LsqSystem",
    "ReducedModel",
    "SingularKKTError",
    "intrusive_reduce",
    "assemble_lsq",
    "standard_opinf",
    "ep_opinf",
    "kkt_diagnostics",
]

PROVENANCES = ("intrusive", "opinf", "ep-opinf")


class SingularKKTError(np.linalg.LinAlgError):
    """The equality-constrained least-squares problem has no unique solution."""


@dataclass(frozen=True)
class LsqSystem:
    """Data matrix ``D`` (K x (r + r(r+1)/2)) and right-hand sides ``R`` (K x r)."""

    D: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        if self.D.shape[0] != self.R.shape[0]:
            raise ValueError("D and R must have the same number of rows")
        r = self.R.shape[1]
        if self.D.shape[1] != r + compact_width(r):
            raise ValueError(f"D has {self.D.shape[1]} columns; expected {r + compact_width(r)}")

    @property
    def r(self):
        return self.R.shape[1]

    @property
    def K_total(self):
        return self.D.shape[0]

    def residual(self, O):
        return float(np.linalg.norm(self.D @ O.T - self.R))

    def objective(self, O, ridge=0.0):
        return self.residual(O) ** 2 + ridge * float(np.sum(O**2))


@dataclass(frozen=True)
class ReducedModel:
    """Reduced operators ``A_hat`` and compact ``F_hat`` plus fit diagnostics."""

    A_hat: np.ndarray
    F_hat: np.ndarray
    provenance: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        r = self.A_hat.shape[0]
        if self.A_hat.shape != (r, r) or self.F_hat.shape != (r, compact_width(r)):
            raise ValueError("inconsistent reduced operator shapes")

    @property
    def r(self):
        return self.A_hat.shape[0]

    @property
    def operator(self):
        """``O = [A_hat, F_hat]``."""
        return np.hstack([self.A_hat, self.F_hat])

    @classmethod
    def from_operator(cls, O, provenance, diagnostics=None):
        O = np.asarray(O, dtype=float)
        r = O.shape[0]
        if O.shape[1] != r + compact_width(r):
            raise ValueError(f"operator has shape {O.shape}; expected ({r}, {r + compact_width(r)})")
        return cls(A_hat=O[:, :r].copy(), F_hat=O[:, r:].copy(),
                   provenance=provenance, diagnostics=dict(diagnostics or {}))

    def submodel(self, r_sub):
        """Operators of size ``r_sub`` extracted from this fit (never refit)."""
        A, F = extract_submodel(self.A_hat, self.F_hat, r_sub)
        return ReducedModel(A, F, self.provenance, {"parent_r": self.r})

    def to_quadratic_model(self):
        return QuadraticModel(A=self.A_hat, F=self.F_hat)

    def ep_violation(self):
        return ep_violation(self.F_hat)


def intrusive_reduce(model, basis, r):
    """Galerkin projection ``Vr^T A Vr`` and ``Vr^T H (Vr ⊗ Vr)`` in compact form.

    The quadratic part never forms ``H``: with ``Q(x) = F x^[2]``, the
    off-diagonal compact entries follow from the polarization identity
    ``H(u⊗v) + H(v⊗u) = Q(u+v) - Q(u) - Q(v)``.
    """
    V = basis.Vr(r)
    if V.shape[0] != model.dim:
        raise ValueError("basis and model dimensions differ")
    A_hat = V.T @ model.A @ V
    j_idx, k_idx = vech_pairs(r)
    Q_single = model.quadratic(V)
    off = j_idx != k_idx
    cols = np.empty((model.dim, j_idx.size))
    cols[:, ~off] = Q_single[:, j_idx[~off]]
    jo, ko = j_idx[off], k_idx[off]
    cols[:, off] = model.quadratic(V[:, jo] + V[:, ko]) - Q_single[:, jo] - Q_single[:, ko]
    F_hat = V.T @ cols
    return ReducedModel(A_hat, F_hat, "intrusive", {"ep_violation": ep_violation(F_hat)})


def assemble_lsq(data):
    """Stack ``D = [Xhat^T, (Xhat^[2])^T]`` and ``R = Xdothat^T``."""
    Xhat = np.asarray(data.Xhat, dtype=float)
    D = np.hstack([Xhat.T, vech_square(Xhat).T])
    return LsqSystem(D=D, R=np.asarray(data.Xdothat, dtype=float).T.copy())


def _column_scale(D):
    scale = np.linalg.norm(D, axis=0)
    scale[scale == 0] = 1.0
    return scale


def _scaled_design(sys, ridge):
    """Scaled data matrix, with ridge rows appended when ridge > 0."""
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    scale = _column_scale(sys.D)
    Ds = sys.D / scale
    R = sys.R
    if ridge > 0:
        p = Ds.shape[1]
        Ds = np.vstack([Ds, np.diag(np.sqrt(ridge) / scale)])
        R = np.vstack([R, np.zeros((p, sys.r))])
    return Ds, R, scale


def _fit_diagnostics(sys, O, ridge, scale):
    Ds = sys.D / scale
    return {
        "residual": sys.residual(O),
        "objective": sys.objective(O, ridge),
        "cond_D": float(np.linalg.cond(sys.D)) if sys.K_total else np.inf,
        "cond_D_scaled": float(np.linalg.cond(Ds)) if sys.K_total else np.inf,
        "ridge": float(ridge),
    }


def standard_opinf(sys, ridge=0.0):
    """Unconstrained least squares, one independent problem per operator row.

    All rows share ``D`` so they are solved together; rank deficiency at
    ``ridge = 0`` resolves to the minimum-norm solution (in scaled
    coordinates).
    """
    Ds, R, scale = _scaled_design(sys, ridge)
    Y, _, rank, _ = la.lstsq(Ds, R, lapack_driver="gelsd")
    O = (Y / scale[:, None]).T
    diag = _fit_diagnostics(sys, O, ridge, scale)
    diag["rank_D"] = int(rank)
    model = ReducedModel.from_operator(O, "opinf", diag)
    model.diagnostics["ep_violation"] = model.ep_violation()
    return model


def _constraints_on_unknowns(constraints, r):
    """Remap ``C`` from vec(F_hat) columns to row-major vec(O) columns."""
    s = compact_width(r)
    p = r + s
    C = constraints.matrix.tocoo()
    cols = (C.col // s) * p + r + C.col % s
    return sparse.csr_matrix((C.data, (C.row, cols)), shape=(C.shape[0], r * p))


def _kkt_solve(M_blk, c, E):
    """Solve ``min ||(I ⊗ M_blk) y - c||`` s.t. ``E y = 0`` by the augmented system.

    ``[[I, M, 0], [M^T, 0, E^T], [0, E, 0]] [rho; y; mu] = [c; 0; 0]``
    with ``rho`` the residual. Avoids forming ``M^T M``.
    """
    r = c.shape[1]
    p = M_blk.shape[1]
    q = M_blk.shape[0]
    m = E.shape[0]
    M = sparse.block_diag([sparse.csr_matrix(M_blk)] * r, format="csr")
    K = sparse.bmat([
        [sparse.identity(r * q), M, None],
        [M.T, None, E.T],
        [None, E, sparse.csr_matrix((m, m))],
    ], format="csc")
    rhs = np.concatenate([c.T.ravel(), np.zeros(r * p + m)])
    try:
        lu = spla.splu(K, permc_spec="COLAMD", diag_pivot_thresh=1.0)
    except RuntimeError as exc:
        raise SingularKKTError(f"KKT system is singular ({exc}); use ridge > 0") from exc
    sol = lu.solve(rhs)
    for _ in range(2):
        sol += lu.solve(rhs - K @ sol)
    if not np.all(np.isfinite(sol)):
        raise SingularKKTError("KKT solve produced non-finite values; use ridge > 0")
    err = np.linalg.norm(K @ sol - rhs)
    if err > 1e-6 * max(1.0, np.linalg.norm(rhs)):
        raise SingularKKTError(f"KKT residual {err:.2e} too large; the system is singular, use ridge > 0")
    y = sol[r * q: r * q + r * p]
    mu = sol[r * q + r * p:]
    return y, mu


def _nullspace_basis(E):
    """Orthonormal null-space basis of a constraint matrix whose rows touch
    disjoint sets of unknowns."""
    E = E.tocsr()
    N_cols = E.shape[1]
    touched = np.zeros(N_cols, dtype=bool)
    blocks = []
    for t in range(E.shape[0]):
        idx = E.indices[E.indptr[t]:E.indptr[t + 1]]
        w = E.data[E.indptr[t]:E.indptr[t + 1]]
        if touched[idx].any():
            raise ValueError("constraint rows overlap; null-space backend needs disjoint rows")
        touched[idx] = True
        if idx.size > 1:
            blocks.append((idx, la.null_space(w[None, :])))
    rows, cols, vals = [], [], []
    c = 0
    for j in np.flatnonzero(~touched):
        rows.append(j)
        cols.append(c)
        vals.append(1.0)
        c += 1
    for idx, Z in blocks:
        for col in Z.T:
            rows.extend(idx)
            cols.extend([c] * idx.size)
            vals.extend(col)
            c += 1
    return sparse.csr_matrix((vals, (rows, cols)), shape=(N_cols, c))


def ep_opinf(sys, constraints, ridge=0.0, backend="kkt"):
    """Energy-preserving Operator Inference.

    Minimizes ``||D O^T - R||_F^2 + ridge ||O||_F^2`` subject to
    ``C vec(F_hat) = 0``, coupling all operator rows.

    Parameters
    ----------
    sys : LsqSystem
    constraints : ConstraintSystem
        From :func:`build_constraint_matrix` with ``dim == sys.r``. An empty
        system reduces to :func:`standard_opinf`.
    ridge : float
    backend : {"kkt", "nullspace"}
        ``"kkt"`` factors the sparse saddle-point system directly;
        ``"nullspace"`` parameterizes the feasible set and solves a plain
        least-squares problem (independent cross-check).

    Returns
    -------
    ReducedModel
        Diagnostics include the Lagrange multipliers ``lambda`` in the
        convention ``grad ||D O^T - R||^2 + C^T lambda = 0``.
    """
    r = sys.r
    if constraints.dim != r:
        raise ValueError(f"constraints are for r={constraints.dim}; data has r={r}")
    if constraints.num_constraints == 0:
        model = standard_opinf(sys, ridge)
        model = replace(model, provenance="ep-opinf")
        model.diagnostics["lambda"] = np.zeros(0)
        return model

    Ds, R, scale = _scaled_design(sys, ridge)
    p = Ds.shape[1]
    Q, M_blk = la.qr(Ds, mode="economic")
    c = Q.T @ R
    E = _constraints_on_unknowns(constraints, r) @ sparse.diags(np.tile(1.0 / scale, r))

    if backend == "kkt":
        y, mu = _kkt_solve(M_blk, c, E)
        lam = -2.0 * mu
    elif backend == "nullspace":
        N = _nullspace_basis(E)
        M = sparse.block_diag([sparse.csr_matrix(M_blk)] * r, format="csr")
        w, *_ = la.lstsq((M @ N).toarray(), c.T.ravel(), lapack_driver="gelsd")
        y = N @ w
        resid = c.T.ravel() - M @ y
        g = -2.0 * (M.T @ resid)
        EEt = (E @ E.T).diagonal()
        lam = -(E @ g) / EEt
    else:
        raise ValueError(f"unknown backend {backend!r}")

    O = (y.reshape(r, p) / scale).copy()
    diag = _fit_diagnostics(sys, O, ridge, scale)
    diag["backend"] = backend
    diag["lambda"] = lam
    diag["constraint_residual"] = float(np.max(np.abs(constraints.residual(O[:, r:]))))
    model = ReducedModel.from_operator(O, "ep-opinf", diag)
    model.diagnostics["ep_violation"] = model.ep_violation()
    return model


def kkt_diagnostics(model, sys, constraints, ridge=None):
    """First-order optimality report for an equality-constrained fit.

    Returns a dict with the stationarity residual
    ``||2 D^T (D O^T - R) + 2 ridge O^T + C^T lambda||_inf``, the scale
    ``||D^T R||_inf`` it should be compared against, the primal feasibility
    ``||C vec(F_hat)||_inf`` and the multiplier norm. Models without stored
    multipliers (for example, loaded from disk) get least-squares estimates.
    """
    if ridge is None:
        ridge = model.diagnostics.get("ridge", 0.0)
    r = sys.r
    O = model.operator
    grad = 2.0 * sys.D.T @ (sys.D @ O.T - sys.R) + 2.0 * ridge * O.T
    g = grad.T.ravel()
    Cz = _constraints_on_unknowns(constraints, r)
    lam = model.diagnostics.get("lambda")
    if lam is None:
        # rows of C touch disjoint unknowns, so C C^T is diagonal
        lam = -(Cz @ g) / (Cz @ Cz.T).diagonal() if constraints.num_constraints else np.zeros(0)
    lam = np.asarray(lam)
    if lam.size:
        g = g + Cz.T @ lam
    return {
        "stationarity": float(np.max(np.abs(g))) if g.size else 0.0,
        "scale": float(np.max(np.abs(sys.D.T @ sys.R))) if sys.R.size else 0.0,
        "primal_feasibility": float(np.max(np.abs(constraints.residual(model.F_hat))))
        if constraints.num_constraints else 0.0,
        "multiplier_norm": float(np.linalg.norm(lam)),
    }
