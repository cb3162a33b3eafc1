"""Index algebra for quadratic operators in Kronecker and compact form.

A quadratic operator acts on the state through either the full Kronecker
square ``x ⊗ x`` (length n**2, operator ``H`` of shape (n, n**2)) or the
half-vectorized square ``x^[2]`` (length n(n+1)/2, operator ``F``).

Column conventions (1-based, as in the formulas of the method):

* ``H[i, n(k-1) + j] = h_ijk``
* ``F[i, (n - k/2)(k-1) + j] = f_ijk`` for ``j >= k``

so the compact columns run down the lower triangle of ``x x^T`` one
column at a time: ``(1,1), (2,1), ..., (n,1), (2,2), ..., (n,n)``.
Storage here is 0-based; :func:`vech_index` is the single place where the
shift happens.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sparse

__all__ = [
    "compact_width",
    "vech_index",
    "vech_pairs",
    "kron_square",
    "vech_square",
    "h_to_f",
    "f_to_h",
    "eval_quadratic",
    "ep_violation",
    "is_energy_preserving",
    "ConstraintSystem",
    "build_constraint_matrix",
    "extract_submodel",
]


def compact_width(n):
    """Number of unique quadratic monomials in n variables, n(n+1)/2."""
    return n * (n + 1) // 2


def vech_index(j, k, n):
    """0-based column of the monomial x_j x_k (0-based j >= k) in x^[2].

    Implements ``(n - K/2)(K - 1) + J`` with ``J = j + 1`` and ``K = k + 1``,
    then shifts to 0-based storage.
    """
    if not 0 <= k <= j < n:
        raise ValueError(f"need 0 <= k <= j < n, got j={j}, k={k}, n={n}")
    J, K = j + 1, k + 1
    return (2 * n - K) * (K - 1) // 2 + J - 1


@lru_cache(maxsize=64)
def _pairs(n):
    k_idx, j_idx = np.triu_indices(n)
    j_idx.setflags(write=False)
    k_idx.setflags(write=False)
    return j_idx, k_idx


def vech_pairs(n):
    """Return index arrays ``(j, k)``, j >= k, in compact column order."""
    return _pairs(int(n))


def kron_square(x):
    """Kronecker square ``x ⊗ x``; for a 2D input, applied column-wise."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return np.outer(x, x).ravel()
    n = x.shape[0]
    return (x[None, :, :] * x[:, None, :]).reshape(n * n, -1)


def vech_square(x):
    """Half-vectorized square ``x^[2] = vech(x x^T)``; column-wise for 2D."""
    x = np.asarray(x, dtype=float)
    j_idx, k_idx = vech_pairs(x.shape[0])
    return x[j_idx] * x[k_idx]


def _check_full(H):
    H = np.asarray(H, dtype=float)
    if H.ndim != 2:
        raise ValueError("quadratic operator must be a 2D array")
    n = H.shape[0]
    if H.shape[1] != n * n:
        raise ValueError(f"H has shape {H.shape}; expected ({n}, {n * n})")
    return H


def _compact_dim(F):
    """Infer n from an (m, n(n+1)/2) operator; m may differ from n."""
    s = F.shape[1]
    n = int(round((np.sqrt(8 * s + 1) - 1) / 2))
    if compact_width(n) != s:
        raise ValueError(f"{s} columns is not a triangular number n(n+1)/2")
    return n


def _check_compact(F, square=True):
    if not sparse.issparse(F):
        F = np.asarray(F, dtype=float)
        if F.ndim != 2:
            raise ValueError("quadratic operator must be a 2D array")
    n = _compact_dim(F)
    if square and F.shape[0] != n:
        raise ValueError(f"F has shape {F.shape}; expected ({n}, {compact_width(n)})")
    return F, n


def h_to_f(H):
    """Compress a Kronecker-form operator to compact form.

    ``f_ijk = h_ijk`` when j == k and ``h_ijk + h_ikj`` otherwise.
    """
    H = _check_full(H)
    n = H.shape[0]
    j_idx, k_idx = vech_pairs(n)
    F = H[:, k_idx * n + j_idx].copy()
    off = j_idx != k_idx
    F[:, off] += H[:, j_idx[off] * n + k_idx[off]]
    return F


def f_to_h(F):
    """Expand a compact operator to the symmetric Kronecker form.

    Off-diagonal mass is split evenly, ``h_ijk = h_ikj = f_ijk / 2``.
    """
    F, n = _check_compact(F)
    if sparse.issparse(F):
        F = F.toarray()
    j_idx, k_idx = vech_pairs(n)
    H = np.zeros((n, n * n))
    diag = j_idx == k_idx
    H[:, k_idx[diag] * n + j_idx[diag]] = F[:, diag]
    off = ~diag
    half = F[:, off] / 2
    H[:, k_idx[off] * n + j_idx[off]] = half
    H[:, j_idx[off] * n + k_idx[off]] = half
    return H


def eval_quadratic(F, x):
    """Evaluate ``F x^[2]`` for a state vector or a batch of column states."""
    F, n = _check_compact(F, square=False)
    x = np.asarray(x, dtype=float)
    if x.shape[0] != n:
        raise ValueError(f"state has length {x.shape[0]}; operator expects {n}")
    if sparse.issparse(F):
        F = F.tocsc()
        used = np.flatnonzero(np.diff(F.indptr))
        j_idx, k_idx = vech_pairs(n)
        return F[:, used] @ (x[j_idx[used]] * x[k_idx[used]])
    return F @ vech_square(x)


def _symmetric_entries(F):
    """Nonzero entries (i, j, k, h_ijk) of the symmetric Kronecker form."""
    F, n = _check_compact(F)
    j_idx, k_idx = vech_pairs(n)
    if sparse.issparse(F):
        coo = F.tocoo()
        rows, cols, vals = coo.row, coo.col, coo.data
    else:
        rows, cols = np.nonzero(F)
        vals = F[rows, cols]
    j, k = j_idx[cols], k_idx[cols]
    off = j != k
    half = np.where(off, vals / 2, vals)
    i = np.concatenate([rows, rows[off]])
    jj = np.concatenate([j, k[off]])
    kk = np.concatenate([k, j[off]])
    h = np.concatenate([half, half[off]])
    return n, i, jj, kk, h


def ep_violation(F):
    """Sum of constraint residuals ``|h_ijk + h_jik + h_kji|`` over all triples.

    Computed on the symmetric Kronecker form. Only triples reachable from a
    nonzero entry can contribute, so sparse full-order operators are handled
    without materializing ``H``.
    """
    n, i, j, k, h = _symmetric_entries(F)
    if h.size == 0:
        return 0.0
    # h_abc enters T(a,b,c) as h_ijk, T(b,a,c) as h_jik and T(c,b,a) as h_kji
    ti = np.concatenate([i, j, k])
    tj = np.concatenate([j, i, j])
    tk = np.concatenate([k, k, i])
    keys = (ti.astype(np.int64) * n + tj) * n + tk
    uniq, inv = np.unique(keys, return_inverse=True)
    totals = np.zeros(uniq.size)
    np.add.at(totals, inv, np.tile(h, 3))
    return float(np.abs(totals).sum())


def is_energy_preserving(F, samples=1000, tol=1e-10, seed=0):
    """Check ``|x^T F x^[2]| <= tol ||x||^3`` on random Gaussian states."""
    if samples < 1 or tol <= 0:
        raise ValueError("need samples >= 1 and tol > 0")
    F, n = _check_compact(F)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, samples))
    rates = np.einsum("ij,ij->j", X, eval_quadratic(F, X))
    norms = np.linalg.norm(X, axis=0)
    return bool(np.all(np.abs(rates) <= tol * norms**3))


@dataclass(frozen=True)
class ConstraintSystem:
    """Energy-preservation equalities ``C vec(F) = 0``.

    ``vec`` is the row-major vectorization of the (r, r(r+1)/2) operator, so
    entry ``F[i, c]`` sits at position ``i * r(r+1)/2 + c``. Row ``t``
    enforces the constraint for ``triple_index[t] = (i, j, k)``, i >= j >= k.
    """

    matrix: sparse.csr_matrix
    dim: int
    triple_index: tuple

    @property
    def num_constraints(self):
        return self.matrix.shape[0]

    def residual(self, F):
        return self.matrix @ np.asarray(F, dtype=float).ravel()


def build_constraint_matrix(r):
    """Assemble the delta-weighted energy-preservation constraints for size r.

    For each i >= j >= k the row encodes
    ``d_jk f_ijk + d_ik f_jik + d_ij f_kij = 0`` with ``d = 1`` on coincident
    indices and 1/2 otherwise. Coincident monomials are merged by summing
    their weights; the all-equal row (weight 3 on ``f_iii``) is scaled to 1.
    """
    if r < 1:
        raise ValueError(f"reduced dimension must be positive, got {r}")
    s = compact_width(r)

    def col(a, b, c):
        return a * s + vech_index(b, c, r)

    def w(a, b):
        return 1.0 if a == b else 0.5

    rows, cols, vals, triples = [], [], [], []
    t = 0
    for i in range(r):
        for j in range(i + 1):
            for k in range(j + 1):
                entries = {}
                for c, v in ((col(i, j, k), w(j, k)),
                             (col(j, i, k), w(i, k)),
                             (col(k, i, j), w(i, j))):
                    entries[c] = entries.get(c, 0.0) + v
                if i == j == k:
                    entries = {c: 1.0 for c in entries}
                for c, v in entries.items():
                    rows.append(t)
                    cols.append(c)
                    vals.append(v)
                triples.append((i, j, k))
                t += 1
    C = sparse.csr_matrix((vals, (rows, cols)), shape=(t, r * s))
    return ConstraintSystem(matrix=C, dim=r, triple_index=tuple(triples))


def empty_constraints(r):
    """A constraint system with no rows, i.e. unconstrained inference."""
    s = compact_width(r)
    return ConstraintSystem(matrix=sparse.csr_matrix((0, r * s)), dim=r, triple_index=())


def extract_submodel(A_hat, F_hat, r_sub):
    """Leading r_sub x r_sub block of ``A_hat`` and matching entries of ``F_hat``."""
    A_hat = np.asarray(A_hat, dtype=float)
    F_hat, r = _check_compact(np.asarray(F_hat, dtype=float))
    if A_hat.shape != (r, r):
        raise ValueError(f"A_hat shape {A_hat.shape} does not match F_hat dimension {r}")
    if not 1 <= r_sub <= r:
        raise ValueError(f"submodel size must lie in [1, {r}], got {r_sub}")
    j_sub, k_sub = vech_pairs(r_sub)
    cols = [vech_index(j, k, r) for j, k in zip(j_sub, k_sub)]
    return A_hat[:r_sub, :r_sub].copy(), F_hat[:r_sub, cols].copy()
