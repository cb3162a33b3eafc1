"""Error and statistics measures for comparing reduced and full trajectories."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TrajectoryPair",
    "AutocorrSeries",
    "ConstantSeriesError",
    "relative_state_error",
    "sample_autocorrelation",
    "field_autocorrelation",
    "nace",
]


class ConstantSeriesError(ValueError):
    """Autocorrelation is undefined for a series with zero variance."""


@dataclass(frozen=True)
class TrajectoryPair:
    """A full trajectory (n x K) and a reduced one (r x K) with its basis."""

    full: np.ndarray
    reduced_states: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        if self.full.shape[1] != self.reduced_states.shape[1]:
            raise ValueError("full and reduced trajectories have different lengths")
        if self.basis.shape != (self.full.shape[0], self.reduced_states.shape[0]):
            raise ValueError("basis shape does not match the trajectories")

    def reconstruction(self):
        return self.basis @ self.reduced_states


@dataclass(frozen=True)
class AutocorrSeries:
    rho: np.ndarray
    source: str = "full"
    excluded_rows: int = 0

    @property
    def k_max(self):
        return self.rho.size - 1


def relative_state_error(pairs):
    """Mean over trajectories of ``||X - Vr Xbar||_F^2 / ||X||_F^2``."""
    if not pairs:
        raise ValueError("no trajectories given")
    errs = []
    for pair in pairs:
        denom = np.sum(pair.full**2)
        if denom == 0:
            raise ValueError("a full trajectory has zero norm")
        errs.append(np.sum((pair.full - pair.reconstruction()) ** 2) / denom)
    return float(np.mean(errs))


def _autocov(x, k_max):
    """Biased autocovariances c_0..c_kmax along the last axis."""
    T = x.shape[-1]
    d = x - x.mean(axis=-1, keepdims=True)
    return np.stack([np.sum(d[..., : T - k] * d[..., k:], axis=-1) / T
                     for k in range(k_max + 1)], axis=-1)


def sample_autocorrelation(series, k_max):
    """``rho_k = c_k / c_0`` with ``c_k = 1/T sum_{t<T-k} (x_t - xbar)(x_{t+k} - xbar)``."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if not 0 <= k_max < x.size:
        raise ValueError(f"need 0 <= k_max < T={x.size}, got {k_max}")
    c = _autocov(x, k_max)
    if c[0] <= 0:
        raise ConstantSeriesError("series is constant; autocorrelation undefined")
    rho = c / c[0]
    rho[0] = 1.0
    return AutocorrSeries(rho=rho)


def field_autocorrelation(states, k_max, source="full", burn_in=0):
    """Per-grid-point sample autocorrelation averaged over space.

    Rows with zero variance are skipped and counted in ``excluded_rows``.
    ``burn_in`` drops that many leading time samples first.
    """
    X = np.asarray(states, dtype=float)[:, burn_in:]
    if not 0 <= k_max < X.shape[1]:
        raise ValueError(f"need 0 <= k_max < K={X.shape[1]}, got {k_max}")
    c = _autocov(X, k_max)
    var = c[:, 0]
    scale = np.max(np.abs(X)) if X.size else 0.0
    keep = var > (1e-14 * scale) ** 2
    if not keep.any():
        raise ConstantSeriesError("every row of the state matrix is constant")
    rho = np.mean(c[keep] / var[keep, None], axis=0)
    rho[0] = 1.0
    return AutocorrSeries(rho=rho, source=source, excluded_rows=int((~keep).sum()))


def nace(full, reduced_list):
    """Mean normalized autocorrelation error ``||rho_j - rhobar_j||^2 / ||rho_j||^2``.

    ``full`` is either one series shared by all reduced series or a list
    paired with ``reduced_list``.
    """
    if isinstance(full, AutocorrSeries):
        full = [full] * len(reduced_list)
    if len(full) != len(reduced_list) or not reduced_list:
        raise ValueError("need one full-model series per reduced series")
    errs = []
    for f, g in zip(full, reduced_list):
        if f.rho.shape != g.rho.shape:
            raise ValueError("autocorrelation lag grids differ")
        denom = np.sum(f.rho**2)
        if denom == 0:
            raise ValueError("full-model autocorrelation has zero norm")
        errs.append(np.sum((f.rho - g.rho) ** 2) / denom)
    return float(np.mean(errs))
