"""Dense symmetric linear algebra and covariance sampling primitives.

Symmetric matrices are plain ``(p, p)`` float ndarrays; symmetry is
required within 1e-12 (absolute, relative to the largest entry) and
positive definiteness is established by Cholesky success. A failed
factorization gets one jitter retry of ``1e-10 * trace/p`` on the
diagonal before :class:`NotPositiveDefiniteError` is raised; callers
treat that as a degenerate state.

Everything here is pure given an explicit :class:`~mlmi.rng.SeededRng`,
so concurrent use with distinct streams is safe. Intended scale is
small dense matrices (p up to ~8).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .rng import SeededRng

#: Relative size of the one-shot diagonal jitter applied before declaring
#: a matrix degenerate.
JITTER_SCALE = 1e-10

_SYM_TOL = 1e-12


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Factorization failed: matrix is not positive definite (after jitter)."""


def _as_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if float(np.max(np.abs(a - a.T))) > _SYM_TOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return (a + a.T) / 2.0


def ensure_spd(a: np.ndarray) -> np.ndarray:
    """Return ``a`` (or ``a`` plus one diagonal jitter) if positive definite.

    Raises :class:`NotPositiveDefiniteError` if the jittered matrix still
    fails to factor.
    """
    a = _as_symmetric(a)
    try:
        np.linalg.cholesky(a)
        return a
    except np.linalg.LinAlgError:
        pass
    p = a.shape[0]
    jitter = JITTER_SCALE * np.trace(a) / max(p, 1)
    if jitter > 0:
        a_j = a + jitter * np.eye(p)
        try:
            np.linalg.cholesky(a_j)
            return a_j
        except np.linalg.LinAlgError:
            pass
    raise NotPositiveDefiniteError("matrix is not positive definite (jitter retry failed)")


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L @ L.T == a, for symmetric positive definite a."""
    return np.linalg.cholesky(ensure_spd(a))


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """A square root for positive *semi*definite cov (eigen fallback)."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        scale = max(1.0, float(w[-1]))
        if w[0] < -1e-8 * scale:
            raise NotPositiveDefiniteError("covariance has a significantly negative eigenvalue")
        return v * np.sqrt(np.clip(w, 0.0, None))


def sample_mvnormal(
    mean: np.ndarray,
    cov: np.ndarray,
    rng: SeededRng,
    size: int | None = None,
) -> np.ndarray:
    """Draw from N(mean, cov) as mean + L z with z iid standard normal.

    cov may be merely positive semidefinite (a zero matrix returns the
    mean exactly). With ``size`` given, returns a ``(size, p)`` array of
    independent draws.
    """
    mean = np.asarray(mean, dtype=float)
    cov = _as_symmetric(cov)
    if mean.ndim != 1 or cov.shape[0] != mean.shape[0]:
        raise ValueError(
            f"dimension mismatch: mean has length {mean.shape}, cov shape {cov.shape}"
        )
    root = _psd_sqrt(cov)
    if size is None:
        return mean + root @ rng.gen.standard_normal(mean.shape[0])
    z = rng.gen.standard_normal((size, mean.shape[0]))
    return mean + z @ root.T


def sample_invwishart(scale: np.ndarray, df: float, rng: SeededRng) -> np.ndarray:
    """Draw W from the inverse-Wishart with the given scale matrix and df.

    Density convention: p(W) ∝ |W|^(-(df+p+1)/2) exp(-tr(scale W^-1)/2),
    so for df > p+1 the mean is scale / (df - p - 1) and the prior acts as
    df pseudo-observations with guess scale/df.

    Sampling goes through the Bartlett factorization of the Wishart draw
    for W^-1: with C = chol(scale) and A the Bartlett lower-triangular
    factor, W = C (A A^T)^-1 C^T, which is symmetric positive definite by
    construction.
    """
    scale = _as_symmetric(scale)
    p = scale.shape[0]
    if df <= p - 1:
        raise ValueError(f"df must exceed p-1 = {p - 1}, got {df}")
    c = cholesky(scale)
    a = np.zeros((p, p))
    for i in range(p):
        a[i, i] = np.sqrt(rng.gen.chisquare(df - i))
    if p > 1:
        rows, cols = np.tril_indices(p, k=-1)
        a[rows, cols] = rng.gen.standard_normal(rows.shape[0])
    # T = A^-1 C^T  =>  W = T^T T = C (A A^T)^-1 C^T
    t = solve_triangular(a, c.T, lower=True)
    w = t.T @ t
    return (w + w.T) / 2.0


def conditional_coefficients(
    cov: np.ndarray, observed_idx: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gaussian conditioning pieces for a fixed observed-index pattern.

    Returns ``(missing_idx, reg, cond_cov)`` where ``reg`` is the
    regression matrix Σ_MO Σ_OO^-1 and ``cond_cov`` the conditional
    covariance Σ_MM - reg Σ_OM. ``missing_idx`` is the ascending
    complement of ``observed_idx``.
    """
    cov = _as_symmetric(cov)
    p = cov.shape[0]
    obs = np.asarray(sorted(set(int(i) for i in np.atleast_1d(observed_idx))), dtype=int)
    if obs.size and (obs[0] < 0 or obs[-1] >= p):
        raise ValueError(f"observed indices out of range for dimension {p}")
    mis = np.setdiff1d(np.arange(p), obs)
    if obs.size == 0:
        return mis, np.zeros((p, 0)), cov.copy()
    c_oo = ensure_spd(cov[np.ix_(obs, obs)])
    c_mo = cov[np.ix_(mis, obs)]
    reg = np.linalg.solve(c_oo, c_mo.T).T
    cond = cov[np.ix_(mis, mis)] - reg @ c_mo.T
    return mis, reg, (cond + cond.T) / 2.0


def conditional_normal(
    mean: np.ndarray,
    cov: np.ndarray,
    observed_idx: np.ndarray,
    observed_vals: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Condition N(mean, cov) on components ``observed_idx`` = ``observed_vals``.

    Returns the conditional mean and covariance of the remaining
    components, ordered by ascending index. With nothing observed, the
    inputs come back unchanged; with everything observed, both returns
    are empty. ``observed_vals`` pairs positionally with ``observed_idx``
    in whatever order the indices are given.
    """
    mean = np.asarray(mean, dtype=float)
    idx = np.atleast_1d(np.asarray(observed_idx, dtype=int))
    vals = np.atleast_1d(np.asarray(observed_vals, dtype=float))
    if vals.shape != idx.shape:
        raise ValueError(f"expected {idx.size} observed values, got shape {vals.shape}")
    order = np.argsort(idx)
    idx, vals = idx[order], vals[order]
    mis, reg, cond_cov = conditional_coefficients(cov, idx)
    if idx.size == 0:
        return mean.copy(), cond_cov
    cond_mean = mean[mis] + reg @ (vals - mean[idx])
    return cond_mean, cond_cov
