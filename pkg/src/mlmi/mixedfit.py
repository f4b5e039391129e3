"""Maximum-likelihood estimation of the two-level random-slope regression.

The analyst's model regresses y on x with a group-varying intercept and
slope,

    y_ij = beta0 + beta1 x_ij + b0_j + b1_j x_ij + e_ij,
    (b0_j, b1_j) ~ N(0, Psi),  e_ij ~ N(0, sigma2),

and is estimated by full ML (not REML). The 2x2 random-effect covariance
is profiled through Delta = Psi / sigma2, parametrized by its lower
Cholesky factor (3 free values, diagonal in absolute value so the zero
boundary stays feasible). For a fixed factor, beta is the GLS solution
and sigma2 has the closed form rss/n; the remaining 3-dimensional
profiled deviance is minimized with Nelder-Mead.

All per-group quantities reduce to the sufficient statistics
(X_j'X_j, X_j'y_j, y_j'y_j, n_j) with X_j = [1, x_j] shared by the fixed
and random design, so one deviance evaluation is a handful of batched
2x2 operations regardless of the row count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .data import TwoLevelDataset, group_blocks, listwise_delete

PARAM_NAMES = ("beta0", "beta1", "psi11", "psi22", "psi12", "sigma2")

_LOG_2PI = math.log(2.0 * math.pi)


class FitError(RuntimeError):
    """The model cannot be estimated on the given data."""


@dataclass(frozen=True)
class FitConfig:
    """Optimizer controls: absolute deviance tolerance, iteration cap,
    and the scale of the random-effect variance used for the start value
    (Delta starts at diag(start_scale, start_scale) / sigma2_ols)."""

    ftol: float = 1e-8
    max_iter: int = 2000
    start_scale: float = 0.1

    def __post_init__(self):
        if self.ftol <= 0:
            raise ValueError("ftol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass(frozen=True)
class RcModelFit:
    """ML estimates of the analyst's model plus fit metadata.

    ``beta_cov`` is the GLS covariance of (beta0, beta1) at the optimum
    (the observed-information block for the fixed effects); variance
    components carry no sampling variance here.
    """

    beta0: float
    beta1: float
    psi11: float
    psi22: float
    psi12: float
    sigma2: float
    loglik: float
    converged: bool
    n_used: int
    g_used: int
    beta_cov: np.ndarray | None = None

    def params(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in PARAM_NAMES}


class _ProfiledProblem:
    """Per-group sufficient statistics and the profiled-deviance evaluator."""

    def __init__(self, ds: TwoLevelDataset):
        order, starts, sizes = group_blocks(ds)
        x = ds.x[order]
        y = ds.y[order]
        ones = np.ones_like(x)
        design = np.stack([ones, x], axis=1)  # X_j == Z_j row-wise
        outer = design[:, :, None] * design[:, None, :]
        self.m = np.add.reduceat(outer, starts, axis=0)  # (G, 2, 2)
        self.v = np.add.reduceat(design * y[:, None], starts, axis=0)  # (G, 2)
        self.s = np.add.reduceat(y * y, starts)  # (G,)
        self.n = int(x.shape[0])
        self.g = int(sizes.shape[0])
        self.m_tot = self.m.sum(axis=0)
        self.v_tot = self.v.sum(axis=0)
        self.s_tot = float(self.s.sum())

    def ols(self) -> tuple[np.ndarray, float]:
        beta = np.linalg.solve(self.m_tot, self.v_tot)
        rss = self.s_tot - self.v_tot @ beta
        return beta, max(float(rss), 1e-300) / self.n

    def deviance_parts(self, chol_delta: np.ndarray):
        """GLS pieces at a fixed Delta factor; None signals degeneracy."""
        L = chol_delta
        b = self.m @ L  # (G,2,2): M_j L
        k = np.eye(2) + np.einsum("ab,gbc->gac", L.T, b)  # I + L' M_j L
        det = k[:, 0, 0] * k[:, 1, 1] - k[:, 0, 1] * k[:, 1, 0]
        if np.any(det <= 0.0) or not np.all(np.isfinite(det)):
            return None
        kinv = np.empty_like(k)
        kinv[:, 0, 0] = k[:, 1, 1]
        kinv[:, 1, 1] = k[:, 0, 0]
        kinv[:, 0, 1] = -k[:, 0, 1]
        kinv[:, 1, 0] = -k[:, 1, 0]
        kinv /= det[:, None, None]
        lv = self.v @ L  # (G,2): L' v_j  (v_j' L == (L' v_j)')
        ki_lv = np.einsum("gab,gb->ga", kinv, lv)
        b_ki = np.einsum("gab,gbc->gac", b, kinv)
        xtvix = self.m - np.einsum("gab,gcb->gac", b_ki, b)
        xtviy = self.v - np.einsum("gab,gb->ga", b, ki_lv)
        ytviy = self.s - np.einsum("ga,ga->g", lv, ki_lv)
        a = xtvix.sum(axis=0)
        c = xtviy.sum(axis=0)
        q = float(ytviy.sum())
        logdet = float(np.log(det).sum())
        try:
            beta = np.linalg.solve(a, c)
        except np.linalg.LinAlgError:
            return None
        rss = q - float(c @ beta)
        if not np.isfinite(rss) or rss <= 0.0:
            return None
        return beta, rss, logdet, a

    def deviance(self, chol_delta: np.ndarray) -> float:
        parts = self.deviance_parts(chol_delta)
        if parts is None:
            return float("inf")
        _, rss, logdet, _ = parts
        sigma2 = rss / self.n
        return self.n * (_LOG_2PI + math.log(sigma2) + 1.0) + logdet


def _theta_to_chol(theta: np.ndarray) -> np.ndarray:
    return np.array([[abs(theta[0]), 0.0], [theta[1], abs(theta[2])]])


def profiled_deviance(theta_chol: np.ndarray, ds: TwoLevelDataset) -> float:
    """-2 * profiled log-likelihood at a fixed Cholesky factor of Delta.

    ``theta_chol`` must be 2x2 lower triangular with nonnegative diagonal.
    Degenerate evaluations return +inf so optimizers back off.
    """
    theta_chol = np.asarray(theta_chol, dtype=float)
    if theta_chol.shape != (2, 2) or theta_chol[0, 1] != 0.0:
        raise ValueError("theta_chol must be 2x2 lower triangular")
    if theta_chol[0, 0] < 0.0 or theta_chol[1, 1] < 0.0:
        raise ValueError("theta_chol diagonal must be nonnegative")
    if not ds.is_complete():
        raise FitError("profiled deviance requires complete data")
    return _ProfiledProblem(ds).deviance(theta_chol)


def _fit_from_problem(prob: _ProfiledProblem, cfg: FitConfig) -> RcModelFit:
    if prob.g < 2:
        raise FitError(f"need at least 2 groups, got {prob.g}")
    if prob.n < 3:
        raise FitError(f"need at least 3 rows, got {prob.n}")
    try:
        _, sigma2_ols = prob.ols()
    except np.linalg.LinAlgError:
        raise FitError("design matrix is singular (constant x?)") from None

    def objective(theta):
        return prob.deviance(_theta_to_chol(theta))

    d0 = math.sqrt(cfg.start_scale / sigma2_ols)
    options = {"fatol": cfg.ftol, "xatol": 1e-8, "maxiter": cfg.max_iter}
    res = minimize(objective, np.array([d0, 0.0, d0]), method="Nelder-Mead", options=options)
    if not res.success:
        retry = minimize(
            objective,
            np.array([math.sqrt(0.5), 0.0, math.sqrt(0.5)]),
            method="Nelder-Mead",
            options=options,
        )
        if retry.fun <= res.fun:
            res = retry
    chol = _theta_to_chol(res.x)
    parts = prob.deviance_parts(chol)
    if parts is None:
        raise FitError("optimizer terminated in a degenerate region")
    beta, rss, logdet, a = parts
    sigma2 = rss / prob.n
    delta = chol @ chol.T
    psi = sigma2 * delta
    deviance = prob.n * (_LOG_2PI + math.log(sigma2) + 1.0) + logdet
    return RcModelFit(
        beta0=float(beta[0]),
        beta1=float(beta[1]),
        psi11=float(psi[0, 0]),
        psi22=float(psi[1, 1]),
        psi12=float(psi[0, 1]),
        sigma2=float(sigma2),
        loglik=-deviance / 2.0,
        converged=bool(res.success),
        n_used=prob.n,
        g_used=prob.g,
        beta_cov=sigma2 * np.linalg.inv(a),
    )


def fit_rc_ml(ds: TwoLevelDataset, cfg: FitConfig | None = None) -> RcModelFit:
    """ML fit of the random-slope model on complete data.

    Boundary estimates (zero variance components) are legitimate results,
    not failures; non-convergence within the iteration budget returns the
    best-found parameters with ``converged=False``.
    """
    if not ds.is_complete():
        raise FitError("fit_rc_ml requires complete data; use fit_with_ld for masked data")
    return _fit_from_problem(_ProfiledProblem(ds), cfg or FitConfig())


def fit_with_ld(ds: TwoLevelDataset, cfg: FitConfig | None = None) -> RcModelFit:
    """Listwise-delete rows with any masked cell, then fit by ML.

    ``n_used``/``g_used`` report the post-deletion sample.
    """
    kept = listwise_delete(ds, ("x", "y"))
    if kept.n_rows == 0:
        raise FitError("no complete cases left after listwise deletion")
    return fit_rc_ml(kept, cfg)
