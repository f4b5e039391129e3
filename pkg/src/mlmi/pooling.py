"""Combining estimates across imputations and across replications.

Across the M imputed-data fits, point estimates are pooled by averaging;
the between-imputation variance B is the sample variance of the M
estimates, and where a per-fit sampling variance exists (fixed effects,
from the fitter's observed-information block) the total variance follows
the usual T = W + (1 + 1/M) B with df = (M-1)(1 + W/((1+1/M)B))^2.
Variance components carry point estimates and B only.

Across Monte Carlo replications, bias is mean(estimate) - truth and RMSE
is sqrt(mean((estimate - truth)^2)); rmse^2 = bias^2 + population
variance of the estimates holds identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mixedfit import PARAM_NAMES, RcModelFit


class PoolingError(ValueError):
    """Not enough usable fits to pool."""


@dataclass(frozen=True)
class ParamPool:
    """Pooled quantities for one parameter (within/total may be absent)."""

    estimate: float
    between: float
    within: float | None
    total: float | None
    df: float | None


@dataclass(frozen=True)
class PooledEstimates:
    params: dict[str, ParamPool]
    m_used: int
    n_excluded: int

    def point_estimates(self) -> dict[str, float]:
        return {name: pool.estimate for name, pool in self.params.items()}


def pool_rubin(fits: list[RcModelFit]) -> PooledEstimates:
    """Pool M analyst's-model fits; non-converged fits are excluded."""
    usable = [f for f in fits if f.converged]
    excluded = len(fits) - len(usable)
    m = len(usable)
    if m < 2:
        raise PoolingError(f"pooling needs at least 2 converged fits, got {m}")
    params: dict[str, ParamPool] = {}
    for name in PARAM_NAMES:
        values = np.array([getattr(f, name) for f in usable])
        est = float(values.mean())
        between = float(values.var(ddof=1))
        within = total = df = None
        if name in ("beta0", "beta1"):
            k = 0 if name == "beta0" else 1
            variances = [f.beta_cov[k, k] for f in usable if f.beta_cov is not None]
            if len(variances) == m:
                within = float(np.mean(variances))
                total = within + (1.0 + 1.0 / m) * between
                if between > 0.0:
                    df = (m - 1) * (1.0 + within / ((1.0 + 1.0 / m) * between)) ** 2
                else:
                    df = math.inf
        params[name] = ParamPool(est, between, within, total, df)
    return PooledEstimates(params=params, m_used=m, n_excluded=excluded)


def bias(estimates, truth: float) -> float:
    """Mean deviation of the estimates from the generating value."""
    values = np.asarray(estimates, dtype=float)
    if values.size == 0:
        raise ValueError("bias needs at least one estimate")
    return float(values.mean() - truth)


def rmse(estimates, truth: float) -> float:
    """Root mean squared deviation of the estimates from the generating value."""
    values = np.asarray(estimates, dtype=float)
    if values.size == 0:
        raise ValueError("rmse needs at least one estimate")
    return float(np.sqrt(np.mean((values - truth) ** 2)))


@dataclass(frozen=True)
class CellMetrics:
    """Bias/RMSE per parameter for one design cell and method."""

    bias: dict[str, float]
    rmse: dict[str, float]
    n_reps: int
    n_converged: int

    @classmethod
    def from_estimates(
        cls,
        estimates: dict[str, list[float]],
        truth: dict[str, float],
        n_reps: int,
    ) -> "CellMetrics":
        n_conv = min((len(v) for v in estimates.values()), default=0)
        b = {name: bias(values, truth[name]) for name, values in estimates.items()}
        r = {name: rmse(values, truth[name]) for name, values in estimates.items()}
        return cls(bias=b, rmse=r, n_reps=n_reps, n_converged=n_conv)
