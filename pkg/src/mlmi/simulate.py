"""Standardized two-level population generation and missingness imposition.

Populations are bivariate (x, y) with x split into between- and
within-group normal components by its intraclass correlation, and y built
conditionally on x through a random-intercept/random-slope regression.
Specs are parametrized by the ICCs, the fixed slope, and the slope
variance; the residual variance and intercept variance follow so that
both variables have unit total variance:

    sigma2 = (1 - rho_y) - beta1^2 (1 - rho_x) - psi22 (1 - rho_x)
    psi11  = rho_y - beta1^2 rho_x - psi22 rho_x

Missingness is imposed through a latent score per row,

    r_star = alpha + lambda_x * x + lambda_y * y + eps,

with the cell masked where r_star > 0. The residual variance of eps is
calibrated so that var(r_star) = 1 exactly,

    var_eps = 1 - lambda_x^2 - lambda_y^2 - 2 lambda_x lambda_y cov(x, y),

hence the masked proportion is Phi(alpha) and alpha = Phi^{-1}(pi) hits a
target proportion pi. MCAR sets both lambdas to zero; MAR puts 0.5 on the
*other* (fully observed, driver) variable and zero on the target; MNAR
puts sqrt(0.25/3) on both, which reproduces the MAR residual variance
when cov(x, y) = 0.5.

Patterns: ``univariate_y`` and ``univariate_x`` mask a single column;
``multivariate`` flips a fair coin per row to pick the one candidate
column that may be masked (so no row ever loses both cells), then applies
the mechanism to that candidate with the other variable as MAR driver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .data import TwoLevelDataset
from .rng import SeededRng

PATTERNS = ("univariate_y", "univariate_x", "multivariate")
MECHANISMS = ("MCAR", "MAR", "MNAR")

#: MAR coefficient on the driver variable.
MAR_LAMBDA = 0.5
#: MNAR coefficient on both variables (equal by design, magnitude only).
MNAR_LAMBDA = math.sqrt(0.25 / 3.0)


class InvalidDesignError(ValueError):
    """Population parameters imply a negative variance component."""


class InvalidMechanismError(ValueError):
    """Missingness parameters are outside their valid region."""


def derive_variance_components(
    rho_x: float, rho_y: float, beta1: float, psi22: float
) -> tuple[float, float]:
    """Residual variance and intercept variance implied by the ICCs.

    Raises :class:`InvalidDesignError` when the implied sigma2 is not
    positive or psi11 is negative.
    """
    if not (0.0 < rho_x < 1.0 and 0.0 < rho_y < 1.0):
        raise InvalidDesignError(f"ICCs must lie in (0, 1), got rho_x={rho_x}, rho_y={rho_y}")
    if psi22 < 0.0:
        raise InvalidDesignError(f"slope variance must be nonnegative, got {psi22}")
    sigma2 = (1.0 - rho_y) - beta1**2 * (1.0 - rho_x) - psi22 * (1.0 - rho_x)
    psi11 = rho_y - beta1**2 * rho_x - psi22 * rho_x
    if sigma2 <= 0.0:
        raise InvalidDesignError(
            f"residual variance must be positive, got sigma2={sigma2:.6g} "
            f"(rho_x={rho_x}, rho_y={rho_y}, beta1={beta1}, psi22={psi22})"
        )
    if psi11 < 0.0:
        raise InvalidDesignError(
            f"intercept variance must be nonnegative, got psi11={psi11:.6g} "
            f"(rho_x={rho_x}, rho_y={rho_y}, beta1={beta1}, psi22={psi22})"
        )
    return sigma2, psi11


@dataclass(frozen=True)
class PopulationSpec:
    """Generation parameters for a balanced two-level bivariate population.

    The fixed intercept and the intercept-slope covariance are zero by
    standardization and are not configurable.
    """

    n_groups: int
    group_size: int
    rho_x: float
    rho_y: float
    beta1: float
    psi22: float

    def __post_init__(self):
        if self.n_groups < 1 or self.group_size < 1:
            raise InvalidDesignError("n_groups and group_size must be positive")
        derive_variance_components(self.rho_x, self.rho_y, self.beta1, self.psi22)

    @property
    def beta0(self) -> float:
        return 0.0

    @property
    def psi12(self) -> float:
        return 0.0

    @property
    def sigma2(self) -> float:
        return derive_variance_components(self.rho_x, self.rho_y, self.beta1, self.psi22)[0]

    @property
    def psi11(self) -> float:
        return derive_variance_components(self.rho_x, self.rho_y, self.beta1, self.psi22)[1]

    def truth(self) -> dict[str, float]:
        """Generating values of the analyst's-model parameters."""
        sigma2, psi11 = derive_variance_components(
            self.rho_x, self.rho_y, self.beta1, self.psi22
        )
        return {
            "beta0": 0.0,
            "beta1": self.beta1,
            "psi11": psi11,
            "psi22": self.psi22,
            "psi12": 0.0,
            "sigma2": sigma2,
        }


def generate_from_components(
    n_groups: int,
    group_size: int,
    rho_x: float,
    beta1: float,
    sigma2: float,
    psi11: float,
    psi22: float,
    rng: SeededRng,
) -> TwoLevelDataset:
    """Draw one complete dataset from explicit variance components.

    x is the sum of its between- and within-group normal portions; y is
    built row-wise as beta1*x + b0_j + b1_j*x + e with independent
    group-level intercepts/slopes. Zero components are honored exactly
    (no degenerate normal draws), so an all-zero y side yields y == 0.
    """
    for name, value in (("sigma2", sigma2), ("psi11", psi11), ("psi22", psi22)):
        if value < 0.0:
            raise InvalidDesignError(f"{name} must be nonnegative, got {value}")
    g, n = int(n_groups), int(group_size)
    total = g * n
    gen = rng.gen
    x_between = gen.normal(0.0, math.sqrt(rho_x), size=g) if rho_x > 0 else np.zeros(g)
    x_within = (
        gen.normal(0.0, math.sqrt(1.0 - rho_x), size=total) if rho_x < 1 else np.zeros(total)
    )
    b0 = gen.normal(0.0, math.sqrt(psi11), size=g) if psi11 > 0 else np.zeros(g)
    b1 = gen.normal(0.0, math.sqrt(psi22), size=g) if psi22 > 0 else np.zeros(g)
    e = gen.normal(0.0, math.sqrt(sigma2), size=total) if sigma2 > 0 else np.zeros(total)
    gidx = np.repeat(np.arange(g), n)
    x = x_between[gidx] + x_within
    y = beta1 * x + b0[gidx] + b1[gidx] * x + e
    return TwoLevelDataset.from_columns(gidx, x, y)


def generate_dataset(spec: PopulationSpec, rng: SeededRng) -> TwoLevelDataset:
    """Draw one complete dataset (groups labeled 0..G-1, contiguous rows)."""
    sigma2, psi11 = derive_variance_components(spec.rho_x, spec.rho_y, spec.beta1, spec.psi22)
    return generate_from_components(
        spec.n_groups, spec.group_size, spec.rho_x, spec.beta1, sigma2, psi11, spec.psi22, rng
    )


def alpha_for_proportion(pi: float) -> float:
    """Latent-score intercept hitting a target masked proportion.

    With unit-variance r_star, P(masked) = Phi(alpha), so alpha is the
    standard-normal quantile of pi.
    """
    if not 0.0 < pi < 1.0:
        raise ValueError(f"proportion must lie in (0, 1), got {pi}")
    return float(norm.ppf(pi))


def residual_variance_rstar(lambda1: float, lambda2: float, cov_xy: float) -> float:
    """Noise variance making var(r_star) = 1 for given selection coefficients."""
    var_eps = 1.0 - lambda1**2 - lambda2**2 - 2.0 * lambda1 * lambda2 * cov_xy
    if var_eps <= 0.0:
        raise InvalidMechanismError(
            f"latent residual variance must be positive, got {var_eps:.6g}"
        )
    return var_eps


def mechanism_coefficients(mechanism: str, target_variable: str) -> tuple[float, float]:
    """Selection coefficients (on x, on y) for masking ``target_variable``.

    MCAR: (0, 0). MAR: 0.5 on the other variable, 0 on the target.
    MNAR: sqrt(0.25/3) on both.
    """
    if mechanism not in MECHANISMS:
        raise InvalidMechanismError(f"unknown mechanism {mechanism!r}")
    if target_variable not in ("x", "y"):
        raise ValueError(f"target variable must be 'x' or 'y', got {target_variable!r}")
    if mechanism == "MCAR":
        return 0.0, 0.0
    if mechanism == "MNAR":
        return MNAR_LAMBDA, MNAR_LAMBDA
    return (0.0, MAR_LAMBDA) if target_variable == "x" else (MAR_LAMBDA, 0.0)


@dataclass(frozen=True)
class MissingnessSpec:
    """Pattern, mechanism, and latent-model coefficients for amputation.

    ``lambda_other`` weights the non-target (driver) variable and
    ``lambda_self`` the target itself; ``cov_xy`` is the population
    covariance of x and y entering the variance calibration (0.5 for all
    standard designs, where cov(x, y) = beta1).
    """

    pattern: str
    mechanism: str
    proportion: float
    lambda_other: float
    lambda_self: float
    alpha: float
    cov_xy: float = 0.5

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise InvalidMechanismError(f"unknown pattern {self.pattern!r}")
        if self.mechanism not in MECHANISMS:
            raise InvalidMechanismError(f"unknown mechanism {self.mechanism!r}")
        if not 0.0 < self.proportion < 1.0:
            raise InvalidMechanismError(f"proportion must lie in (0, 1), got {self.proportion}")
        if self.mechanism == "MCAR" and (self.lambda_other != 0.0 or self.lambda_self != 0.0):
            raise InvalidMechanismError("MCAR requires both lambdas to be zero")
        if self.mechanism == "MAR" and self.lambda_self != 0.0:
            raise InvalidMechanismError("MAR requires lambda_self = 0")
        residual_variance_rstar(self.lambda_other, self.lambda_self, self.cov_xy)

    @classmethod
    def create(
        cls, pattern: str, mechanism: str, proportion: float, cov_xy: float = 0.5
    ) -> "MissingnessSpec":
        """Standard spec for (pattern, mechanism, proportion)."""
        if mechanism not in MECHANISMS:
            raise InvalidMechanismError(f"unknown mechanism {mechanism!r}")
        if mechanism == "MCAR":
            lam_other, lam_self = 0.0, 0.0
        elif mechanism == "MAR":
            lam_other, lam_self = MAR_LAMBDA, 0.0
        else:
            lam_other, lam_self = MNAR_LAMBDA, MNAR_LAMBDA
        return cls(
            pattern=pattern,
            mechanism=mechanism,
            proportion=proportion,
            lambda_other=lam_other,
            lambda_self=lam_self,
            alpha=alpha_for_proportion(proportion),
            cov_xy=cov_xy,
        )

    @property
    def residual_variance(self) -> float:
        return residual_variance_rstar(self.lambda_other, self.lambda_self, self.cov_xy)


def impose_missing(
    ds: TwoLevelDataset, mspec: MissingnessSpec, rng: SeededRng
) -> TwoLevelDataset:
    """Mask cells of a complete dataset according to ``mspec``.

    Observed cells keep their stored values bit for bit. Uses two derived
    streams: substream 0 for latent noise, substream 1 for the per-row
    coin of the multivariate pattern, so the candidate pattern is
    reproducible independently of the noise draws.
    """
    if not ds.is_complete():
        raise ValueError("amputation requires a complete dataset")
    n = ds.n_rows
    var_eps = mspec.residual_variance
    noise = rng.substream(0).gen.normal(0.0, math.sqrt(var_eps), size=n)

    x, y = ds.x, ds.y
    if mspec.pattern == "multivariate":
        coin_x = rng.substream(1).gen.random(n) < 0.5  # True: x is the candidate
        driver = np.where(coin_x, y, x)
        candidate = np.where(coin_x, x, y)
        r_star = mspec.alpha + mspec.lambda_other * driver + mspec.lambda_self * candidate + noise
        masked = r_star > 0.0
        x_obs = ~(masked & coin_x)
        y_obs = ~(masked & ~coin_x)
    else:
        target_is_y = mspec.pattern == "univariate_y"
        driver = x if target_is_y else y
        target = y if target_is_y else x
        r_star = mspec.alpha + mspec.lambda_other * driver + mspec.lambda_self * target + noise
        masked = r_star > 0.0
        x_obs = np.ones(n, dtype=bool) if target_is_y else ~masked
        y_obs = ~masked if target_is_y else np.ones(n, dtype=bool)
    return TwoLevelDataset(ds.group_labels, x, y, x_obs, y_obs)
