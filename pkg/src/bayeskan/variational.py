"""Mean-field Gaussian parameters, reparameterized draws and KL to the prior.

A scale is stored as an unconstrained ``rho`` and mapped through softplus.
Setting ``rho = RHO_FLOOR`` makes softplus underflow to exactly ``0.0``: the
parameter then behaves as a point mass, which is how deterministic baselines
and degenerate-posterior checks are expressed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

# softplus(-1000) underflows to 0.0 in float64
RHO_FLOOR = -1000.0


def softplus(rho):
    return np.logaddexp(0.0, rho)


def inverse_softplus(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("softplus is only invertible for sigma > 0")
    # log(expm1(s)) loses precision for large s; s + log1p(-exp(-s)) does not
    return sigma + np.log(-np.expm1(-sigma))


@dataclass
class GaussianVariational:
    mu: float
    rho: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.rho)):
            raise ValueError(f"non-finite variational parameter ({self.mu}, {self.rho})")

    @property
    def sigma(self) -> float:
        return float(softplus(self.rho))


@dataclass(frozen=True)
class PriorSpec:
    mu0: float = 0.0
    sigma0: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.mu0):
            raise ValueError("prior mean must be finite")
        if not (math.isfinite(self.sigma0) and self.sigma0 > 0):
            raise ValueError(f"prior sigma0 must be positive, got {self.sigma0}")


def sigma_of(p: GaussianVariational) -> float:
    return p.sigma


def reparam_sample(p: GaussianVariational, eps: float) -> float:
    """Return ``mu + sigma * eps`` for a caller-supplied standard normal ``eps``."""
    return p.mu + p.sigma * eps


def kl_terms(mu, rho, prior: PriorSpec) -> np.ndarray:
    """Elementwise ``KL(N(mu, softplus(rho)^2) || N(mu0, sigma0^2))``."""
    sigma = softplus(np.asarray(rho, dtype=float))
    mu = np.asarray(mu, dtype=float)
    with np.errstate(divide="ignore"):
        log_ratio = math.log(prior.sigma0) - np.log(sigma)
    return log_ratio + (sigma**2 + (mu - prior.mu0) ** 2) / (2.0 * prior.sigma0**2) - 0.5


def kl_gaussian(p: GaussianVariational, prior: PriorSpec) -> float:
    return float(kl_terms(p.mu, p.rho, prior))


def kl_gradients(mu, rho, prior: PriorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the summed KL with respect to ``mu`` and ``rho``."""
    mu = np.asarray(mu, dtype=float)
    rho = np.asarray(rho, dtype=float)
    sigma = softplus(rho)
    d_mu = (mu - prior.mu0) / prior.sigma0**2
    with np.errstate(divide="ignore", invalid="ignore"):
        d_sigma = -1.0 / sigma + sigma / prior.sigma0**2
    return d_mu, d_sigma * expit(rho)
