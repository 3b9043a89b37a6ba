"""Variance-Gamma laws: parameters, density, cumulants and sampling.

The four-parameter law VG(r, theta, sigma, mu) has density

    p(x) = exp(theta (x - mu) / sigma^2) / (sigma sqrt(pi) Gamma(r/2))
           * (|x - mu| / (2 sqrt(theta^2 + sigma^2)))^((r-1)/2)
           * K_{(r-1)/2}(sqrt(theta^2 + sigma^2) |x - mu| / sigma^2).

The centered family fixes ``mu = -r theta`` so that the mean is zero.  A
centered VG variable can be written ``theta (G - r) + sigma sqrt(G) N`` with
``G ~ Gamma(shape r/2, rate 1/2)`` and ``N`` standard normal, independent.
"""
from dataclasses import dataclass
from math import factorial, isfinite, lgamma, log, pi, sqrt
import warnings

import numpy as np

from . import _mc
from .special import bessel_k_scaled, log_gamma

__all__ = [
    "VgParams",
    "ChaosVgParams",
    "density",
    "cumulants_2_to_6",
    "cumulant_identity_residual",
    "sample",
    "char_fn_inv_sq",
    "from_chaos_params",
    "expectation",
]


class SingularDensityWarning(RuntimeWarning):
    """Density requested at the location point where it is infinite."""


@dataclass(frozen=True)
class VgParams:
    """Parameters ``(r, theta, sigma, mu)`` of a Variance-Gamma law.

    ``mu`` defaults to ``-r * theta`` (the centered family).
    """

    r: float
    theta: float
    sigma: float
    mu: float | None = None

    def __post_init__(self):
        if not (self.r > 0 and isfinite(self.r)):
            raise ValueError(f"r must be positive and finite, got {self.r}")
        if not (self.sigma > 0 and isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")
        if not isfinite(self.theta):
            raise ValueError("theta must be finite")
        if self.mu is None:
            object.__setattr__(self, "mu", 0.0 - self.r * self.theta)

    @property
    def centered(self) -> bool:
        return self.mu == -self.r * self.theta

    @property
    def nu(self) -> float:
        return 0.5 * (self.r - 1.0)

    @property
    def mean(self) -> float:
        return self.mu + self.r * self.theta

    @property
    def variance(self) -> float:
        return self.r * (self.sigma**2 + 2.0 * self.theta**2)

    def to_dict(self):
        return {"r": self.r, "theta": self.theta, "sigma": self.sigma, "mu": self.mu}


@dataclass(frozen=True)
class ChaosVgParams:
    """Second-chaos parametrization: ``r`` copies of each eigenvalue ``alpha`` and ``-beta``."""

    alpha: float
    beta: float
    r: int

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"r must be a positive integer, got {self.r}")

    @property
    def theta(self) -> float:
        return self.alpha - self.beta

    @property
    def sigma(self) -> float:
        return 2.0 * sqrt(self.alpha * self.beta)


def from_chaos_params(c: ChaosVgParams) -> VgParams:
    """Centered VG law equal in distribution to ``sum alpha (N^2-1) - beta (M^2-1)``, r copies."""
    return VgParams(r=float(c.r), theta=c.theta, sigma=c.sigma)


def _require_centered(p: VgParams):
    if not p.centered:
        raise ValueError("this operation is defined for the centered family (mu = -r*theta)")


def density(p: VgParams, x):
    """VG density at ``x`` (scalar or array).

    At ``x = mu`` the density is finite for ``r > 1`` and infinite for
    ``r <= 1``; in the latter case ``inf`` is returned and a
    :class:`SingularDensityWarning` is emitted.
    """
    x_arr = np.asarray(x, dtype=float)
    u = x_arr - p.mu
    s = sqrt(p.theta**2 + p.sigma**2)
    s2 = p.sigma**2
    nu = abs(p.nu)  # K_{-nu} = K_nu
    log_norm = -log(p.sigma) - 0.5 * log(pi) - lgamma(0.5 * p.r)
    au = np.abs(u)
    z = s * au / s2
    at_mu = z < 1e-300
    zsafe = np.where(at_mu, 1.0, z)
    logk = np.log(np.asarray(bessel_k_scaled(nu, zsafe))) - zsafe
    logpow = p.nu * np.log(np.where(at_mu, 1.0, au) / (2.0 * s))
    val = np.exp(log_norm + p.theta * u / s2 + logpow + logk)
    if np.any(at_mu):
        if p.r > 1:
            # (|u|/2s)^nu K_nu(s|u|/sigma^2) -> (sigma^2/(2 s^2))^nu 2^(nu-1) Gamma(nu)
            lim = nu * log(s2 / (2 * s * s)) + (nu - 1) * log(2.0) + float(log_gamma(nu))
            val = np.where(at_mu, np.exp(log_norm + lim), val)
        else:
            warnings.warn("density is infinite at x = mu when r <= 1", SingularDensityWarning, stacklevel=2)
            val = np.where(at_mu, np.inf, val)
    return val.item() if val.ndim == 0 else val


def cumulants_2_to_6(p: VgParams) -> np.ndarray:
    """Exact cumulants ``(kappa_2, ..., kappa_6)`` of a centered VG law."""
    _require_centered(p)
    r, t, s = p.r, p.theta, p.sigma
    s2, t2 = s * s, t * t
    return np.array([
        r * (s2 + 2 * t2),
        2 * r * t * (3 * s2 + 4 * t2),
        6 * r * (s2 * s2 + 8 * s2 * t2 + 8 * t2 * t2),
        24 * r * t * (5 * s2 * s2 + 20 * s2 * t2 + 16 * t2 * t2),
        120 * r * (s2 + 2 * t2) * (s2 * s2 + 16 * s2 * t2 + 16 * t2 * t2),
    ])


def cumulant_identity_terms(p: VgParams) -> np.ndarray:
    """The five summands of the linear cumulant relation satisfied by VG laws."""
    k2, k3, k4, k5, k6 = cumulants_2_to_6(p)
    t, s2 = p.theta, p.sigma**2
    return np.array([
        k6 / factorial(5),
        -4 * t * k5 / factorial(4),
        (4 * t * t - 2 * s2) * k4 / factorial(3),
        4 * t * s2 * k3 / factorial(2),
        s2 * s2 * k2,
    ])


def cumulant_identity_residual(p: VgParams) -> float:
    """Relative residual ``|sum terms| / sum |terms|`` of the linear cumulant relation."""
    terms = cumulant_identity_terms(p)
    scale = np.abs(terms).sum()
    return float(abs(terms.sum()) / scale) if scale > 0 else 0.0


def sample(p: VgParams, n: int, seed: int, workers: int = 1) -> np.ndarray:
    """Draw ``n`` i.i.d. centered VG variates, deterministic in ``seed``.

    Uses ``theta (G - r) + sigma sqrt(G) N`` with ``G = 2 * Gamma(r/2, 1)``.
    """
    _require_centered(p)
    if n < 0:
        raise ValueError("n must be >= 0")
    shape = 0.5 * p.r

    def draw(gen, size):
        g = 2.0 * gen.standard_gamma(shape, size)
        z = gen.standard_normal(size)
        return p.theta * (g - p.r) + p.sigma * np.sqrt(g) * z

    return _mc.chunked_draw(seed, n, draw, workers=workers)


def char_fn_inv_sq(p: VgParams, t):
    """``1 / phi_Y(t)^2 = exp(2i t theta r) (1 - 2i theta t + sigma^2 t^2)^r``."""
    _require_centered(p)
    t = np.asarray(t, dtype=float)
    base = 1.0 - 2j * p.theta * t + p.sigma**2 * t * t
    # principal branch is correct: Re(base) >= 1 > 0
    out = np.exp(2j * t * p.theta * p.r) * base ** p.r
    return out.item() if out.ndim == 0 else out


def _mass_window(p: VgParams, tail: float = 1e-10):
    """Interval around ``mu`` outside which the VG law puts less than ``tail`` mass."""
    s = sqrt(p.theta**2 + p.sigma**2)
    a = s / p.sigma**2
    b = p.theta / p.sigma**2
    # density decays like |u|^nu exp(-(a -+ b)|u|); pad generously for the power factor
    lo_rate = a + b
    hi_rate = a - b
    pad = max(abs(p.nu), 1.0)
    lo = p.mu - (-log(tail) + pad * 10.0) / lo_rate
    hi = p.mu + (-log(tail) + pad * 10.0) / hi_rate
    return lo, hi


def expectation(p: VgParams, h, tail: float = 1e-10) -> float:
    """``E h(Y)`` by adaptive quadrature against the density.

    The window captures all but ``tail`` of the mass; the location point is
    passed as a breakpoint so the (possibly singular) peak is resolved.
    """
    from scipy.integrate import quad

    lo, hi = _mass_window(p, tail)

    def integrand(x):
        if x == p.mu:
            return 0.0
        return h(x) * density(p, x)

    left, _ = quad(integrand, lo, p.mu, limit=400, epsabs=1e-13, epsrel=1e-12)
    right, _ = quad(integrand, p.mu, hi, limit=400, epsabs=1e-13, epsrel=1e-12)
    return left + right
