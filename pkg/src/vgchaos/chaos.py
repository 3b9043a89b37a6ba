"""Second-chaos elements ``F = sum_i c_i (N_i^2 - 1)`` described by their spectrum.

Every quantity here is a functional of the eigenvalues ``c_i``:

* cumulants ``kappa_p(F) = 2^(p-1) (p-1)! sum c_i^p``;
* the iterated Gamma statistics ``Gamma_j(F)``, whose centered part is
  ``2^j sum c_i^(j+1) (N_i^2 - 1)``, so means and covariances are again
  cumulants: ``E Gamma_j = kappa_{j+1} / j!`` and
  ``Cov(Gamma_j, Gamma_k) = kappa_{j+k+2} / (j+k+1)!``.
"""
from dataclasses import dataclass
from math import factorial, fsum, sqrt
import json

import numpy as np

from . import _mc
from ._accel import jit
from .vg import ChaosVgParams, VgParams, cumulants_2_to_6

__all__ = [
    "SecondChaosElement",
    "cumulant",
    "cumulants",
    "sample",
    "sample_coupled",
    "gamma_mixed_mean",
    "gamma_lin_variance",
    "gamma_lin_variance_spectral",
    "gamma_lin_coefficients",
    "gamma_split_variance",
    "gamma_split_variance_spectral",
    "variance_chain_constant",
    "m_statistic",
    "m_statistic_detail",
]

MAX_ORDER = 12


class ConsistencyError(ArithmeticError):
    """A quantity that must be a variance came out clearly negative."""


@dataclass(frozen=True, eq=False)
class SecondChaosElement:
    """Finite spectrum ``c_1..c_m`` (nonzero reals) of a second-chaos variable."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        c = np.array(self.eigenvalues, dtype=float).ravel()
        if c.size == 0:
            raise ValueError("spectrum must be non-empty")
        if not np.all(np.isfinite(c)):
            raise ValueError("spectrum entries must be finite")
        if np.any(c == 0):
            raise ValueError("spectrum entries must be nonzero")
        c.setflags(write=False)
        object.__setattr__(self, "eigenvalues", c)

    def __eq__(self, other):
        return isinstance(other, SecondChaosElement) and np.array_equal(self.eigenvalues, other.eigenvalues)

    def __hash__(self):
        return hash(self.eigenvalues.tobytes())

    def __len__(self):
        return self.eigenvalues.size

    @classmethod
    def from_chaos_params(cls, c: ChaosVgParams) -> "SecondChaosElement":
        """``r`` copies of ``alpha`` and ``r`` copies of ``-beta``."""
        return cls(np.concatenate([np.full(c.r, c.alpha), np.full(c.r, -c.beta)]))

    @classmethod
    def from_vg(cls, p: VgParams) -> "SecondChaosElement":
        """Spectrum whose law is the centered ``VG_c(r, theta, sigma)``; needs integer ``r``."""
        if int(p.r) != p.r:
            raise ValueError("a finite second-chaos representation needs integer r")
        s = sqrt(p.theta**2 + p.sigma**2)
        return cls.from_chaos_params(ChaosVgParams(0.5 * (s + p.theta), 0.5 * (s - p.theta), int(p.r)))

    def to_chaos_params(self) -> ChaosVgParams:
        """Inverse of :meth:`from_chaos_params`, for spectra of that shape."""
        c = self.eigenvalues
        pos, neg = c[c > 0], c[c < 0]
        if pos.size != neg.size or np.ptp(pos) != 0 or np.ptp(neg) != 0:
            raise ValueError("spectrum is not of the form r x {alpha, -beta}")
        return ChaosVgParams(float(pos[0]), float(-neg[0]), int(pos.size))

    def power_sum(self, p: int) -> float:
        return fsum(self.eigenvalues**p)

    @property
    def kappa2(self) -> float:
        return 2.0 * self.power_sum(2)

    def rescaled(self, kappa2: float) -> "SecondChaosElement":
        """Copy scaled so that ``kappa_2`` equals ``kappa2``."""
        return SecondChaosElement(self.eigenvalues * sqrt(kappa2 / self.kappa2))

    def to_json(self) -> str:
        return json.dumps([float(v) for v in self.eigenvalues])

    @classmethod
    def from_json(cls, text: str) -> "SecondChaosElement":
        data = json.loads(text)
        if not isinstance(data, list):
            raise ValueError("spectrum JSON must be an array of reals")
        return cls(np.asarray(data, dtype=float))


def _kappa(c: np.ndarray, p: int) -> float:
    if p < 2:
        raise ValueError("cumulant order must be >= 2 (kappa_1 = 0 by centering)")
    if p > MAX_ORDER:
        raise ValueError(f"cumulant order must be <= {MAX_ORDER}")
    return float(2.0 ** (p - 1) * factorial(p - 1) * fsum(c**p))


def cumulant(F: SecondChaosElement, p: int) -> float:
    """``kappa_p(F) = 2^(p-1) (p-1)! sum c_i^p`` for ``2 <= p <= 12``."""
    return _kappa(F.eigenvalues, p)


def cumulants(F: SecondChaosElement, orders=range(2, 7)) -> np.ndarray:
    return np.array([_kappa(F.eigenvalues, p) for p in orders])


def _chaos_from_normals_np(z, c, out):
    out[:] = (z * z - 1.0) @ c


@jit(fallback=_chaos_from_normals_np)
def _chaos_from_normals(z, c, out):
    n, m = z.shape
    for i in range(n):
        acc = 0.0
        for j in range(m):
            acc += c[j] * (z[i, j] * z[i, j] - 1.0)
        out[i] = acc


def sample(F: SecondChaosElement, n: int, seed: int, workers: int = 1) -> np.ndarray:
    """``n`` i.i.d. draws of ``sum c_i (N_i^2 - 1)``, deterministic in ``seed``."""
    c = np.ascontiguousarray(F.eigenvalues)

    def draw(gen, size):
        z = gen.standard_normal((size, c.size))
        out = np.empty(size)
        _chaos_from_normals(z, c, out)
        return out

    return _mc.chunked_draw(seed, n, draw, workers=workers)


def sample_coupled(spectra, n: int, seed: int, workers: int = 1):
    """Draw several second-chaos variables from one set of normals.

    Spectrum ``k`` uses the first ``len(spectra[k])`` normal columns, so the
    outputs are coupled (common random numbers).  Returns a list of arrays.
    """
    cs = [np.ascontiguousarray(F.eigenvalues) for F in spectra]
    m = max(c.size for c in cs)
    outs = [np.empty(n) for _ in cs]
    jobs = _mc.chunk_generators(seed, n)

    def run(job):
        start, stop, gen = job
        z = gen.standard_normal((stop - start, m))
        for c, o in zip(cs, outs):
            buf = np.empty(stop - start)
            _chaos_from_normals(np.ascontiguousarray(z[:, : c.size]), c, buf)
            o[start:stop] = buf

    if workers <= 1:
        for job in jobs:
            run(job)
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, jobs))
    return outs


def _k_over_fact(c, p):
    # kappa_p / (p-1)!, with kappa_1 := 0
    if p < 2:
        return 0.0
    return float(2.0 ** (p - 1) * fsum(c**p))


def gamma_mixed_mean(F: SecondChaosElement, ell: int, theta: float, sigma: float) -> float:
    """``E[Gamma_{l+2} - 2 theta Gamma_{l+1} - sigma^2 Gamma_l]``.

    Equals ``kappa_{l+3}/(l+2)! - 2 theta kappa_{l+2}/(l+1)! - sigma^2 kappa_{l+1}/l!``
    with ``kappa_1 = 0``.
    """
    if ell < 0:
        raise ValueError("ell must be >= 0")
    c = F.eigenvalues
    return (_k_over_fact(c, ell + 3) - 2.0 * theta * _k_over_fact(c, ell + 2)
            - sigma**2 * _k_over_fact(c, ell + 1))


def _lin_variance_terms(c, ell, theta, sigma):
    s2 = sigma * sigma
    return np.array([
        _kappa(c, 2 * ell + 4) / factorial(2 * ell + 3),
        -4.0 * theta * _kappa(c, 2 * ell + 3) / factorial(2 * ell + 2),
        (4.0 * theta**2 - 2.0 * s2) * _kappa(c, 2 * ell + 2) / factorial(2 * ell + 1),
        4.0 * theta * s2 * _kappa(c, 2 * ell + 1) / factorial(2 * ell),
        s2 * s2 * _kappa(c, 2 * ell) / factorial(2 * ell - 1),
    ])


def gamma_lin_variance(F: SecondChaosElement, ell: int, theta: float, sigma: float) -> float:
    """``Var(Gamma_{l+1} - 2 theta Gamma_l - sigma^2 Gamma_{l-1})`` from cumulants.

    Five-term cumulant combination; small negative round-off is clipped to
    zero, while a value below ``-1e-12`` times the term scale raises
    :class:`ConsistencyError`.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    terms = _lin_variance_terms(F.eigenvalues, ell, theta, sigma)
    v = fsum(terms)
    if v < 0:
        if v < -1e-12 * float(np.abs(terms).sum()):
            raise ConsistencyError(f"negative variance {v!r} at ell={ell}")
        v = 0.0
    return v


def gamma_lin_coefficients(F: SecondChaosElement, ell: int, theta: float, sigma: float) -> np.ndarray:
    """Per-eigenvalue coefficients ``d_i`` of the centered combination.

    ``Gamma_{l+1} - 2 theta Gamma_l - sigma^2 Gamma_{l-1}`` minus its mean is
    ``sum_i d_i (N_i^2 - 1)`` with
    ``d_i = 2^(l+1) c^(l+2) - 2^(l+1) theta c^(l+1) - 2^(l-1) sigma^2 c^l``.
    """
    c = F.eigenvalues
    return (2.0 ** (ell + 1) * c ** (ell + 2) - 2.0 ** (ell + 1) * theta * c ** (ell + 1)
            - 2.0 ** (ell - 1) * sigma**2 * c**ell)


def gamma_lin_variance_spectral(F: SecondChaosElement, ell: int, theta: float, sigma: float) -> float:
    """Same variance as :func:`gamma_lin_variance`, computed as ``2 sum d_i^2``."""
    d = gamma_lin_coefficients(F, ell, theta, sigma)
    return 2.0 * fsum(d * d)


def variance_chain_constant(p: VgParams) -> float:
    """``C = 2 r (sigma^2 + 2 theta^2)``, twice the target variance.

    For ``kappa_2(F) = kappa_2(Y)`` each step of
    ``gamma_lin_variance(F, l + 1) <= C * gamma_lin_variance(F, l)`` holds
    because the coefficients gain a factor ``2 c_i`` and ``4 max c_i^2 <= 2 kappa_2``.
    """
    return 2.0 * p.variance


def _split_terms(c, ell, theta, sigma):
    # 8 sum_i d_i^4 with d_i = 2^(l-1) c^l q(c), q = 4c^2 - 4 theta c - sigma^2,
    # expanded as a combination of power sums S_k = kappa_k / (2^(k-1) (k-1)!)
    q4 = np.polynomial.polynomial.polypow([-sigma * sigma, -4.0 * theta, 4.0], 4)
    scale = 8.0 * 2.0 ** (4 * ell - 4)
    return np.array([scale * a * fsum(c ** (4 * ell + k)) for k, a in enumerate(q4)])


def gamma_split_variance(F: SecondChaosElement, ell: int, theta: float, sigma: float) -> float:
    """Variance of the nested combination ``L_{2l+2} - 2 theta L_{2l+1} - sigma^2 L_{2l}``.

    Here ``L_j = Gamma_{j+1} - 2 theta Gamma_j - sigma^2 Gamma_{j-1}``.  Its
    centered coefficients are ``2 d_i^2`` with ``d_i`` from
    :func:`gamma_lin_coefficients`, so the variance is ``8 sum d_i^4``,
    evaluated here as a power-sum (cumulant) combination of orders
    ``4l .. 4l + 8`` and bounded by ``2 gamma_lin_variance(F, l)^2``.
    Round-off handling matches :func:`gamma_lin_variance`.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    terms = _split_terms(F.eigenvalues, ell, theta, sigma)
    v = fsum(terms)
    if v < 0:
        if v < -1e-12 * float(np.abs(terms).sum()):
            raise ConsistencyError(f"negative variance {v!r} at ell={ell}")
        v = 0.0
    return v


def gamma_split_variance_spectral(F: SecondChaosElement, ell: int, theta: float, sigma: float) -> float:
    """Same quantity as :func:`gamma_split_variance`, as ``8 sum d_i^4``."""
    d = gamma_lin_coefficients(F, ell, theta, sigma)
    return 8.0 * fsum(d**4)


def m_statistic_detail(F: SecondChaosElement, Y: VgParams):
    """Cumulant differences and the M / M' statistics with their argmax order.

    Returns
    -------
    dict
        ``diffs`` (kappa_l(F) - kappa_l(Y), l = 2..6), ``M``, ``M_prime``,
        ``argmax`` and ``argmax_prime`` (smallest order attaining the max
        within 1e-12 relative).
    """
    kf = cumulants(F)
    ky = cumulants_2_to_6(Y)
    diffs = kf - ky
    a = np.abs(diffs)
    orders = np.arange(2, 7)

    def pick(mask):
        vals = a[mask]
        m = float(vals.max())
        hit = orders[mask][vals >= m * (1 - 1e-12)]
        return m, int(hit[0])

    M, arg = pick(np.ones(5, bool))
    Mp, argp = pick(orders != 5)
    return {"diffs": diffs, "kappa_F": kf, "kappa_Y": ky, "M": M, "M_prime": Mp,
            "argmax": arg, "argmax_prime": argp}


def m_statistic(F: SecondChaosElement, Y: VgParams):
    """``(M, M')``: max over orders 2..6 of ``|kappa_l(F) - kappa_l(Y)|``; ``M'`` skips order 5."""
    d = m_statistic_detail(F, Y)
    return d["M"], d["M_prime"]
