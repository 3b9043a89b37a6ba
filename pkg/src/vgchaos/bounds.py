"""Distance bounds between a second-chaos element and its VG target.

Collects the explicit six-moment upper bound, empirical Wasserstein-1
estimates, and a lower estimate of the smooth Wasserstein distance obtained
from a finite dictionary of test functions with ``|h'| <= 1`` and
``|h''| <= 1``.
"""
from dataclasses import dataclass, field
from math import sqrt
import hashlib
import json

import numpy as np

from . import chaos, vg
from ._mc import batch_se
from .chaos import SecondChaosElement, m_statistic_detail
from .stein import MsConstants, ms_constants
from .vg import VgParams

__all__ = [
    "DictFunction",
    "default_dictionary",
    "six_moment_bound",
    "six_moment_bound_from_diffs",
    "clean_constant",
    "clean_bound",
    "empirical_w1",
    "empirical_w1_se",
    "dh2_dictionary_lower",
    "rate_fit",
    "BoundReport",
    "build_bound_report",
    "interpolating_family",
    "family_rate_experiment",
]

KAPPA2_RTOL = 1e-9


class KappaMismatchError(ValueError):
    """Second cumulants of F and Y differ; the bound assumes they agree."""


@dataclass(frozen=True)
class DictFunction:
    """Test function with certified sup-norm bounds on its first two derivatives."""

    name: str
    fn: object
    d1_bound: float
    d2_bound: float

    def __call__(self, x):
        return self.fn(x)


def _sin(a):
    k = min(1.0, 1.0 / a)
    # |h'| = k |cos| <= k, |h''| = k a |sin| <= min(a, 1)
    return DictFunction(f"sin(a={a:g})", lambda x: np.sin(a * x) * (k / a), k, k * a)


def _cos(a):
    k = min(1.0, 1.0 / a)
    return DictFunction(f"cos(a={a:g})", lambda x: np.cos(a * x) * (k / a), k, k * a)


_TANH_D2 = 4.0 / (3.0 * sqrt(3.0))  # max |d^2/dx^2 tanh| = 4/(3 sqrt 3)


def _tanh(a):
    k = min(1.0, 1.0 / (a * _TANH_D2))
    return DictFunction(f"tanh(a={a:g})", lambda x: np.tanh(a * x) * (k / a), k, k * a * _TANH_D2)


def _bump(m, w):
    k = min(1.0, w)
    # h = k w exp(-(x-m)^2 / 2w^2): |h'| <= k e^{-1/2}, |h''| <= k / w
    return DictFunction(f"bump(m={m:g},w={w:g})",
                        lambda x: k * w * np.exp(-0.5 * ((x - m) / w) ** 2), k * np.exp(-0.5), k / w)


def default_dictionary():
    """The built-in test-function set (all certified ``|h'|, |h''| <= 1``)."""
    out = []
    for a in (0.25, 0.5, 1.0, 2.0):
        out.append(_sin(a))
        out.append(_cos(a))
    for a in (0.5, 1.0, 2.0):
        out.append(_tanh(a))
    for m in (-1.0, 0.0, 1.0):
        for w in (0.5, 1.0, 2.0):
            out.append(_bump(m, w))
    return out


def _check_kappa2(F: SecondChaosElement, p: VgParams):
    k2f = F.kappa2
    k2y = p.variance
    if abs(k2f - k2y) > KAPPA2_RTOL * abs(k2y):
        raise KappaMismatchError(
            f"kappa_2(F) = {k2f!r} but kappa_2(Y) = {k2y!r}; rescale the spectrum "
            "(SecondChaosElement.rescaled) or use a bound with an explicit kappa_2 term")


def six_moment_bound_from_diffs(diffs, p: VgParams, constants: MsConstants | None = None) -> float:
    """Six-moment bound given cumulant differences ``kappa_l(F) - kappa_l(Y)``, ``l = 3..6``.

    Lets callers feed cumulants from a source other than a finite spectrum
    (for instance extrapolated values).
    """
    c1 = (constants or ms_constants(p)).C1
    d3, d4, d5, d6 = (abs(float(v)) for v in diffs)
    th, s = p.theta, p.sigma
    inner = (sqrt(d6 / 120.0)
             + 2.0 * sqrt(abs(th) / 24.0) * sqrt(d5)
             + sqrt(abs(4.0 * th * th - 2.0 * s * s) / 6.0) * sqrt(d4)
             + s * sqrt(2.0 * abs(th)) * sqrt(d3))
    return c1 * inner + 0.5 * c1 * d3


def six_moment_bound(F: SecondChaosElement, p: VgParams, constants: MsConstants | None = None) -> float:
    """Upper bound on ``d_H1(F, Y)`` from cumulant differences of orders 3..6."""
    _check_kappa2(F, p)
    d = m_statistic_detail(F, p)["diffs"]  # orders 2..6
    return six_moment_bound_from_diffs(d[1:], p, constants)


def clean_constant(p: VgParams, constants: MsConstants | None = None) -> float:
    """Constant ``C`` with ``six_moment_bound <= C * max(sqrt(M), M)``.

    ``C = 5 C1 max{1/2, 1/sqrt(120), 2 sqrt(|theta|/24), sqrt(|4 theta^2 - 2 sigma^2|/6),
    sigma sqrt(2|theta|)}``: each of the four square-root terms is at most
    ``C/5 * sqrt(M)`` and the linear third-cumulant term at most ``C/5 * M``.
    """
    c1 = (constants or ms_constants(p)).C1
    th, s = p.theta, p.sigma
    m = max(0.5, 1.0 / sqrt(120.0), 2.0 * sqrt(abs(th) / 24.0),
            sqrt(abs(4.0 * th * th - 2.0 * s * s) / 6.0), s * sqrt(2.0 * abs(th)))
    return 5.0 * c1 * m


def clean_bound(F: SecondChaosElement, p: VgParams, constants: MsConstants | None = None) -> float:
    _check_kappa2(F, p)
    M = m_statistic_detail(F, p)["M"]
    return clean_constant(p, constants) * max(sqrt(M), M)


def empirical_w1(xs, ys) -> float:
    """Wasserstein-1 distance between the empirical laws of two equal-size samples."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("empirical_w1 needs two 1-d samples of equal length")
    if xs.size < 2:
        raise ValueError("need at least 2 points")
    return float(np.mean(np.abs(np.sort(xs) - np.sort(ys))))


def empirical_w1_se(xs, ys, n_batches: int = 20):
    """``(w1, se)``: full-sample estimate plus batch-spread standard error.

    Batch estimates use ``n / n_batches`` points each, so their mean is
    biased upward relative to the full-sample value; the SE reflects
    sampling noise only.
    """
    w = empirical_w1(xs, ys)
    bx = np.array_split(np.asarray(xs, dtype=float), n_batches)
    by = np.array_split(np.asarray(ys, dtype=float), n_batches)
    per = np.array([empirical_w1(a, b) for a, b in zip(bx, by)])
    return w, float(batch_se(per))


def _expectations(p: VgParams, dictionary):
    return np.array([vg.expectation(p, d) for d in dictionary])


def dh2_dictionary_lower(xs, p: VgParams, dictionary=None, control=None, n_batches: int = 20,
                         return_detail: bool = False):
    """Lower estimate of ``d_H2(law(xs), Y)``: ``max_h |mean h(xs) - E h(Y)|``.

    Parameters
    ----------
    xs : ndarray
        Sample of ``F``.
    p : VgParams
        Target law; ``E h(Y)`` is computed by quadrature.
    dictionary : list of DictFunction, optional
        Defaults to :func:`default_dictionary`.
    control : ndarray, optional
        Sample of ``Y`` coupled to ``xs`` (same underlying randomness).  When
        given, ``E h(F) - E h(Y)`` is estimated by ``mean(h(xs) - h(control))``,
        which is unbiased and has far smaller variance when the laws are close.
    return_detail : bool
        Also return per-function differences and standard errors.
    """
    dictionary = default_dictionary() if dictionary is None else list(dictionary)
    xs = np.asarray(xs, dtype=float)
    if control is None:
        eh = _expectations(p, dictionary)
        vals = np.array([h(xs) for h in dictionary]) - eh[:, None]
    else:
        control = np.asarray(control, dtype=float)
        if control.shape != xs.shape:
            raise ValueError("control sample must match xs in shape")
        vals = np.array([h(xs) - h(control) for h in dictionary])
    diff = vals.mean(axis=1)
    per = np.array([b.mean(axis=1) for b in np.array_split(vals, n_batches, axis=1)])
    se = batch_se(per)
    value = float(np.max(np.abs(diff)))
    if return_detail:
        return value, {"names": [d.name for d in dictionary], "diff": diff, "se": se,
                       "max_se": float(se.max())}
    return value


def rate_fit(points):
    """Least-squares line through ``(log x, log y)``.

    Returns
    -------
    (slope, intercept, r2)
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
        raise ValueError("rate_fit needs at least 4 (x, y) points")
    if np.any(pts <= 0):
        raise ValueError("rate_fit needs strictly positive coordinates")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    fit = A @ np.array([slope, icpt])
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icpt), r2


def interpolating_family(c_target, c_pert, t, kappa2):
    """Spectrum ``(1 - t) c_target + t c_pert`` rescaled to the given ``kappa_2``."""
    c = (1.0 - t) * np.asarray(c_target, dtype=float) + t * np.asarray(c_pert, dtype=float)
    return SecondChaosElement(c).rescaled(kappa2)


FAMILY_COLUMNS = ("t", "M", "w1_hat", "w1_se", "dict_lower", "dict_se", "six_moment_bound")


def family_rate_experiment(spectra, p: VgParams, n_mc: int, seed: int, labels=None, workers: int = 1):
    """Distances and bounds along a family of spectra approaching ``Y``.

    Parameters
    ----------
    spectra : sequence of SecondChaosElement
        Family members, each with ``kappa_2`` equal to that of ``p``.
    p : VgParams
        Target with integer ``r``.  Its two-eigenvalue representation is
        sampled from the first ``2r`` normal columns shared with every ``F``,
        which makes the dictionary differences low-variance.
    labels : sequence of float, optional
        Family parameter per member (the ``t`` column); defaults to the index.

    Returns
    -------
    dict
        ``rows`` keyed by :data:`FAMILY_COLUMNS` and ``slopes`` of
        ``dict_lower``, ``w1_hat`` and ``six_moment_bound`` against ``M``.
    """
    Yc = SecondChaosElement.from_vg(p)
    labels = list(range(len(spectra))) if labels is None else list(labels)
    seeds = np.random.SeedSequence(seed).generate_state(len(spectra))
    consts = ms_constants(p)
    rows = []
    for F, t, sd in zip(spectra, labels, seeds):
        _check_kappa2(F, p)
        if len(F) < len(Yc):
            raise ValueError("family members need at least as many eigenvalues as the target")
        xs, ys = chaos.sample_coupled([F, Yc], n_mc, int(sd), workers=workers)
        w1, w1se = empirical_w1_se(xs, ys)
        lo, det = dh2_dictionary_lower(xs, p, control=ys, return_detail=True)
        rows.append({"t": float(t), "M": m_statistic_detail(F, p)["M"], "w1_hat": w1, "w1_se": w1se,
                     "dict_lower": lo, "dict_se": det["max_se"],
                     "six_moment_bound": six_moment_bound(F, p, consts)})
    M = np.array([r["M"] for r in rows])
    slopes = {}
    for key in ("dict_lower", "w1_hat", "six_moment_bound"):
        y = np.array([r[key] for r in rows])
        ok = (M > 0) & (y > 0)
        slopes[key] = rate_fit(np.column_stack([M[ok], y[ok]]))[0] if ok.sum() >= 4 else float("nan")
    return {"rows": rows, "slopes": slopes}


@dataclass
class BoundReport:
    """All bound quantities for a pair ``(F, Y)``."""

    M: float
    M_prime: float
    six_moment_bound: float
    clean_bound: float
    w1_hat: float
    w1_se: float
    dH2_dictionary_lower: float
    dH2_se: float
    constants: MsConstants
    cumulant_table: np.ndarray  # rows l = 2..6, columns (F, Y)
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "M": self.M,
            "M_prime": self.M_prime,
            "six_moment_bound": self.six_moment_bound,
            "clean_bound": self.clean_bound,
            "w1_hat": self.w1_hat,
            "w1_se": self.w1_se,
            "dH2_dictionary_lower": self.dH2_dictionary_lower,
            "dH2_se": self.dH2_se,
            "constants": self.constants.to_dict(),
            "cumulant_table": [{"order": l, "F": float(f), "Y": float(y)}
                               for l, (f, y) in zip(range(2, 7), self.cumulant_table)],
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def build_bound_report(F: SecondChaosElement, p: VgParams, n_mc: int, seed: int,
                       rescale: bool = False, workers: int = 1, dictionary=None) -> BoundReport:
    """Assemble a :class:`BoundReport` with Monte Carlo distance estimates.

    ``F`` and ``Y`` are sampled from independent child seeds for ``w1_hat``.
    When ``Y`` has an integer ``r`` and ``F`` has exactly ``2r`` eigenvalues,
    the dictionary lower bound uses a copy of ``Y`` built from the same
    normals as ``F`` as a control sample.
    """
    if rescale:
        F = F.rescaled(p.variance)
    _check_kappa2(F, p)
    consts = ms_constants(p)
    det = m_statistic_detail(F, p)
    smb = six_moment_bound(F, p, consts)
    cb = clean_bound(F, p, consts)
    ss = np.random.SeedSequence(seed)
    seed_f, seed_y = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    xs = chaos.sample(F, n_mc, seed_f, workers=workers)
    ys = vg.sample(p, n_mc, seed_y, workers=workers)
    w1, w1_se = empirical_w1_se(xs, ys)
    control = None
    coupled = False
    if float(p.r).is_integer() and len(F) == 2 * int(p.r):
        Yc = SecondChaosElement.from_vg(p)
        control = chaos.sample(Yc, n_mc, seed_f, workers=workers)
        coupled = True
    lo, info = dh2_dictionary_lower(xs, p, dictionary, control=control, return_detail=True)
    table = np.column_stack([det["kappa_F"], det["kappa_Y"]])
    cfg = {"spectrum": [float(c) for c in F.eigenvalues], "target": p.to_dict(),
           "n_mc": int(n_mc), "seed": int(seed)}
    meta = {"argmax_order": det["argmax"], "coupled_control": coupled,
            "config_sha256": hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()}
    return BoundReport(M=det["M"], M_prime=det["M_prime"], six_moment_bound=smb, clean_bound=cb,
                       w1_hat=w1, w1_se=w1_se, dH2_dictionary_lower=lo, dH2_se=info["max_se"],
                       constants=consts, cumulant_table=table, meta=meta)
