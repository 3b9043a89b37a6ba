"""Numerical solution of the centered Variance-Gamma Stein equation.

For ``Y ~ VG_c(r, theta, sigma)`` and a test function ``h`` the equation is

    sigma^2 (x + r theta) f''(x) + (sigma^2 r + 2 theta (x + r theta)) f'(x) - x f(x)
        = h(x) - E h(Y).

With ``u = x + r theta`` this becomes the equation of the uncentered law
(location 0), whose bounded solution has a closed integral form.  On
``u > 0``, with ``nu = (r-1)/2``, ``a = sqrt(theta^2 + sigma^2)/sigma^2`` and
``b = theta/sigma^2``,

    f(u) = -(e^{-b u} / (sigma^2 u^nu)) [ K_nu(a u) int_0^u e^{b y} y^nu I_nu(a y) g(y) dy
                                         + I_nu(a u) int_u^inf e^{b y} y^nu K_nu(a y) g(y) dy ]

where ``g = h - E h(Y)`` in the ``u`` variable; the ``u < 0`` branch follows
from the reflection ``u -> -u``, ``theta -> -theta``, ``g -> -g(-.)``.  Both
integrals are accumulated node to node with exponentially scaled Bessel
functions, so every recurrence factor is at most one.
"""
from dataclasses import dataclass, field
from math import gamma as _gamma, log, pi, sqrt
import io

import numpy as np

from ._accel import jit
from .special import bessel_i_scaled, bessel_k_scaled
from .vg import VgParams

__all__ = [
    "SteinGrid",
    "SteinSolution",
    "MsConstants",
    "solve",
    "residual",
    "ms_constants",
    "stein_operator",
    "expectation_mixture",
]

_GL_ORDER = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


class QuadratureError(ArithmeticError):
    """Quadrature failed to produce a finite value at some node."""


@dataclass(frozen=True)
class SteinGrid:
    """Node layout on ``[x_min, x_max]``.

    ``spacing="uniform"`` gives equispaced nodes; ``spacing="tanh"`` clusters
    nodes towards both window ends through a tanh map of strength ``kappa``.
    """

    x_min: float
    x_max: float
    n_points: int
    spacing: str = "uniform"
    kappa: float = 1.5

    def __post_init__(self):
        if not (self.x_min < 0 < self.x_max):
            raise ValueError("grid must satisfy x_min < 0 < x_max")
        if self.n_points < 64:
            raise ValueError("n_points must be >= 64")
        if self.spacing not in ("uniform", "tanh"):
            raise ValueError("spacing must be 'uniform' or 'tanh'")

    def nodes(self) -> np.ndarray:
        s = np.linspace(0.0, 1.0, self.n_points)
        if self.spacing == "tanh":
            s = 0.5 * (1.0 + np.tanh(self.kappa * (2.0 * s - 1.0)) / np.tanh(self.kappa))
        x = self.x_min + (self.x_max - self.x_min) * s
        x[0], x[-1] = self.x_min, self.x_max
        return x

    def refined(self) -> "SteinGrid":
        """Grid with the spacing halved (``2n - 1`` nodes, old nodes kept)."""
        return SteinGrid(self.x_min, self.x_max, 2 * self.n_points - 1, self.spacing, self.kappa)

    def widened(self, factor: float = 2.0) -> "SteinGrid":
        """Window scaled by ``factor`` at the same spacing."""
        n = int(round((self.n_points - 1) * factor)) + 1
        return SteinGrid(self.x_min * factor, self.x_max * factor, n, self.spacing, self.kappa)


@dataclass
class SteinSolution:
    """Grid samples of the Stein solution and its finite-difference derivatives."""

    grid: SteinGrid
    x: np.ndarray
    f: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    residual_max: float
    pointwise_residual: np.ndarray
    expectation: float
    branch_gap: float
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,f,f1,f2,residual\n")
        for row in zip(self.x, self.f, self.f1, self.f2, self.pointwise_residual):
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()


@dataclass(frozen=True)
class MsConstants:
    """Explicit constants ``C1``, ``C2 = C1 / 2`` and the auxiliaries ``A_{r+1}``, ``B_r``."""

    C1: float
    C2: float
    A_r: float
    B_r: float
    A_r1: float

    def to_dict(self):
        return {"C1": self.C1, "C2": self.C2, "A_r": self.A_r, "B_r": self.B_r, "A_r_plus_1": self.A_r1}


def _a_const(r, t2s2):
    if r >= 2:
        return 2.0 * sqrt(pi) / sqrt(2.0 * r - 1.0) * (1.0 + t2s2) ** (r / 2.0)
    return 12.0 * _gamma(r / 2.0) * (1.0 + t2s2)


def ms_constants(p: VgParams) -> MsConstants:
    """Closed-form constants of the Malliavin-Stein bound for ``VG_c(r, theta, sigma)``."""
    if not p.centered:
        raise ValueError("ms_constants expects a centered VgParams")
    r, th, s = p.r, p.theta, p.sigma
    t2s2 = th * th / (s * s)
    a_r = _a_const(r, t2s2)
    a_r1 = _a_const(r + 1.0, t2s2)
    b_r = (6.0 + 2.0 * sqrt(2.0) / sqrt(r)
           + 2.0 * sqrt(2.0 * pi * (r + 1.0)) * abs(th) / s * (1.0 + t2s2) ** ((r - 1.0) / 2.0)
           + 2.0 * (sqrt(2.0 * r) + r) * a_r)
    c1 = (1.0 / (s * s)) * (2.0 / (r + 2.0) * a_r1) * (1.0 + (2.0 + t2s2 * b_r))
    return MsConstants(C1=c1, C2=0.5 * c1, A_r=a_r, B_r=b_r, A_r1=a_r1)


# ---------------------------------------------------------------------------
# integral representation


def _accumulate_np(p_start, p_stop, ab_plus, ab_minus, a_panel, b_panel, j1, j2):
    # sequential in the panel index; vectorized over right-hand sides
    n_pan = p_start.shape[0]
    width = p_stop - p_start
    dec_p = np.exp(-ab_plus * width)
    dec_m = np.exp(-ab_minus * width)
    j1[0] = 0.0
    for k in range(n_pan):
        j1[k + 1] = j1[k] * dec_p[k] + a_panel[k]
    j2[n_pan] = 0.0
    for k in range(n_pan - 1, -1, -1):
        j2[k] = j2[k + 1] * dec_m[k] + b_panel[k]


@jit(fallback=_accumulate_np)
def _accumulate(p_start, p_stop, ab_plus, ab_minus, a_panel, b_panel, j1, j2):
    """Node-to-node recurrences for the two integrals on one half-line.

    ``j1[k]`` is the scaled left integral at breakpoint ``k`` and ``j2[k]``
    the scaled right integral; ``a_panel``/``b_panel`` hold per-panel
    contributions (columns are independent right-hand sides).
    """
    n_pan = p_start.shape[0]
    ncol = a_panel.shape[1]
    for c in range(ncol):
        j1[0, c] = 0.0
    for k in range(n_pan):
        decay = np.exp(-ab_plus * (p_stop[k] - p_start[k]))
        for c in range(ncol):
            j1[k + 1, c] = j1[k, c] * decay + a_panel[k, c]
    for c in range(ncol):
        j2[n_pan, c] = 0.0
    for k in range(n_pan - 1, -1, -1):
        decay = np.exp(-ab_minus * (p_stop[k] - p_start[k]))
        for c in range(ncol):
            j2[k, c] = j2[k + 1, c] * decay + b_panel[k, c]


def _breakpoints(v_nodes, tail_rate, grade_ratio=0.2, grade_levels=40, tail_width=None):
    """Sorted panel breakpoints on ``[0, inf)`` (truncated) containing every node.

    The panel next to zero is split geometrically to resolve the algebraic
    and logarithmic endpoint behaviour of the Bessel weights.
    """
    v_nodes = np.asarray(v_nodes, dtype=float)
    first = v_nodes[0] if v_nodes.size else 1.0 / tail_rate
    graded = first * grade_ratio ** np.arange(grade_levels, 0, -1)
    last = v_nodes[-1] if v_nodes.size else first
    width = tail_width if tail_width is not None else 45.0 / tail_rate + 10.0 * sqrt(max(last, 1.0)) / tail_rate
    step = min(0.5 / tail_rate, max(width / 400.0, 1e-3))
    n_tail = int(np.ceil(width / step))
    tail = last + step * np.arange(1, n_tail + 1)
    if not v_nodes.size:
        tail = np.concatenate([[first], tail])
    pts = np.concatenate([[0.0], graded, v_nodes, tail])
    return pts


def _ie(nu, z):
    """``e^{-z} I_nu(z)`` for real ``nu > -1`` (negative orders by reflection)."""
    if nu >= 0:
        return np.asarray(bessel_i_scaled(nu, z))
    mu = -nu
    z = np.asarray(z, dtype=float)
    return (np.asarray(bessel_i_scaled(mu, z))
            + (2.0 / pi) * np.sin(mu * pi) * np.asarray(bessel_k_scaled(mu, z)) * np.exp(-2.0 * z))


def _half_line(v_nodes, g_funcs, nu, a, b, sigma2):
    """Solve on ``u = s v`` for ``v >= 0`` with ``b`` already sign-adjusted.

    Parameters
    ----------
    v_nodes : ndarray
        Strictly positive, increasing nodes (may be empty).
    g_funcs : callable
        ``g_funcs(v) -> (len(v), ncol)`` right-hand sides in the ``v`` variable.

    Returns
    -------
    f_cols : ndarray, shape (len(v_nodes), ncol)
        ``f`` values for each right-hand side before centering.
    w_cols : ndarray, shape (ncol,)
        ``int_0^inf e^{b v} v^nu K_nu(a v) g(v) dv`` for each column.
    """
    pts = _breakpoints(v_nodes, a - b)
    lo, hi = pts[:-1], pts[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    w = mid[:, None] + half[:, None] * _GL_X[None, :]
    wt = half[:, None] * _GL_W[None, :]
    wf = w.ravel()
    ie = _ie(nu, a * wf).reshape(w.shape)
    ke = np.asarray(bessel_k_scaled(abs(nu), a * wf)).reshape(w.shape)
    pw = np.exp(nu * np.log(w))
    g = np.asarray(g_funcs(wf)).reshape(w.shape + (-1,))
    k1 = (wt * pw * ie * np.exp((a + b) * (w - hi[:, None])))[:, :, None]
    k2 = (wt * pw * ke * np.exp((b - a) * (w - lo[:, None])))[:, :, None]
    a_panel = np.ascontiguousarray((k1 * g).sum(axis=1))
    b_panel = np.ascontiguousarray((k2 * g).sum(axis=1))
    ncol = g.shape[2]
    j1 = np.empty((pts.size, ncol))
    j2 = np.empty((pts.size, ncol))
    _accumulate(lo, hi, a + b, a - b, a_panel, b_panel, j1, j2)
    if not np.all(np.isfinite(j1)) or not np.all(np.isfinite(j2)):
        bad = pts[np.argmax(~np.isfinite(j1).all(axis=1) | ~np.isfinite(j2).all(axis=1))]
        raise QuadratureError(f"non-finite Stein integral near |u| = {bad:.6g}")
    idx = np.searchsorted(pts, v_nodes)
    if v_nodes.size:
        vn = v_nodes
        iev = _ie(nu, a * vn)
        kev = np.asarray(bessel_k_scaled(abs(nu), a * vn))
        scale = np.exp(-nu * np.log(vn))
        f_cols = -(kev[:, None] * scale[:, None] * j1[idx] + iev[:, None] * scale[:, None] * j2[idx]) / sigma2
    else:
        f_cols = np.empty((0, ncol))
    return f_cols, j2[0]


def _eval_h(h, x):
    x = np.asarray(x, dtype=float)
    try:
        y = np.asarray(h(x), dtype=float)
        if y.shape != x.shape:
            y = np.broadcast_to(y, x.shape).astype(float)
    except (TypeError, ValueError):
        y = np.array([float(h(t)) for t in x.ravel()]).reshape(x.shape)
    return y


def _fd_derivatives(x, f):
    """Second-order finite differences on a (possibly nonuniform) grid."""
    n = x.size
    f1 = np.empty(n)
    f2 = np.empty(n)
    hl = x[1:-1] - x[:-2]
    hr = x[2:] - x[1:-1]
    fl, fc, fr = f[:-2], f[1:-1], f[2:]
    f1[1:-1] = (-hr / (hl * (hl + hr))) * fl + ((hr - hl) / (hl * hr)) * fc + (hl / (hr * (hl + hr))) * fr
    f2[1:-1] = 2.0 * (fl / (hl * (hl + hr)) - fc / (hl * hr) + fr / (hr * (hl + hr)))
    # one-sided second-order stencils at the ends
    for i, sgn in ((0, 1), (n - 1, -1)):
        j, k = i + sgn, i + 2 * sgn
        d1, d2 = x[j] - x[i], x[k] - x[i]
        f1[i] = (-(d1 + d2) / (d1 * d2)) * f[i] + (d2 / (d1 * (d2 - d1))) * f[j] - (d1 / (d2 * (d2 - d1))) * f[k]
        f2[i] = 2.0 * (f[i] / (d1 * d2) - f[j] / (d1 * (d2 - d1)) + f[k] / (d2 * (d2 - d1)))
    return f1, f2


def stein_operator(p: VgParams, x, f, f1, f2):
    """Left-hand side of the centered Stein equation evaluated pointwise."""
    u = np.asarray(x) + p.r * p.theta
    s2 = p.sigma**2
    return s2 * u * f2 + (s2 * p.r + 2.0 * p.theta * u) * f1 - np.asarray(x) * f


def solve(p: VgParams, h, grid: SteinGrid, expectation: float | None = None) -> SteinSolution:
    """Solve the centered VG Stein equation for ``h`` on ``grid``.

    Parameters
    ----------
    p : VgParams
        Centered target law.
    h : callable
        Vectorized test function of ``x``.
    grid : SteinGrid
        Output nodes.
    expectation : float, optional
        Override for ``E h(Y)``.  By default it is computed with the same
        panel quadrature as the Stein integrals (ratio of weighted integrals
        of ``h`` and of ``1``), which makes the two half-line branches meet
        continuously at ``u = 0``.

    Returns
    -------
    SteinSolution
    """
    if not p.centered:
        raise ValueError("solve expects a centered VgParams")
    s2 = p.sigma**2
    nu = 0.5 * (p.r - 1.0)
    a = sqrt(p.theta**2 + s2) / s2
    b = p.theta / s2
    shift = p.r * p.theta
    x = grid.nodes()
    u = x + shift
    seen = set()

    def h_rec(v):
        # track up to two distinct values to recognise a constant h
        y = _eval_h(h, v)
        if len(seen) < 2 and y.size:
            seen.update(np.unique(y)[:2].tolist())
        return y
    pos = u > 0
    neg = u < 0
    zero = ~(pos | neg)

    def rhs_pos(v):
        return np.stack([h_rec(v - shift), np.ones_like(v)], axis=-1)

    def rhs_neg(v):
        # reflected branch solves for -g(-v)
        return np.stack([-h_rec(-v - shift), -np.ones_like(v)], axis=-1)

    fp, wp = _half_line(u[pos], rhs_pos, nu, a, b, s2)
    fn_rev, wn = _half_line(-u[neg][::-1], rhs_neg, nu, a, -b, s2)
    fn = fn_rev[::-1]
    # weighted integrals over the whole line: positive side plus reflected negative side
    tot_h = wp[0] - wn[0]
    tot_1 = wp[1] - wn[1]
    eh = tot_h / tot_1 if expectation is None else float(expectation)
    const_h = expectation is None and len(seen) == 1
    if const_h:
        # every sampled value of h is the same: h - E h vanishes identically
        eh = seen.pop()
    f = np.empty_like(x)
    f[pos] = fp[:, 0] - eh * fp[:, 1]
    f[neg] = fn[:, 0] - eh * fn[:, 1]
    # limits at u = 0+ and u = 0- (I_nu(a v) v^-nu -> (a/2)^nu / Gamma(nu+1))
    c0 = (a / 2.0) ** nu / (s2 * _gamma(nu + 1.0))
    f0_plus = -c0 * (wp[0] - eh * wp[1])
    f0_minus = -c0 * (wn[0] - eh * wn[1])
    if np.any(zero):
        f[zero] = 0.5 * (f0_plus + f0_minus)
    branch_gap = abs(f0_plus - f0_minus)
    if const_h:
        f[:] = 0.0
        branch_gap = 0.0
    if not np.all(np.isfinite(f)):
        bad = x[np.argmax(~np.isfinite(f))]
        raise QuadratureError(f"non-finite Stein solution at x = {bad:.6g}")
    f1, f2 = _fd_derivatives(x, f)
    htil = _eval_h(h, x) - eh
    res = np.abs(stein_operator(p, x, f, f1, f2) - htil)
    res[0] = res[-1] = 0.0
    return SteinSolution(grid=grid, x=x, f=f, f1=f1, f2=f2,
                         residual_max=float(res[1:-1].max()), pointwise_residual=res,
                         expectation=float(eh), branch_gap=float(branch_gap),
                         meta={"nu": nu, "alpha": a, "beta": b, "mass_check": float(tot_1)})


def expectation_mixture(p: VgParams, h, n_normal: int = 400) -> float:
    """``E h(Y)`` through the normal variance-mean mixture.

    Writes ``Y = theta (S^2 - r) + sigma S N`` with ``S = sqrt(G)``, whose
    density is proportional to ``s^(r-1) exp(-s^2/2)``.  The ``N`` average is
    a Gauss-Hermite rule and the ``S`` integral adaptive quadrature.  Uses
    neither the VG density nor the Stein integrals.
    """
    from scipy.integrate import quad
    from scipy.special import gammaln, roots_hermitenorm

    zn, wn = roots_hermitenorm(n_normal)
    wn = wn / wn.sum()
    log_c = log(2.0) - (p.r / 2.0) * log(2.0) - gammaln(p.r / 2.0)

    def inner(s):
        if s == 0.0:
            return 0.0
        y = p.theta * (s * s - p.r) + p.sigma * s * zn
        dens = np.exp(log_c + (p.r - 1.0) * log(s) - 0.5 * s * s)
        return dens * float(wn @ _eval_h(h, y))

    smax = sqrt(p.r) + 12.0
    split = min(1.0, smax)
    v1, _ = quad(inner, 0.0, split, limit=200, epsabs=1e-14, epsrel=1e-13)
    v2, _ = quad(inner, split, smax, limit=200, epsabs=1e-14, epsrel=1e-13)
    return v1 + v2


def residual(sol: SteinSolution, p: VgParams, h, expectation: float | None = None) -> float:
    """Max interior residual of ``sol`` recomputed from scratch.

    Derivatives are re-derived from ``sol.f`` and ``E h(Y)`` is evaluated
    by :func:`expectation_mixture` unless supplied.
    """
    eh = expectation_mixture(p, h) if expectation is None else expectation
    f1, f2 = _fd_derivatives(sol.x, sol.f)
    lhs = stein_operator(p, sol.x, sol.f, f1, f2)
    res = np.abs(lhs - (_eval_h(h, sol.x) - eh))
    return float(res[1:-1].max())
