import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from vgchaos import vg
from vgchaos._mc import sample_cumulants
from vgchaos.vg import ChaosVgParams, SingularDensityWarning, VgParams


def test_laplace_special_case():
    p = VgParams(2, 0.0, 1.0, mu=0.0)
    assert vg.density(p, 0.0) == pytest.approx(0.5, rel=1e-13)
    # closed form 1/2 exp(-|x|); at 1.3 this is 0.13626590...
    assert vg.density(p, 1.3) == pytest.approx(0.5 * math.exp(-1.3), rel=1e-13)
    xs = np.linspace(-6, 6, 25)
    assert np.allclose(vg.density(p, xs), 0.5 * np.exp(-np.abs(xs)), rtol=1e-13)


def test_density_matches_gamma_mixture_representation():
    # Y = theta (G - r) + sigma sqrt(G) N, G ~ 2 Gamma(r/2): integrate the normal mixture over G
    from scipy.stats import gamma, norm

    p = VgParams(3.0, 0.4, 1.3)
    for x in [-3.0, -0.2, 0.7, 4.0]:
        def integrand(g):
            return norm.pdf(x, loc=p.theta * (g - p.r), scale=p.sigma * math.sqrt(g)) * gamma.pdf(g, p.r / 2, scale=2)
        ref, _ = quad(integrand, 0, np.inf, epsrel=1e-12, limit=400)
        assert vg.density(p, x) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("r, theta, sigma", [(1, 0, 1), (2, 0.3, 1), (0.5, -0.7, 0.8), (4, -0.5, 2), (7.5, 1.2, 0.6)])
def test_density_normalizes(r, theta, sigma):
    p = VgParams(r, theta, sigma)
    lo, hi = vg._mass_window(p, 1e-14)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularDensityWarning)
        left, _ = quad(lambda x: vg.density(p, x), lo, p.mu, limit=400, epsrel=1e-11)
        right, _ = quad(lambda x: vg.density(p, x), p.mu, hi, limit=400, epsrel=1e-11)
    assert left + right == pytest.approx(1.0, abs=1e-6)


def test_density_at_location_point():
    with pytest.warns(SingularDensityWarning):
        assert vg.density(VgParams(1, 0.2, 1), -0.2) == math.inf
    p = VgParams(3, 0.2, 1)
    eps = 1e-7
    assert vg.density(p, p.mu) == pytest.approx(vg.density(p, p.mu + eps), rel=1e-5)


@pytest.mark.parametrize("kw", [dict(r=0, theta=0, sigma=1), dict(r=1, theta=0, sigma=0),
                                dict(r=1, theta=math.nan, sigma=1), dict(r=math.inf, theta=0, sigma=1)])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        VgParams(**kw)


def test_cumulant_examples():
    assert np.allclose(vg.cumulants_2_to_6(VgParams(1, 0, 1)), [1, 0, 6, 0, 120], atol=0)
    # sigma -> 0 approaches chi-square(1) - 1 cumulants 2^(p-1)(p-1)!
    k = vg.cumulants_2_to_6(VgParams(1, 1, 1e-9))
    assert np.allclose(k[:3], [2, 8, 48], rtol=1e-12)
    assert vg.cumulants_2_to_6(VgParams(2, 0.5, 1))[1] == pytest.approx(8.0)


def test_cumulants_require_centered():
    with pytest.raises(ValueError):
        vg.cumulants_2_to_6(VgParams(1, 0.3, 1, mu=0.0))


def test_cumulants_against_symbolic_cgf():
    import sympy as sp

    t, r, th, s = sp.symbols("t r theta sigma")
    # log E exp(tY) for the centered law
    K = -r * th * t - r / 2 * sp.log(1 - 2 * th * t - s**2 * t**2)
    vals = {r: sp.Rational(3, 2), th: sp.Rational(-2, 5), s: sp.Rational(7, 10)}
    ref = [float(sp.diff(K, t, p).subs(t, 0).subs(vals)) for p in range(2, 7)]
    got = vg.cumulants_2_to_6(VgParams(1.5, -0.4, 0.7))
    assert np.allclose(got, ref, rtol=1e-13)


@settings(max_examples=200, deadline=None)
@given(r=st.floats(0.1, 20), theta=st.floats(-5, 5), sigma=st.floats(0.05, 5))
def test_linear_cumulant_identity(r, theta, sigma):
    assert vg.cumulant_identity_residual(VgParams(r, theta, sigma)) < 1e-12


def test_sampling_moments():
    p = VgParams(1, 0, 1)
    x = vg.sample(p, 1_000_000, seed=11)
    se = x.std() / 1000
    assert abs(x.mean()) < 3 * se
    assert x.var() == pytest.approx(1.0, abs=0.02)
    p2 = VgParams(2, 0.5, 1)
    y = vg.sample(p2, 1_000_000, seed=12)
    k = sample_cumulants(y)
    assert k[3] == pytest.approx(8.0, rel=0.05)


def test_sampling_deterministic_and_worker_independent():
    p = VgParams(2.5, -0.3, 0.9)
    a = vg.sample(p, 200_003, seed=5, workers=1)
    b = vg.sample(p, 200_003, seed=5, workers=4)
    c = vg.sample(p, 200_003, seed=6)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)
    assert vg.sample(p, 0, seed=1).size == 0


def test_char_fn_inv_sq():
    p = VgParams(1, 0, 1)
    assert vg.char_fn_inv_sq(p, 0.0) == 1 + 0j
    assert vg.char_fn_inv_sq(p, 1.0) == pytest.approx(2 + 0j)
    q = VgParams(2, 0.4, 0.8)
    x = vg.sample(q, 1_000_000, seed=3)
    for t in [0.3, 0.8, 1.5]:
        emp = abs(np.mean(np.exp(1j * t * x))) ** -2
        assert abs(vg.char_fn_inv_sq(q, t)) == pytest.approx(emp, rel=0.02)


def test_chaos_parametrization():
    assert vg.from_chaos_params(ChaosVgParams(0.5, 0.5, 1)) == VgParams(1, 0, 1)
    q = vg.from_chaos_params(ChaosVgParams(1, 1, 3))
    assert (q.r, q.theta, q.sigma) == (3, 0, 2)
    from vgchaos.rosenblatt import RhoCase

    rc = RhoCase(0.5)
    q = vg.from_chaos_params(ChaosVgParams(rc.alpha_rho / math.sqrt(2), rc.beta_rho / math.sqrt(2), 1))
    assert q.theta == pytest.approx(0.68599, abs=1e-5)
    # 2 alpha beta = 1/17 exactly at rho = 1/2
    assert q.sigma == pytest.approx(1 / math.sqrt(17), rel=1e-14)
    with pytest.raises(ValueError):
        ChaosVgParams(0.5, 0.5, 1.5)


def test_expectation_by_quadrature():
    p = VgParams(2, 0.3, 1)
    assert vg.expectation(p, lambda x: x) == pytest.approx(0.0, abs=1e-10)
    assert vg.expectation(p, lambda x: x * x) == pytest.approx(p.variance, rel=1e-10)
