import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from vgchaos import chaos, rosenblatt as R
from vgchaos.bounds import rate_fit
from vgchaos.rosenblatt import RefinementWarning, RhoCase, RosenblattSpec
from vgchaos.special import beta_fn
from vgchaos.vg import VgParams


def test_reduced_kernel_example_and_oracle():
    assert R.reduced_kernel(-0.6, -0.6, 1.0, 0.0) == pytest.approx(6.8381, abs=5e-5)
    for ga, gb, s, t in [(-0.6, -0.6, 1.0, 0.0), (-0.7, -0.55, 0.3, 0.9), (-0.8, -0.6, 2.0, 0.5)]:
        lo, hi = min(s, t), max(s, t)
        g_lo, g_hi = (ga, gb) if s == lo else (gb, ga)
        far = quad(lambda x: (lo - x) ** g_lo * (hi - x) ** g_hi, -np.inf, lo - 1.0, epsabs=1e-13)[0]
        # (lo - x)^g_lo carried by the algebraic weight at the right endpoint
        near = quad(lambda x: (hi - x) ** g_hi, lo - 1.0, lo, weight="alg", wvar=(0.0, g_lo),
                    epsabs=1e-13, epsrel=1e-12)[0]
        ref = far + near
        assert R.reduced_kernel(ga, gb, s, t) == pytest.approx(ref, rel=1e-7)


def test_reduced_kernel_symmetry_scaling_and_diagonal():
    s, t = np.array([0.2, 0.9, 0.4]), np.array([0.7, 0.1, 0.3])
    assert np.array_equal(R.reduced_kernel(-0.65, -0.65, s, t), R.reduced_kernel(-0.65, -0.65, t, s))
    lam = 3.7
    ga, gb = -0.8, -0.6
    assert np.allclose(R.reduced_kernel(ga, gb, lam * s, lam * t),
                       lam ** (1 + ga + gb) * R.reduced_kernel(ga, gb, s, t), rtol=1e-13)
    assert R.reduced_kernel(ga, gb, 0.5, 0.5) == math.inf
    with pytest.raises(ValueError):
        R.reduced_kernel(-0.3, -0.6, 1.0, 0.0)


def test_chaos_kernel_diagonal_closed_form():
    spec = RosenblattSpec(-0.7, -0.6)
    for x in (-0.01, -0.5, -3.0, -40.0):
        e = spec.gamma1 + spec.gamma2 + 1
        g = ((1 - x) ** e - (-x) ** e) / e
        assert R.chaos_kernel(spec, x, x) == pytest.approx(spec.A * g, rel=1e-10)


def test_chaos_kernel_symmetry_and_domain():
    spec = RosenblattSpec(-0.7, -0.6)
    for x1, x2 in [(-0.3, 0.4), (0.1, 0.95), (-5.0, -0.2)]:
        assert R.chaos_kernel(spec, x1, x2) == R.chaos_kernel(spec, x2, x1)
    with pytest.raises(ValueError):
        R.chaos_kernel(spec, 1.2, 0.0)


def test_chaos_kernel_decay():
    # with y fixed, each half of the symmetrized kernel decays like |x|^gamma_i,
    # so the slower exponent max(gamma1, gamma2) dominates
    for g1, g2 in [(-0.7, -0.7), (-0.8, -0.6)]:
        spec = RosenblattSpec(g1, g2)
        xs = -np.geomspace(200, 20000, 6)
        vals = [abs(R.chaos_kernel(spec, x, 0.3)) for x in xs]
        slope = rate_fit(np.column_stack([-xs, vals]))[0]
        assert slope == pytest.approx(max(g1, g2), abs=0.02)


@pytest.mark.parametrize("g", [(-0.7, -0.7), (-0.8, -0.6), (-0.55, -0.9)])
def test_trace2_matches_qmc(g):
    spec = RosenblattSpec(*g)
    val, se = R.cumulant_trace_mc(spec, 2, n_mc=1 << 16, seed=3)
    assert abs(val - 1.0) <= 3 * se


def test_triangle_and_spec_validation():
    assert R.in_triangle(-0.7, -0.7) and not R.in_triangle(-0.9, -0.7)
    for bad in [(-0.4, -0.7), (-0.9, -0.7), (-1.0, -0.6)]:
        with pytest.raises(ValueError):
            RosenblattSpec(*bad)
    with pytest.raises(ValueError):
        RosenblattSpec(-0.7, -0.7, n_nodes=4)


def test_rho_case_values():
    rc = RhoCase(0.5)
    # 30-digit evaluation of the closed form gives 0.99956700550...
    assert rc.alpha_rho == pytest.approx(0.9995670055, abs=1e-10)
    assert rc.beta_rho == pytest.approx(0.029425, abs=1e-6)
    for rho in (0.05, 0.3, 0.5, 0.9):
        rc = RhoCase(rho)
        assert rc.alpha_rho**2 + rc.beta_rho**2 == pytest.approx(1.0, rel=1e-14)
        assert R.target_vg("b", rho).variance == pytest.approx(1.0, rel=1e-14)
    for bad in (0.0, 1.0, 1.5, -0.2):
        with pytest.raises(ValueError):
            RhoCase(bad)
    assert R.target_vg("a") == VgParams(1, 0, 1)
    with pytest.raises(ValueError):
        R.target_vg("c")
    assert R.case_b_gamma2(-0.6, 0.5) == pytest.approx(-0.7)


def test_spectrum_normalized_and_real():
    F, info = R.nystrom_spectrum(RosenblattSpec(-0.6, -0.6, 400), return_info=True)
    assert F.kappa2 == pytest.approx(1.0, rel=1e-13)
    assert np.all(np.isreal(F.eigenvalues))
    assert 2 * np.sum(F.eigenvalues**2) == pytest.approx(1.0, rel=1e-13)
    assert 0.99 < info["captured_fraction"] <= 1.0


def test_grid_self_consistency():
    k = [chaos.cumulant(R.nystrom_spectrum(RosenblattSpec(-0.6, -0.6, n, T=T)), 4)
         for n, T in [(400, 50.0), (800, 75.0)]]
    assert abs(k[1] / k[0] - 1) < 0.01


def test_cross_oracle_fourth_and_third_cumulant():
    spec = RosenblattSpec(-0.6, -0.6, 800)
    F = R.nystrom_spectrum(spec)
    k4, se4 = R.cumulant_trace_mc(spec, 4, n_mc=1 << 17, seed=11)
    assert abs(k4 - chaos.cumulant(F, 4)) <= max(0.01 * abs(k4), 4 * se4)
    k3, _ = R.cumulant_trace_mc(spec, 3, n_mc=1 << 17, seed=12)
    assert k3 == pytest.approx(chaos.cumulant(F, 3), rel=0.01)


def test_tail_modes_and_warning():
    spec = RosenblattSpec(-0.8, -0.6, 100)
    with pytest.warns(RefinementWarning):
        Fp, info = R.nystrom_spectrum(spec, return_info=True)
    assert info["captured_fraction"] < 0.95
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RefinementWarning)
        Fr = R.nystrom_spectrum(spec, tail="rescale")
    c = R.exact_scaled_eigenvalues(spec)
    cap = 2 * np.sum(c * c)
    # rescale inflates kappa_3 by captured^(-3/2); padding leaves the discrete part alone
    assert chaos.cumulant(Fr, 3) == pytest.approx(8 * np.sum(c**3) * cap**-1.5, rel=1e-10)
    assert chaos.cumulant(Fp, 3) == pytest.approx(8 * np.sum(c**3), rel=1e-10)
    with pytest.raises(ValueError):
        R.nystrom_spectrum(spec, tail="other")


def test_extrapolation_reduces_level_drift():
    out = R.extrapolated_cumulants(RosenblattSpec(-0.7, -0.7, 400))
    per = out["per_level"]
    assert out["levels"] == [100, 200, 400]
    assert out["kappa"][0] == pytest.approx(1.0, abs=2e-3)
    # exact-A normalization: kappa_2 creeps up to 1 from below
    assert per[0, 0] < per[1, 0] < per[2, 0] <= 1.0


def test_exact_eigenvalues_are_copies():
    spec = RosenblattSpec(-0.7, -0.7, 64)
    a = R.exact_scaled_eigenvalues(spec)
    a[:] = 0
    assert np.any(R.exact_scaled_eigenvalues(spec) != 0)


def test_chi_square_corner_has_one_dominant_eigenvalue():
    c = R.exact_scaled_eigenvalues(RosenblattSpec(-0.51, -0.51, 400))
    assert c[0] == pytest.approx(1 / math.sqrt(2), abs=0.01)
    assert abs(c[1]) < 0.05


def test_sample_with_target_coupling():
    with pytest.warns(RefinementWarning):
        F = R.nystrom_spectrum(RosenblattSpec(-0.7, -0.7, 200))
    Y = VgParams(1, 0, 1)
    xs, ys = R.sample_with_target(F, Y, 100_000, seed=4)
    xs2, ys2 = R.sample_with_target(F, Y, 100_000, seed=4, workers=3)
    assert xs.tobytes() == xs2.tobytes() and ys.tobytes() == ys2.tobytes()
    assert np.var(xs) == pytest.approx(1.0, abs=0.03)
    assert np.var(ys) == pytest.approx(1.0, abs=0.03)
    assert np.corrcoef(xs, ys)[0, 1] > 0.3


def test_rate_experiment_small():
    out = R.rate_experiment("b", gamma1_sequence=(-0.53, -0.55, -0.58, -0.62), rho=0.5, n_nodes=200)
    assert len(out["rows"]) == 4
    assert set(out["rows"][0]) == set(R.RATE_COLUMNS)
    assert math.isnan(out["slopes"]["w1_hat"])
    for row in out["rows"]:
        assert row["gamma2"] == pytest.approx(R.case_b_gamma2(row["gamma1"], 0.5))
        assert row["M"] >= 0
    with pytest.raises(ValueError):
        R.rate_experiment("b", rho=None, n_nodes=64)
    with pytest.raises(ValueError):
        R.rate_experiment("a", gamma1_sequence=(-0.4, -0.55, -0.58, -0.62), n_nodes=64)


def test_beta_helper_consistency():
    # the normalization uses Beta functions with both small and large arguments
    assert R.trace2_exact(-0.7, -0.7) > 0
    g1 = g2 = -0.7
    z = -1 - g1 - g2
    assert beta_fn(g1 + 1, z) == pytest.approx(R.reduced_kernel(g1, g2, 1.0, 0.0), rel=1e-14)
