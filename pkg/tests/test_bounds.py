import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vgchaos import bounds, chaos, vg
from vgchaos.bounds import DictFunction, KappaMismatchError
from vgchaos.chaos import SecondChaosElement
from vgchaos.stein import ms_constants
from vgchaos.vg import VgParams

Y1 = VgParams(1, 0, 1)


def test_kappa_mismatch_is_reported():
    F = SecondChaosElement([0.6, -0.4])
    with pytest.raises(KappaMismatchError, match="rescale"):
        bounds.six_moment_bound(F, Y1)
    with pytest.raises(KappaMismatchError):
        bounds.build_bound_report(F, Y1, 1000, 0)
    # 1e-9 relative tolerance
    G = SecondChaosElement([0.5, -0.5 * (1 + 1e-10)])
    assert bounds.six_moment_bound(G, Y1) < 1e-3


def test_six_moment_bound_vanishes_on_target():
    assert bounds.six_moment_bound(SecondChaosElement([0.5, -0.5]), Y1) == 0.0


def test_six_moment_bound_example_after_rescale():
    F = SecondChaosElement([0.6, -0.4]).rescaled(1.0)
    c = np.array([0.6, -0.4]) / math.sqrt(1.04)
    k = {p: 2 ** (p - 1) * math.factorial(p - 1) * np.sum(c**p) for p in (3, 4, 6)}
    d3, d4, d6 = abs(k[3]), abs(k[4] - 6.0), abs(k[6] - 120.0)
    C1 = ms_constants(Y1).C1
    ref = C1 * (math.sqrt(d6 / 120) + math.sqrt(2 / 6) * math.sqrt(d4)) + 0.5 * C1 * d3
    assert bounds.six_moment_bound(F, Y1) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(c=st.lists(st.floats(-1.5, 1.5).filter(lambda v: abs(v) > 1e-2), min_size=2, max_size=8),
       theta=st.floats(-1, 1), sigma=st.floats(0.2, 2))
def test_clean_form_dominates_six_moment_bound(c, theta, sigma):
    p = VgParams(2, theta, sigma)
    F = SecondChaosElement(c).rescaled(p.variance)
    assert bounds.six_moment_bound(F, p) <= bounds.clean_bound(F, p) * (1 + 1e-12)


def test_w1_examples():
    assert bounds.empirical_w1([0.0, 1.0], [1.0, 2.0]) == 1.0
    assert bounds.empirical_w1([3.0, 1.0, 2.0], [1.0, 2.0, 3.0]) == 0.0
    with pytest.raises(ValueError):
        bounds.empirical_w1([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        bounds.empirical_w1([1.0], [1.0])


@settings(max_examples=100, deadline=None)
@given(data=st.data(), n=st.integers(2, 50))
def test_w1_symmetric_and_triangle(data, n):
    vec = st.lists(st.floats(-100, 100), min_size=n, max_size=n)
    a, b, c = (np.array(data.draw(vec)) for _ in range(3))
    ab = bounds.empirical_w1(a, b)
    assert ab == bounds.empirical_w1(b, a)
    assert ab <= bounds.empirical_w1(a, c) + bounds.empirical_w1(c, b) + 1e-9


def test_w1_self_distance_small():
    F = SecondChaosElement([0.6, -0.4]).rescaled(1.0)
    xs = chaos.sample(F, 1_000_000, seed=1)
    ys = chaos.sample(F, 1_000_000, seed=2)
    assert bounds.empirical_w1(xs, ys) <= 0.01


def test_dictionary_is_certified():
    x = np.linspace(-30, 30, 200_001)
    dx = x[1] - x[0]
    for h in bounds.default_dictionary():
        assert h.d1_bound <= 1 and h.d2_bound <= 1
        y = h(x)
        d1 = np.gradient(y, dx)
        d2 = np.gradient(d1, dx)
        assert np.max(np.abs(d1)) <= h.d1_bound + 1e-6, h.name
        assert np.max(np.abs(d2)) <= h.d2_bound + 1e-4, h.name


def test_dictionary_single_function_and_monotonicity():
    xs = chaos.sample(SecondChaosElement([0.6, -0.4]).rescaled(1.0), 100_000, seed=3)
    sin = DictFunction("sin", np.sin, 1.0, 1.0)
    val = bounds.dh2_dictionary_lower(xs, Y1, [sin])
    assert val == pytest.approx(abs(np.mean(np.sin(xs)) - vg.expectation(Y1, np.sin)), rel=1e-12)
    full = bounds.default_dictionary()
    prev = 0.0
    for k in range(1, len(full) + 1):
        cur = bounds.dh2_dictionary_lower(xs, Y1, full[:k])
        assert cur >= prev
        prev = cur


def test_dictionary_same_law_within_se():
    xs = vg.sample(Y1, 400_000, seed=8)
    val, det = bounds.dh2_dictionary_lower(xs, Y1, return_detail=True)
    assert val <= 3 * det["max_se"]


def test_rate_fit_examples():
    x = np.geomspace(1e-3, 1, 8)
    s, i, r2 = bounds.rate_fit(np.column_stack([x, 3 * x]))
    assert s == pytest.approx(1.0, abs=1e-12) and i == pytest.approx(math.log(3), abs=1e-12)
    assert bounds.rate_fit(np.column_stack([x, x**2]))[0] == pytest.approx(2.0, abs=1e-12)
    noise = np.exp(0.01 * np.random.default_rng(0).standard_normal(8))
    assert bounds.rate_fit(np.column_stack([x, np.sqrt(x) * noise]))[0] == pytest.approx(0.5, abs=0.05)
    with pytest.raises(ValueError):
        bounds.rate_fit([[1, 1], [2, 2], [3, -1], [4, 4]])
    with pytest.raises(ValueError):
        bounds.rate_fit([[1, 1], [2, 2], [3, 3]])


def test_interpolating_family_matches_kappa2():
    F = bounds.interpolating_family([0.5, -0.5], [0.6, -0.4], 0.25, 1.0)
    assert F.kappa2 == pytest.approx(1.0, rel=1e-14)


def test_bound_report_fields_and_determinism():
    F = SecondChaosElement([0.6, -0.4])
    a = bounds.build_bound_report(F, Y1, 200_000, seed=7, rescale=True)
    b = bounds.build_bound_report(F, Y1, 200_000, seed=7, rescale=True, workers=3)
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    for key in ("M", "M_prime", "six_moment_bound", "clean_bound", "w1_hat", "dH2_dictionary_lower"):
        assert d[key] >= 0
    assert [row["order"] for row in d["cumulant_table"]] == [2, 3, 4, 5, 6]
    assert d["meta"]["coupled_control"] is True
    # sandwich: dictionary <= W1 + 3 SE <= six-moment bound + 3 SE
    assert a.dH2_dictionary_lower <= a.w1_hat + 3 * (a.w1_se + a.dH2_se)
    assert a.w1_hat <= a.six_moment_bound + 3 * a.w1_se


def test_family_experiment_slopes():
    ts = [2.0**-k for k in range(2, 8)]
    fam = [bounds.interpolating_family([0.5, -0.5], [0.6, -0.4], t, 1.0) for t in ts]
    out = bounds.family_rate_experiment(fam, Y1, 200_000, seed=1, labels=ts)
    assert len(out["rows"]) == len(ts)
    assert set(out["rows"][0]) == set(bounds.FAMILY_COLUMNS)
    assert out["slopes"]["dict_lower"] == pytest.approx(1.0, abs=0.15)


def test_six_moment_bound_square_root_for_mass_splitting_family():
    # split the +1/2 eigenvalue into (sqrt(1/4 - s^2), s): kappa_2 is preserved and
    # every cumulant difference is O(s^2), so sqrt terms make the bound O(sqrt M)
    ss = np.geomspace(1e-3, 3e-2, 7)
    pts = []
    for s in ss:
        F = SecondChaosElement([math.sqrt(0.25 - s * s), s, -0.5])
        pts.append((chaos.m_statistic(F, Y1)[0], bounds.six_moment_bound(F, Y1)))
    assert bounds.rate_fit(pts)[0] == pytest.approx(0.5, abs=0.05)
