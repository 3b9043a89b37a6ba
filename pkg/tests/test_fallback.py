"""The pure-numpy path (``VGCHAOS_DISABLE_NUMBA=1``) must reproduce the compiled one."""
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from vgchaos import _accel, _mc, chaos, rosenblatt, stein

SCRIPT = r"""
import json, warnings
import numpy as np
warnings.simplefilter("ignore")
from vgchaos import _accel, special, stein, chaos, rosenblatt, vg, _mc
from vgchaos.vg import VgParams
out = {"numba": _accel.HAVE_NUMBA}
r = np.random.default_rng(0)
nu, x = r.uniform(0, 8, 200), r.uniform(1e-3, 60, 200)
out["bessel_k"] = special.bessel_k_scaled(nu, x).tolist()
out["bessel_i"] = special.bessel_i_scaled(nu, x).tolist()
out["log_gamma"] = special.log_gamma(r.uniform(0.01, 50, 50)).tolist()
out["density"] = vg.density(VgParams(2.5, 0.3, 0.9), np.linspace(-4, 4, 41)).tolist()
out["stein_f"] = stein.solve(VgParams(2, 0.3, 1), np.tanh, stein.SteinGrid(-6, 6, 200)).f.tolist()
F = chaos.SecondChaosElement([0.6, -0.4, 0.2, -0.1])
xs = chaos.sample(F, 20000, seed=3)
out["sample"] = xs[:200].tolist()
out["moments"] = _mc.sample_cumulants(xs).tolist()
out["eig"] = rosenblatt.exact_scaled_eigenvalues(rosenblatt.RosenblattSpec(-0.7, -0.65, 64))[:20].tolist()
out["trace4"] = list(rosenblatt.cyclic_trace_mc(-0.7, -0.65, 4, 4096, seed=2))
xs2, ys2 = rosenblatt.sample_with_target(F.rescaled(1.0), VgParams(1, 0, 1), 5000, seed=1, max_terms=2)
out["target_sample"] = (xs2[:100].tolist(), ys2[:100].tolist())
print(json.dumps(out))
"""


def _run(disable):
    env = dict(os.environ)
    if disable:
        env["VGCHAOS_DISABLE_NUMBA"] = "1"
    else:
        env.pop("VGCHAOS_DISABLE_NUMBA", None)
    res = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True,
                         timeout=900)
    assert res.returncode == 0, res.stderr
    return json.loads(res.stdout.strip().splitlines()[-1])


@pytest.mark.slow
def test_disabled_numba_matches_compiled():
    fast = _run(False)
    slow = _run(True)
    assert slow["numba"] is False
    for key in fast:
        if key == "numba":
            continue
        a, b = np.asarray(fast[key], dtype=float), np.asarray(slow[key], dtype=float)
        assert a.shape == b.shape, key
        # summation order may differ between the loop and vectorized forms
        np.testing.assert_allclose(b, a, rtol=1e-11, atol=1e-13, err_msg=key)


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="needs numba")
def test_registered_fallbacks_agree_in_process():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((500, 7))
    c = rng.uniform(-1, 1, 7)
    a, b = np.empty(500), np.empty(500)
    chaos._chaos_from_normals(z, c, a)
    _accel.fallback_of(chaos._chaos_from_normals)(z, c, b)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)

    x = rng.standard_normal(10_000)
    np.testing.assert_allclose(_mc._central_moments(x, 6), _accel.fallback_of(_mc._central_moments)(x, 6),
                               rtol=1e-12)

    ex, cp, cm, lam = rosenblatt._pattern_tables(-0.8, -0.6, 3)
    u = rng.random((1000, 3))
    a, b = np.empty(1000), np.empty(1000)
    rosenblatt._trace_kernel(u, ex, cp, cm, lam, a)
    _accel.fallback_of(rosenblatt._trace_kernel)(u, ex, cp, cm, lam, b)
    np.testing.assert_allclose(a, b, rtol=1e-12)

    nodes = rosenblatt.mesh_nodes(40, 3.0)
    a, b = np.empty((40, 40)), np.empty((40, 40))
    args = (nodes, -0.45, 3.0, 2.5, rosenblatt._GX, rosenblatt._GW)
    rosenblatt._cell_block(*args, a)
    _accel.fallback_of(rosenblatt._cell_block)(*args, b)
    np.testing.assert_allclose(a, b, rtol=1e-12)

    n = 50
    p0 = np.sort(rng.uniform(0, 20, n))
    p1 = p0 + 0.05
    ap, bp = rng.random((n, 2)), rng.random((n, 2))
    outs = [np.empty((n + 1, 2)) for _ in range(4)]
    stein._accumulate(p0, p1, 1.3, 0.7, ap, bp, outs[0], outs[1])
    _accel.fallback_of(stein._accumulate)(p0, p1, 1.3, 0.7, ap, bp, outs[2], outs[3])
    np.testing.assert_allclose(outs[0], outs[2], rtol=1e-12)
    np.testing.assert_allclose(outs[1], outs[3], rtol=1e-12)
