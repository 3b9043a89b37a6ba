"""Time the numba kernels against their non-compiled fallbacks.

Run with ``python benchmarks/bench_kernels.py [--repeat N] [--json FILE]``.
Numba must be available (do not set ``VGCHAOS_DISABLE_NUMBA``).  Array
kernels are timed in one process against their numpy fallbacks on identical
inputs, after checking that outputs agree.  Scalar kernels (Bessel, Gamma)
have no vectorized fallback, so they are timed end to end in two
subprocesses, with and without the environment flag.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from vgchaos import _accel, _mc, chaos, rosenblatt, stein


def _best(fn, repeat):
    fn()  # warm-up (compilation for the jitted path)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    z = rng.standard_normal((100_000, 50))
    c = rng.uniform(-1, 1, 50)
    x = rng.standard_normal(1_000_000)
    nodes = rosenblatt.mesh_nodes(200, 3.0)
    ex, cp, cm, lam = rosenblatt._pattern_tables(-0.7, -0.65, 4)
    u = rng.random((1 << 13, 4))
    n_pan = 2000
    p0 = np.sort(rng.uniform(0, 50, n_pan))
    p1 = p0 + 0.01
    ap = rng.random((n_pan, 2))
    bp = rng.random((n_pan, 2))

    def out(n, m=None):
        return np.empty(n) if m is None else np.empty((n, m))

    return {
        "chaos_from_normals (1e5 x 50)": (chaos._chaos_from_normals, lambda f: (f(z, c, o := out(z.shape[0])), o)[1]),
        "central_moments (1e6)": (_mc._central_moments, lambda f: f(x, 6)),
        "gram cell block (200 x 200)": (rosenblatt._cell_block,
                                        lambda f: (f(nodes, -0.35, 4.0, 3.0, rosenblatt._GX, rosenblatt._GW,
                                                     o := out(200, 200)), o)[1]),
        "cyclic trace p=4 (8192 pts)": (rosenblatt._trace_kernel,
                                        lambda f: (f(u, ex, cp, cm, lam, o := out(u.shape[0])), o)[1]),
        "Stein recurrences (2000 panels)": (stein._accumulate,
                                            lambda f: (f(p0, p1, 1.3, 0.7, ap, bp, j1 := out(n_pan + 1, 2),
                                                         j2 := out(n_pan + 1, 2)), np.concatenate([j1, j2]))[1]),
    }


END_TO_END = {
    "bessel_k + bessel_i (5000 pts)": (
        "import numpy as np; from vgchaos import special as s\n"
        "r = np.random.default_rng(1); nu = r.uniform(0, 5, 5000); x = r.uniform(0.01, 30, 5000)\n"
        "s.bessel_k(nu[:5], x[:5])\n"
        "t = time.perf_counter(); s.bessel_k(nu, x); s.bessel_i(nu, x); dt = time.perf_counter() - t\n"),
    "Stein solve, tanh, 512 nodes": (
        "import numpy as np; from vgchaos import stein, vg\n"
        "p = vg.VgParams(2, 0.3, 1.0); g = stein.SteinGrid(-8, 8, 512)\n"
        "stein.solve(p, np.tanh, stein.SteinGrid(-8, 8, 64))\n"
        "t = time.perf_counter(); stein.solve(p, np.tanh, g); dt = time.perf_counter() - t\n"),
}


def _run_script(body, disable):
    env = dict(os.environ)
    if disable:
        env["VGCHAOS_DISABLE_NUMBA"] = "1"
    else:
        env.pop("VGCHAOS_DISABLE_NUMBA", None)
    code = "import time\n" + body + "print(dt)\n"
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba disabled or missing; nothing to compare")
    rng = np.random.default_rng(12345)
    rows = []
    print(f"{'kernel':34s} {'numba [s]':>11s} {'fallback [s]':>13s} {'speedup':>9s}  max rel diff")
    for name, (kern, call) in cases(rng).items():
        fb = _accel.fallback_of(kern)
        a = np.asarray(call(kern))
        b = np.asarray(call(fb))
        scale = np.maximum(np.abs(a), 1e-300)
        diff = float(np.max(np.abs(a - b) / scale))
        t_jit = _best(lambda: call(kern), args.repeat)
        t_fb = _best(lambda: call(fb), max(1, args.repeat // 2))
        rows.append({"kernel": name, "numba_s": t_jit, "fallback_s": t_fb,
                     "speedup": t_fb / t_jit, "max_rel_diff": diff})
        print(f"{name:34s} {t_jit:11.4g} {t_fb:13.4g} {t_fb / t_jit:9.1f}  {diff:.1e}")
    print()
    print(f"{'end to end':34s} {'numba [s]':>11s} {'fallback [s]':>13s} {'speedup':>9s}")
    for name, body in END_TO_END.items():
        t_jit = min(_run_script(body, False) for _ in range(2))
        t_fb = _run_script(body, True)
        rows.append({"kernel": name, "numba_s": t_jit, "fallback_s": t_fb, "speedup": t_fb / t_jit})
        print(f"{name:34s} {t_jit:11.4g} {t_fb:13.4g} {t_fb / t_jit:9.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
