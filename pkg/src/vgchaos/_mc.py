"""Reproducible Monte Carlo plumbing: chunked streams and sample cumulants.

Draws are produced in fixed-size chunks.  Chunk ``i`` always uses the
``i``-th child of ``SeedSequence(seed)`` fed to a Philox counter generator,
so the output for a given ``(seed, n)`` is the same whether the chunks are
filled serially or by a thread pool of any size.
"""
from concurrent.futures import ThreadPoolExecutor
from math import sqrt

import numpy as np

from ._accel import jit

CHUNK = 1 << 16


def chunk_generators(seed: int, n: int, chunk: int = CHUNK):
    """List of ``(start, stop, Generator)`` covering ``range(n)``."""
    n_chunks = max(1, -(-n // chunk))
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    out = []
    for i, ss in enumerate(children):
        start = i * chunk
        stop = min(n, start + chunk)
        out.append((start, stop, np.random.Generator(np.random.Philox(ss))))
    return out


def chunked_draw(seed: int, n: int, draw, workers: int = 1, chunk: int = CHUNK):
    """Fill a length-``n`` vector with ``draw(gen, size)`` chunk by chunk.

    Parameters
    ----------
    seed : int
        Root seed.
    n : int
        Number of variates; ``0`` gives an empty vector.
    draw : callable
        ``draw(gen, size) -> ndarray`` producing ``size`` variates.
    workers : int
        Thread count.  Does not affect the result.
    """
    out = np.empty(n, dtype=float)
    if n == 0:
        return out
    jobs = chunk_generators(seed, n, chunk)

    def run(job):
        start, stop, gen = job
        out[start:stop] = draw(gen, stop - start)

    if workers <= 1:
        for job in jobs:
            run(job)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, jobs))
    return out


def _central_moments_np(x, pmax):
    mean = x.mean()
    d = x - mean
    m = np.zeros(pmax + 1)
    pw = d.copy()
    for k in range(2, pmax + 1):
        pw *= d
        m[k] = pw.mean()
    m[1] = mean
    return m


@jit(fallback=_central_moments_np)
def _central_moments(x, pmax):
    n = x.shape[0]
    mean = 0.0
    for i in range(n):
        mean += x[i]
    mean /= n
    m = np.zeros(pmax + 1)
    for i in range(n):
        d = x[i] - mean
        pw = d
        for k in range(2, pmax + 1):
            pw *= d
            m[k] += pw
    for k in range(2, pmax + 1):
        m[k] /= n
    m[1] = mean
    return m


def sample_cumulants(x, pmax: int = 6):
    """Plug-in cumulants ``kappa_2 .. kappa_pmax`` from central moments.

    Returns an array indexed by order, ``out[p]`` for ``p = 0..pmax``
    (entries 0 and 1 hold ``n`` and the sample mean).
    """
    if pmax > 6 or pmax < 2:
        raise ValueError("pmax must be in 2..6")
    x = np.ascontiguousarray(x, dtype=float)
    m = _central_moments(x, 6)
    k = np.zeros(7)
    k[0] = x.shape[0]
    k[1] = m[1]
    k[2] = m[2]
    k[3] = m[3]
    k[4] = m[4] - 3 * m[2] ** 2
    k[5] = m[5] - 10 * m[3] * m[2]
    k[6] = m[6] - 15 * m[4] * m[2] - 10 * m[3] ** 2 + 30 * m[2] ** 3
    return k[: pmax + 1]


def batch_se(values_per_batch):
    """Standard error of the mean from per-batch estimates (rows = batches)."""
    v = np.asarray(values_per_batch, dtype=float)
    b = v.shape[0]
    return v.std(axis=0, ddof=1) / sqrt(b)


def cumulants_with_se(x, pmax: int = 6, n_batches: int = 20):
    """Full-sample cumulants and their batch-based standard errors.

    The sample is split into ``n_batches`` contiguous equal blocks; the SE
    of the full-sample estimate is the spread of block estimates divided
    by ``sqrt(n_batches)``.
    """
    x = np.asarray(x, dtype=float)
    est = sample_cumulants(x, pmax)
    blocks = np.array_split(x, n_batches)
    per = np.array([sample_cumulants(b, pmax) for b in blocks])
    return est, batch_se(per)
