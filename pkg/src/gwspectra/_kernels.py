"""Hot numeric kernels: population-dynamics sweeps and bottom-up tree resolvents.

Two implementations of each kernel are provided: a numba @njit version and a
pure-numpy fallback. The fallback is selected by setting GWSPECTRA_NO_NUMBA=1
(or when numba is not importable). Both paths consume the same counter-based
index stream (splitmix64 keyed by a per-sweep 64-bit key and the flat draw
position), so a given seed produces the same resampling indices on either
path and results are independent of thread count.
"""

from __future__ import annotations

import os

import numpy as np

_U = np.uint64
_SM_GAMMA = _U(0x9E3779B97F4A7C15)
_SM_M1 = _U(0xBF58476D1CE4E5B9)
_SM_M2 = _U(0x94D049BB133111EB)

_flag = os.environ.get("GWSPECTRA_NO_NUMBA", "").strip().lower()
_numba_disabled = _flag in ("1", "true", "yes", "on")

try:
    if _numba_disabled:
        raise ImportError("numba disabled by GWSPECTRA_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False


def splitmix64(key: np.uint64, positions: np.ndarray) -> np.ndarray:
    """Counter-based splitmix64 stream: value at (key, position), vectorized."""
    z = (key + (positions.astype(np.uint64) + _U(1)) * _SM_GAMMA)
    z = (z ^ (z >> _U(30))) * _SM_M1
    z = (z ^ (z >> _U(27))) * _SM_M2
    return z ^ (z >> _U(31))


def _segment_sums(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per-group sums of values[offsets[j]:offsets[j+1]], empty groups -> 0."""
    total = int(offsets[-1])
    counts = np.diff(offsets)
    if total == 0:
        return np.zeros(len(counts), dtype=values.dtype)
    starts = np.minimum(offsets[:-1], total - 1)
    sums = np.add.reduceat(values, starts)
    sums[counts == 0] = 0
    return sums


def evolve_sweep_numpy(pool, z, inv_d, counts, offsets, v, key):
    total = int(offsets[-1])
    x = splitmix64(_U(key), np.arange(total, dtype=np.uint64))
    idx = (x % _U(pool.shape[0])).astype(np.int64)
    sums = _segment_sums(pool[idx], offsets)
    return -1.0 / (z + sums * inv_d + v)


def tree_resolvent_numpy(parents, depths, phantom, potential, z, inv_d, g_boundary):
    n = parents.shape[0]
    acc = np.zeros(n, dtype=np.complex128)
    g_root = 0j
    for dep in range(int(depths.max()), -1, -1):
        sel = np.nonzero(depths == dep)[0]
        g = -1.0 / (z + (acc[sel] + phantom[sel] * g_boundary) * inv_d + potential[sel])
        if dep == 0:
            g_root = g[0]
        else:
            np.add.at(acc, parents[sel], g)
    return g_root


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _evolve_sweep_numba(pool, z, inv_d, counts, offsets, v, key):
        m = pool.shape[0]
        mm = _U(m)
        out = np.empty(m, np.complex128)
        for j in range(m):
            s = 0.0 + 0.0j
            base = offsets[j]
            for t in range(counts[j]):
                p = _U(base + t)
                x = key + (p + _U(1)) * _SM_GAMMA
                x = (x ^ (x >> _U(30))) * _SM_M1
                x = (x ^ (x >> _U(27))) * _SM_M2
                x = x ^ (x >> _U(31))
                s += pool[np.int64(x % mm)]
            out[j] = -1.0 / (z + s * inv_d + v[j])
        return out

    @njit(cache=True, nogil=True)
    def _tree_resolvent_numba(parents, phantom, potential, z, inv_d, g_boundary):
        n = parents.shape[0]
        acc = np.zeros(n, np.complex128)
        g = 0.0 + 0.0j
        for u in range(n - 1, -1, -1):
            g = -1.0 / (z + (acc[u] + phantom[u] * g_boundary) * inv_d + potential[u])
            if parents[u] >= 0:
                acc[parents[u]] += g
        return g

    def evolve_sweep(pool, z, inv_d, counts, offsets, v, key):
        return _evolve_sweep_numba(pool, z, inv_d, counts, offsets, v, _U(key))

    def tree_resolvent(parents, depths, phantom, potential, z, inv_d, g_boundary):
        return _tree_resolvent_numba(parents, phantom, potential, z, inv_d, g_boundary)

else:
    evolve_sweep = evolve_sweep_numpy
    tree_resolvent = tree_resolvent_numpy
