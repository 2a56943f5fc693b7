"""Hot loops with a numba implementation and a pure-numpy fallback.

Set ``GSLAB_DISABLE_NUMBA=1`` before import to force the numpy path (also used
automatically when numba is not installed).  Both paths sum each output index
in the same order over j, so results do not depend on how rows are split
across threads.
"""

import os

import numpy as np

_DISABLED = os.environ.get("GSLAB_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on")

# skip the TBB probe, which warns on older system TBB builds
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

try:
    if _DISABLED:
        raise ImportError("numba disabled by GSLAB_DISABLE_NUMBA")
    import numba
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

JIT_OPTIONS = {
    "nogil": True,
    "cache": True,
}

# rows per block in the numpy fallback; bounds the temporary to ROWS x N
_ROWS = 64


def twiddles(n):
    """exp(2 pi i k / n) for k = 0..n-1."""
    return np.exp(2j * np.pi * np.arange(n) / n)


def _quantize_numpy(p, c, tw):
    n = c.shape[0]
    out = np.empty(n, dtype=np.complex128)
    cols = np.arange(n)
    for start in range(0, n, _ROWS):
        rows = np.arange(start, min(start + _ROWS, n))
        phase = tw[np.outer(rows, cols) % n]
        out[rows] = np.einsum("ij,ij,j->i", p[rows], phase, c)
    return out


if HAVE_NUMBA:
    @njit(parallel=True, **JIT_OPTIONS)
    def _quantize_numba(p, c, tw):
        n = c.shape[0]
        out = np.empty(n, dtype=np.complex128)
        for i in prange(n):
            acc = 0j
            for j in range(n):
                acc += p[i, j] * tw[(i * j) % n] * c[j]
            out[i] = acc
        return out
else:
    _quantize_numba = None


def quantize_direct(p, c, tw, backend=None):
    """out_i = sum_j p[i, j] tw[(i j) mod N] c[j].

    ``p`` is the symbol matrix with columns in FFT order, ``c`` the
    pre-signed, pre-scaled spectrum and ``tw`` the table from ``twiddles``.
    ``backend`` is "numba", "numpy" or None for the default.
    """
    p = np.ascontiguousarray(p, dtype=np.complex128)
    c = np.ascontiguousarray(c, dtype=np.complex128)
    if backend is None:
        backend = "numba" if HAVE_NUMBA else "numpy"
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        return _quantize_numba(p, c, tw)
    if backend == "numpy":
        return _quantize_numpy(p, c, tw)
    raise ValueError(f"unknown backend {backend!r}")


def set_threads(n):
    if HAVE_NUMBA:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
