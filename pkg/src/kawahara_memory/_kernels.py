"""Hot inner loops, each with a numba and a pure-numpy implementation.

The backend is picked once at import time.  Set ``KAWAHARA_JIT=0`` to force
the numpy path (useful for debugging and for the benchmark); numba is used
otherwise whenever it can be imported.  Both paths must agree to roundoff;
``tests/test_kernels.py`` checks that.
"""

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_wants_jit():
    flag = os.environ.get("KAWAHARA_JIT", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


USE_JIT = HAVE_NUMBA and _env_wants_jit()


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------


def _advance_history_np(eta, lo, frac, src, ubar):
    # eta[i, j] <- (1 - frac_j) eta[i, lo_j] + frac_j eta[i, lo_j + 1] + src_j ubar_i
    hi = np.minimum(lo + 1, eta.shape[1] - 1)
    out = eta[:, lo] * (1.0 - frac) + eta[:, hi] * frac
    out += np.outer(ubar, src)
    out[:, 0] = 0.0
    return out


def _weighted_sq_norm_np(eta, w, k, h):
    if k == 0:
        col = h * np.einsum("ij,ij->j", eta, eta)
    elif k == 1:
        n, m = eta.shape
        padded = np.zeros((n + 2, m))
        padded[1:-1] = eta
        d = np.diff(padded, axis=0)
        col = np.einsum("ij,ij->j", d, d) / h
    else:
        n, m = eta.shape
        padded = np.zeros((n + 2, m))
        padded[1:-1] = eta
        d2 = padded[2:] - 2.0 * padded[1:-1] + padded[:-2]
        col = np.einsum("ij,ij->j", d2, d2) / h**3
    return float(col @ w)


def _skew_advection_np(u, h):
    # (1/3) u D1 u + (1/3) D1 (u u), centred differences with zero boundary values
    p = np.zeros(u.size + 2)
    p[1:-1] = u
    du = (p[2:] - p[:-2]) / (2.0 * h)
    q = p * p
    dq = (q[2:] - q[:-2]) / (2.0 * h)
    return (u * du + dq) / 3.0


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True, fastmath=False)
    def _advance_history_nb(eta, lo, frac, src, ubar):
        n, m = eta.shape
        out = np.empty_like(eta)
        for i in range(n):
            out[i, 0] = 0.0
            ui = ubar[i]
            for j in range(1, m):
                a = lo[j]
                b = a + 1
                if b > m - 1:
                    b = m - 1
                f = frac[j]
                out[i, j] = eta[i, a] * (1.0 - f) + eta[i, b] * f + src[j] * ui
        return out

    @numba.njit(cache=True, fastmath=False)
    def _weighted_sq_norm_nb(eta, w, k, h):
        # row-major sweep: accumulate per-column sums of squared differences
        n, m = eta.shape
        col = np.zeros(m)
        if k == 0:
            for i in range(n):
                for j in range(m):
                    col[j] += eta[i, j] * eta[i, j]
            scale = h
        elif k == 1:
            for i in range(n + 1):
                for j in range(m):
                    right = eta[i, j] if i < n else 0.0
                    left = eta[i - 1, j] if i > 0 else 0.0
                    d = right - left
                    col[j] += d * d
            scale = 1.0 / h
        else:
            for i in range(n):
                for j in range(m):
                    left = eta[i - 1, j] if i > 0 else 0.0
                    right = eta[i + 1, j] if i < n - 1 else 0.0
                    d2 = right - 2.0 * eta[i, j] + left
                    col[j] += d2 * d2
            scale = 1.0 / (h * h * h)
        total = 0.0
        for j in range(m):
            total += w[j] * col[j]
        return total * scale

    @numba.njit(cache=True, fastmath=False)
    def _skew_advection_nb(u, h):
        n = u.size
        out = np.empty(n)
        for i in range(n):
            left = u[i - 1] if i > 0 else 0.0
            right = u[i + 1] if i < n - 1 else 0.0
            du = (right - left) / (2.0 * h)
            dq = (right * right - left * left) / (2.0 * h)
            out[i] = (u[i] * du + dq) / 3.0
        return out


def advance_history_kernel(eta, lo, frac, src, ubar, jit=None):
    """Semi-Lagrangian shift of every history column plus the new inflow."""
    if jit is None:
        jit = USE_JIT
    if jit and HAVE_NUMBA:
        return _advance_history_nb(
            np.ascontiguousarray(eta), lo.astype(np.int64), frac, src, ubar
        )
    return _advance_history_np(eta, lo, frac, src, ubar)


def weighted_sq_norm(eta, w, k, h, jit=None):
    """sum_j w_j ||d^k eta(., s_j)||^2 with the discrete norms of the history space."""
    if jit is None:
        jit = USE_JIT
    if jit and HAVE_NUMBA:
        return float(_weighted_sq_norm_nb(np.ascontiguousarray(eta), w, int(k), h))
    return _weighted_sq_norm_np(eta, w, k, h)


def skew_advection(u, h, jit=None):
    """Energy-neutral split form of u u_x."""
    if jit is None:
        jit = USE_JIT
    if jit and HAVE_NUMBA:
        return _skew_advection_nb(np.ascontiguousarray(u, dtype=np.float64), h)
    return _skew_advection_np(u, h)
