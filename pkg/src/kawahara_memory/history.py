"""History variable eta(x, s) and the memory term built from it.

The field lives on interior spatial nodes times an s-grid.  The s-grid is a
uniform core whose spacing equals the time step (so one step shifts the
field by exactly one node), followed by a geometric tail reaching the
truncation point S_max.  Weights fold g into a product trapezoid rule:
w_j = int g(s) phi_j(s) ds with phi_j the hat function of node j.

For exponential kernels the memory term obeys m' = g0 u - q1 m, which the
``expo-ode`` mode integrates exactly without storing eta at all.
"""

import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, ModeMismatch, ParameterOutOfRange, TailTooFat
from .kernel import TAIL_RATIO, Family, default_s_max, eval_dg, eval_f, eval_g

GEOMETRIC_RATIO = 1.15
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class HistoryMode(str, Enum):
    GRID = "grid"
    EXPONENTIAL_ODE = "expo-ode"

    @classmethod
    def parse(cls, name, kernel=None):
        key = str(name).strip().lower()
        if key == "auto":
            return cls.GRID
        for m in cls:
            if key == m.value or key == m.name.lower():
                return m
        raise ParameterOutOfRange(f"unknown history mode {name!r}")


# ---------------------------------------------------------------------------
# s-grid and weights
# ---------------------------------------------------------------------------

def _n_geometric(length, ds0, ratio):
    if length <= 0:
        return 0
    return int(np.ceil(np.log1p(length * (ratio - 1.0) / ds0) / np.log(ratio)))


def _core_fits(S_max, cover, ds0, ratio, budget):
    n_core = int(np.ceil(cover / ds0 - 1e-9))
    return n_core + _n_geometric(S_max - n_core * ds0, ds0, ratio) <= budget


def make_s_grid(S_max, M_s, ds0=None, ratio=GEOMETRIC_RATIO, scale=None):
    """Increasing nodes 0 = s_0 < ... < s_{M-1} = S_max with at most M_s nodes.

    A uniform core of spacing ``ds0`` is kept as long as the budget allows,
    then spacing grows by ``ratio`` per node.  Without ``ds0`` the spacing is
    the finest one whose uniform core still covers ``10 * scale`` (the kernel
    decay length; all of [0, S_max] when ``scale`` is None).
    """
    M_s = int(M_s)
    if M_s < 16:
        raise ParameterOutOfRange(f"need at least 16 s-nodes, got {M_s}")
    if not S_max > 0:
        raise ParameterOutOfRange(f"S_max must be positive, got {S_max}")
    budget = M_s - 1  # number of intervals
    if ds0 is None:
        cover = S_max if scale is None else min(S_max, 10.0 * scale)
        for cand in np.geomspace(cover / budget, cover, 400):
            if _core_fits(S_max, cover, cand, ratio, budget):
                ds0 = float(cand)
                break
        else:
            ds0 = cover
    if _n_geometric(S_max, ds0, ratio) > budget:
        # not even a geometric grid from ds0 fits: start coarser
        ds0 = S_max * (ratio - 1.0) / (ratio**budget - 1.0)
        n_core = 0
    elif S_max / ds0 <= budget:
        # everything fits on the uniform grid; overshooting S_max is harmless
        n = int(np.ceil(S_max / ds0 - 1e-9))
        return ds0 * np.arange(n + 1, dtype=float)
    else:
        lo, hi = 0, budget
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if mid + _n_geometric(S_max - mid * ds0, ds0, ratio) <= budget:
                lo = mid
            else:
                hi = mid - 1
        n_core = lo
    nodes = list(ds0 * np.arange(n_core + 1, dtype=float))
    step = ds0
    while nodes[-1] < S_max:
        nodes.append(nodes[-1] + step)
        step *= ratio
    s = np.array(nodes)
    s[-1] = S_max
    # a sliver last cell would spoil the weights; merge it into its neighbour
    if s.size > 2 and (s[-1] - s[-2]) < 0.5 * (s[-2] - s[-3]):
        s = np.delete(s, -2)
    return s


def hat_weights(s, fun):
    """w_j = int fun(s) phi_j(s) ds over [s_0, s_{M-1}], 8-point Gauss per cell."""
    a, b = s[:-1], s[1:]
    half = 0.5 * (b - a)
    pts = 0.5 * (a + b)[:, None] + half[:, None] * _GL_X[None, :]
    vals = np.asarray(fun(pts), dtype=float) * _GL_W[None, :] * half[:, None]
    t = (pts - a[:, None]) / (b - a)[:, None]
    w = np.zeros(s.size)
    w[:-1] += np.sum(vals * (1.0 - t), axis=1)
    w[1:] += np.sum(vals * t, axis=1)
    return w


# ---------------------------------------------------------------------------
# the field
# ---------------------------------------------------------------------------

@dataclass
class _Transport:
    dt: float
    lo: np.ndarray
    frac: np.ndarray
    src: np.ndarray
    w_shift: np.ndarray  # P^T w: memory of the shifted field without inflow
    gamma: float  # inflow weight: m_new = w_shift.eta + gamma (u_old + u_new)


@dataclass
class HistoryField:
    mode: HistoryMode
    s_nodes: np.ndarray
    w: np.ndarray
    wp: np.ndarray
    eta: Optional[np.ndarray]  # (N, M) in grid mode
    m: Optional[np.ndarray]  # (N,) in expo-ode mode
    kernel: object = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self):
        return self.s_nodes.size

    def memory_vector(self):
        """m(x) = int g(s) eta(x, s) ds."""
        if self.mode is HistoryMode.GRID:
            return self.eta @ self.w
        return self.m.copy()

    def transport(self, dt):
        """Shift-and-interpolate data for one step of length dt (cached)."""
        if self.mode is HistoryMode.EXPONENTIAL_ODE:
            q1, g0 = self.kernel.q1, self.kernel.g0
            decay = np.exp(-q1 * dt)
            return decay, 0.5 * g0 / q1 * (1.0 - decay)
        tr = self._cache.get(dt)
        if tr is None:
            tr = _build_transport(self.s_nodes, self.w, dt)
            self._cache.clear()
            self._cache[dt] = tr
        return tr

    def memory_split(self, dt):
        """(m_star, gamma) with m_new = m_star + gamma (u_old + u_new)."""
        tr = self.transport(dt)
        if self.mode is HistoryMode.EXPONENTIAL_ODE:
            decay, gamma = tr
            return decay * self.m, gamma
        return self.eta @ tr.w_shift, tr.gamma


def _shift_operator(s, dt):
    foot = s - dt
    lo = np.searchsorted(s, foot, side="right") - 1
    lo = np.clip(lo, 0, s.size - 2)
    width = s[lo + 1] - s[lo]
    frac = np.clip((foot - s[lo]) / width, 0.0, 1.0)
    inside = foot > 0
    lo = np.where(inside, lo, 0).astype(np.int64)
    frac = np.where(inside, frac, 0.0)
    return lo, frac


def _column_sums(w, lo, frac):
    # (P^T w)_i: how much weight the shifted field puts back on node i
    out = np.zeros_like(w)
    np.add.at(out, lo, w * (1.0 - frac))
    np.add.at(out, np.minimum(lo + 1, w.size - 1), w * frac)
    out[0] = 0.0  # node 0 is always zero, so its weight never matters
    return out


def stabilize_weights(s, w, dt):
    """Lower weights where the shift would move more weight onto a node than it has.

    With sum_j w_j P_ji <= w_i the weighted norm cannot grow under the
    shift.  Only nodes downstream of i feed column i, so a forward sweep that
    scales down the offending downstream weights enforces the condition; on
    a decreasing kernel the correction dies out within a few nodes.
    """
    lo, frac = _shift_operator(s, dt)
    w = w.copy()
    n = s.size
    feeders = [[] for _ in range(n)]
    self_coef = np.zeros(n)
    for j in range(1, n):
        for i, c in ((lo[j], 1.0 - frac[j]), (min(lo[j] + 1, n - 1), frac[j])):
            if c == 0.0:
                continue
            if i == j:
                self_coef[i] += c
            else:
                feeders[i].append((j, c))
    for i in range(1, n):
        rest = sum(w[j] * c for j, c in feeders[i])
        room = (1.0 - self_coef[i]) * w[i]
        if rest > room and rest > 0.0:
            scale = room / rest
            for j, _ in feeders[i]:
                w[j] *= scale
    return w


def _build_transport(s, w, dt):
    lo, frac = _shift_operator(s, dt)
    src = np.minimum(s, dt)
    w_shift = _column_sums(w, lo, frac)
    excess = w_shift[1:] - w[1:]
    if np.any(excess > 1e-13 * np.max(w)):
        j = int(np.argmax(excess)) + 1
        warnings.warn(
            f"history transport with dt={dt:g} is not energy-stable at s={s[j]:.4g}: "
            f"shifted weight exceeds node weight by {excess[j - 1]:.3g}",
            RuntimeWarning, stacklevel=3,
        )
    return _Transport(dt=dt, lo=lo, frac=frac, src=src,
                      w_shift=w_shift, gamma=0.5 * float(w @ src))


def _vector_tail_integral(fun, N, upper):
    """int_0^upper fun(tau) dtau for vector-valued fun, geometric panels."""
    edges = [0.0]
    e = min(1.0, upper)
    while True:
        edges.append(e)
        if e >= upper:
            break
        e = min(2.0 * e, upper)
    edges = np.array(edges)
    sub = np.concatenate([np.linspace(a, b, 17)[:-1] for a, b in zip(edges[:-1], edges[1:])] + [[upper]])
    total = np.zeros(N)
    for a, b in zip(sub[:-1], sub[1:]):
        half = 0.5 * (b - a)
        tau = 0.5 * (a + b) + half * _GL_X
        total += half * (fun(tau) @ _GL_W)
    return total


def _check_tail(kernel, S_max):
    g_0 = float(eval_g(kernel, 0.0))
    g_S = float(eval_g(kernel, S_max))
    if g_S > TAIL_RATIO * g_0 * (1.0 + 1e-9):
        raise TailTooFat(
            f"g(S_max)={g_S:.3g} exceeds {TAIL_RATIO:g} g(0); raise S_max "
            f"to at least {default_s_max(kernel):.6g}"
        )


def init_history(u0_history, disc, kernel, S_max=None, M_s=4096, mode="grid",
                 ds0=None, dt=None):
    """History field for the prescribed past u0_history(x, tau), tau >= 0.

    eta(x, s) = int_0^s u0_history(x, tau) dtau.  ``u0_history`` may be None
    for a zero past.  It is called with x of shape (N, 1) and tau of shape
    (1, n) and must broadcast.  ``ds0`` is the spacing of the uniform core;
    when the time step ``dt`` is known the weights are adjusted so the shift
    by dt cannot increase the weighted norm.
    """
    mode = HistoryMode.parse(mode)
    if mode is HistoryMode.EXPONENTIAL_ODE and kernel.family is not Family.EXPONENTIAL:
        raise ModeMismatch("expo-ode mode needs an exponential kernel")
    if S_max is None:
        S_max = default_s_max(kernel)
    _check_tail(kernel, S_max)
    s = make_s_grid(S_max, M_s, ds0=ds0, scale=1.0 / kernel.xi0)
    w = hat_weights(s, lambda t: eval_g(kernel, t))
    if dt is not None:
        w = stabilize_weights(s, w, dt)
    if kernel.family is Family.EXPONENTIAL:
        wp = -kernel.q1 * w  # g' = -q1 g, kept exact after stabilization
    else:
        wp = hat_weights(s, lambda t: eval_dg(kernel, t))
    N = disc.N
    x = disc.x[:, None]

    if mode is HistoryMode.EXPONENTIAL_ODE:
        if u0_history is None:
            m = np.zeros(N)
        else:
            # int g eta ds = int f(tau) u0_history(tau) dtau after integrating by parts
            m = _vector_tail_integral(
                lambda tau: np.broadcast_to(
                    u0_history(x, tau[None, :]) * eval_f(kernel, tau)[None, :],
                    (N, tau.size)),
                N, S_max)
        return HistoryField(mode=mode, s_nodes=s, w=w, wp=wp, eta=None, m=m, kernel=kernel)

    eta = np.zeros((N, s.size))
    if u0_history is not None:
        a, b = s[:-1], s[1:]
        half = 0.5 * (b - a)
        tau = (0.5 * (a + b)[:, None] + half[:, None] * _GL_X[None, :]).ravel()
        vals = np.broadcast_to(u0_history(x, tau[None, :]), (N, tau.size))
        cell = (vals.reshape(N, a.size, _GL_X.size) * _GL_W) @ np.ones(_GL_X.size)
        eta[:, 1:] = np.cumsum(cell * half[None, :], axis=1)
    return HistoryField(mode=mode, s_nodes=s, w=w, wp=wp, eta=eta, m=None, kernel=kernel)


def zero_history_like(hist):
    if hist.mode is HistoryMode.GRID:
        return replace(hist, eta=np.zeros_like(hist.eta), _cache={})
    return replace(hist, m=np.zeros_like(hist.m), _cache={})


def advance_history(hist, u_new, dt, u_old=None):
    """One step of eta_t + eta_s = u with inflow eta(., 0) = 0.

    The source over the step is the average of ``u_old`` and ``u_new`` when
    ``u_old`` is given, else ``u_new``.  Returns a new field.
    """
    if not dt > 0:
        raise ParameterOutOfRange(f"dt must be positive, got {dt}")
    u_new = np.asarray(u_new, dtype=float)
    ubar = u_new if u_old is None else 0.5 * (np.asarray(u_old, dtype=float) + u_new)
    if hist.mode is HistoryMode.EXPONENTIAL_ODE:
        if hist.kernel.family is not Family.EXPONENTIAL:
            raise ModeMismatch("expo-ode mode needs an exponential kernel")
        if ubar.shape != hist.m.shape:
            raise DimensionMismatch("u does not match the history grid")
        decay, gamma = hist.transport(dt)
        return replace(hist, m=decay * hist.m + 2.0 * gamma * ubar)
    if ubar.shape[0] != hist.eta.shape[0]:
        raise DimensionMismatch("u does not match the history grid")
    tr = hist.transport(dt)
    eta = _kernels.advance_history_kernel(hist.eta, tr.lo, tr.frac, tr.src, ubar)
    return replace(hist, eta=eta)


def _k_operator(disc, k):
    if k == 0:
        return None
    if k == 1:
        return -disc.lap
    if k == 2:
        return disc.lap @ disc.lap
    raise ParameterOutOfRange(f"k must be 0, 1 or 2, got {k}")


def apply_memory_operator(disc, k, m):
    """(-1)^k d^{2k} m with Dirichlet second differences."""
    K = _k_operator(disc, k)
    return m.copy() if K is None else K @ m


def memory_integral(hist, disc, k):
    """(-1)^k int g(s) d^{2k} eta(., s) ds as a spatial vector."""
    m = hist.memory_vector()
    if m.shape[0] != disc.N:
        raise DimensionMismatch("history and grid sizes differ")
    return apply_memory_operator(disc, k, m)


def memory_norm_sq(hist, disc, k):
    if hist.mode is not HistoryMode.GRID:
        return np.nan
    return _kernels.weighted_sq_norm(hist.eta, hist.w, int(k), disc.h)


def memory_norm(hist, disc, k):
    """(int g ||d^k eta||^2 ds)^(1/2); NaN in expo-ode mode, which keeps no eta."""
    return float(np.sqrt(max(memory_norm_sq(hist, disc, k), 0.0)))


def memory_dissipation(hist, disc, k, kernel=None):
    """(1/2) int g'(s) ||d^k eta||^2 ds, which is <= 0."""
    if hist.mode is not HistoryMode.GRID:
        return np.nan
    return 0.5 * _kernels.weighted_sq_norm(hist.eta, hist.wp, int(k), disc.h)
