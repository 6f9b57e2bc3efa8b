"""Time stepping for the Kawahara equation with a distributed memory term.

    u_t + u_xxx - a0 u_xxxxx + u u_x + a1 u_x + (-1)^k int g(s) d^{2k} eta ds = f

Linear terms and the memory coupling are implicit (second-order backward
differences, with one trapezoidal step to start), the nonlinear term is
explicit through linear extrapolation.  The memory term at the new level is
m_new = m_star + gamma (u_old + u_new), where m_star comes from shifting the
stored history, so the implicit matrix stays constant and is factorized once.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import BlowupDetected, LinearSolveFailure, ParameterOutOfRange
from .history import (
    HistoryField,
    HistoryMode,
    advance_history,
    init_history,
    memory_norm_sq,
)
from .kernel import MemoryKernel, default_s_max
from .spatial import SpatialDiscretization, build_discretization, estimate_constants, norm_L2

BLOWUP_FACTOR = 1e6


@dataclass
class SimConfig:
    kernel: MemoryKernel
    u0: Callable
    a0: float = 1.0
    a1: float = 0.0
    k: int = 0
    L: float = 12.0
    N: int = 128
    scheme_order: int = 2
    dt: Optional[float] = None
    T_final: float = 50.0
    u0_history: Optional[Callable] = None
    nonlinear: bool = True
    memory_on: bool = True  # False zeroes the kernel weight in the equation
    s_nodes: int = 4096
    s_max: Optional[float] = None
    s_spacing: Optional[float] = None  # uniform core of the s-grid; dt when None
    history_mode: str = "grid"
    output_stride: int = 1
    source: Optional[Callable] = None  # f(x, t), e.g. manufactured forcing
    M_S: Optional[float] = None
    preset: str = ""
    settings: Optional[dict] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.a0 > 0:
            raise ParameterOutOfRange(f"a0 must be positive, got {self.a0}")
        if self.k not in (0, 1, 2):
            raise ParameterOutOfRange(f"k must be 0, 1 or 2, got {self.k}")
        if not self.T_final > 0:
            raise ParameterOutOfRange(f"T must be positive, got {self.T_final}")
        if self.dt is not None and not 0 < self.dt <= self.T_final:
            raise ParameterOutOfRange(f"need 0 < dt <= T, got dt={self.dt}")
        if self.s_spacing is not None and not self.s_spacing > 0:
            raise ParameterOutOfRange(f"s_spacing must be positive, got {self.s_spacing}")
        if int(self.output_stride) < 1:
            raise ParameterOutOfRange("output_stride must be at least 1")


def default_dt(L, N, u0_max):
    """Advective accuracy bound; the stiff linear part is implicit."""
    h = L / (N + 1)
    return min(h / (4.0 * u0_max + 1.0), 0.5 * h * h)


@dataclass
class SimState:
    t: float
    u: np.ndarray
    hist: HistoryField
    step_index: int = 0
    u_prev: Optional[np.ndarray] = field(default=None, repr=False)
    nl_prev: Optional[np.ndarray] = field(default=None, repr=False)


def nonlinear_term(disc, u):
    """Split form (u u_x + (u^2)_x)/3, which is energy-neutral at order 2."""
    if disc.order == 2:
        return _kernels.skew_advection(u, disc.h)
    return (u * (disc.D1 @ u) + disc.D1 @ (u * u)) / 3.0


def linear_operator(config, disc):
    """A with u_t = A u + ... : -D3 + a0 D5 - a1 D1."""
    return (-disc.D3 + config.a0 * disc.D5 - config.a1 * disc.D1).tocsc()


class Stepper:
    """Holds the factorized implicit matrices for one (config, grid, dt)."""

    def __init__(self, config, disc, hist, dt):
        self.config, self.disc, self.dt = config, disc, dt
        self.A = linear_operator(config, disc)
        self.k = config.k
        weight = 1.0 if config.memory_on else 0.0
        self.weight = weight
        N = disc.N
        if config.k == 0:
            K = sp.identity(N, format="csc")
        elif config.k == 1:
            K = (-disc.lap).tocsc()
        else:
            K = (disc.lap @ disc.lap).tocsc()
        self.K = weight * K
        _, gamma = hist.memory_split(dt)
        self.gamma = gamma
        eye = sp.identity(N, format="csc")
        M = (self.A - gamma * self.K).tocsc()
        try:
            self.lu_bdf = spla.splu((eye - (2.0 * dt / 3.0) * M).tocsc())
            self.lu_trap = spla.splu((eye - 0.5 * dt * M).tocsc())
        except RuntimeError as exc:  # singular factor
            raise LinearSolveFailure(str(exc)) from exc

    def source(self, t):
        f = self.config.source
        if f is None:
            return 0.0
        return np.asarray(f(self.disc.x, t), dtype=float)

    def nonlinear(self, u):
        if not self.config.nonlinear:
            return np.zeros_like(u)
        return nonlinear_term(self.disc, u)

    def _solve(self, lu, rhs):
        out = lu.solve(rhs)
        if not np.all(np.isfinite(out)):
            raise LinearSolveFailure("linear solve produced non-finite values")
        return out

    def step(self, state):
        dt, K = self.dt, self.K
        u, t = state.u, state.t
        m_star, gamma = state.hist.memory_split(dt)
        nl = self.nonlinear(u)
        if state.u_prev is None:
            # trapezoidal start; Heun predictor for the nonlinear term
            m_now = state.hist.memory_vector()
            f_mid = 0.5 * (self.source(t) + self.source(t + dt))
            base = u + 0.5 * dt * (self.A @ u) - 0.5 * dt * (K @ (m_now + m_star + gamma * u))
            base = base + dt * f_mid
            pred = self._solve(self.lu_trap, base - dt * nl)
            nl_half = 0.5 * (nl + self.nonlinear(pred)) if self.config.nonlinear else nl
            u_new = self._solve(self.lu_trap, base - dt * nl_half)
        else:
            nl_ex = 2.0 * nl - state.nl_prev
            rhs = (4.0 * u - state.u_prev) / 3.0 - (2.0 * dt / 3.0) * (
                K @ (m_star + gamma * u) + nl_ex - self.source(t + dt)
            )
            u_new = self._solve(self.lu_bdf, rhs)
        hist = advance_history(state.hist, u_new, dt, u_old=u)
        return SimState(t=t + dt, u=u_new, hist=hist, step_index=state.step_index + 1,
                        u_prev=u, nl_prev=nl)


def resolve_dt(config, disc):
    if config.dt is not None:
        return float(config.dt)
    u0 = np.asarray(config.u0(disc.x), dtype=float)
    return default_dt(config.L, config.N, float(np.max(np.abs(u0))) if u0.size else 0.0)


def initial_state(config, disc=None, dt=None):
    """SimState at t = 0 together with the grid it lives on."""
    if disc is None:
        disc = build_discretization(config.L, config.N, config.scheme_order)
    if dt is None:
        dt = resolve_dt(config, disc)
    u0 = np.asarray(config.u0(disc.x), dtype=float) * np.ones(disc.N)
    _check_compatible(config, u0)
    S_max = config.s_max if config.s_max is not None else default_s_max(config.kernel)
    hist = init_history(
        config.u0_history, disc, config.kernel, S_max=S_max, M_s=config.s_nodes,
        mode=config.history_mode,
        ds0=config.s_spacing if config.s_spacing is not None else dt, dt=dt,
    )
    return SimState(t=0.0, u=u0, hist=hist), disc


def _check_compatible(config, u0):
    ends = np.asarray(config.u0(np.array([0.0, config.L])), dtype=float) * np.ones(2)
    scale = max(float(np.max(np.abs(u0))) if u0.size else 0.0, 1.0)
    if np.any(np.abs(ends) > 1e-12 * scale):
        raise ParameterOutOfRange(
            f"initial data does not vanish at the boundary: u0(0)={ends[0]:.3g}, "
            f"u0(L)={ends[1]:.3g}"
        )


def step(state, config, disc, stepper=None, dt=None):
    """Advance one time step.  Pass a Stepper to reuse its factorizations."""
    if stepper is None:
        stepper = Stepper(config, disc, state.hist, dt if dt is not None else resolve_dt(config, disc))
    return stepper.step(state)


# ---------------------------------------------------------------------------
# smallness condition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionResult:
    holds: bool
    lhs: float
    rhs: float
    margin: float  # (rhs - lhs) / rhs
    U0_norm: float
    threshold_norm: float  # ||U0|| at which lhs = rhs (inf when independent of U0)


def state_norm(state, disc, k):
    """(||u||^2 + ||eta||_{L_g}^2)^(1/2)."""
    eta_sq = memory_norm_sq(state.hist, disc, k)
    if not np.isfinite(eta_sq):
        eta_sq = 0.0
    return float(math.sqrt(norm_L2(disc, state.u) ** 2 + eta_sq))


def smallness_terms(config, constants):
    """(fixed part, coefficient of ||U0||) of the left-hand side."""
    M_P, M_S = constants.M_P, constants.M_S
    fixed = config.a1 * M_P**2
    coef = (2.0 / 3.0) * M_P * (M_P + 1.0) * math.sqrt(config.L) * M_S
    return fixed, coef


def check_smallness_condition(config, constants=None, U0_norm=None, disc=None):
    """a1 M_P^2 + (2/3) M_P (M_P + 1) sqrt(L) M_S ||U0|| < 5 a0."""
    if constants is None or U0_norm is None:
        state, disc = initial_state(config, disc)
        if constants is None:
            constants = estimate_constants(disc, M_S=config.M_S)
        if U0_norm is None:
            U0_norm = state_norm(state, disc, config.k)
    fixed, coef = smallness_terms(config, constants)
    lhs = fixed + coef * U0_norm
    rhs = 5.0 * config.a0
    threshold = (rhs - fixed) / coef if coef > 0 else math.inf
    return ConditionResult(
        holds=bool(lhs < rhs), lhs=float(lhs), rhs=float(rhs),
        margin=float((rhs - lhs) / rhs), U0_norm=float(U0_norm),
        threshold_norm=float(threshold),
    )


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    series: object  # diagnostics.TimeSeries
    state: SimState
    disc: SpatialDiscretization
    condition: ConditionResult
    constants: object
    lyapunov: object  # diagnostics.LyapunovConstants or None
    dt: float
    error: Optional[str] = None

    @property
    def ok(self):
        return self.error is None


def run(config, disc=None, constants=None, progress=None):
    """Integrate to T_final, recording diagnostics every ``output_stride`` steps.

    A failing step ends the run; the partial series is returned with the
    error message in ``RunResult.error``.
    """
    from .diagnostics import TimeSeries, lyapunov_constants, make_record

    state, disc = initial_state(config, disc)
    dt = resolve_dt(config, disc)
    if constants is None:
        constants = estimate_constants(disc, M_S=config.M_S)
    U0 = state_norm(state, disc, config.k)
    cond = check_smallness_condition(config, constants, U0_norm=U0)
    if not cond.holds:
        warnings.warn(
            f"smallness condition fails: lhs={cond.lhs:.6g} >= rhs={cond.rhs:.6g}",
            RuntimeWarning, stacklevel=2,
        )
    lyap = None
    if cond.holds and state.hist.mode is HistoryMode.GRID:
        u0_moment = float(disc.h * np.sum(disc.x * state.u**2))
        lyap = lyapunov_constants(config, constants, 0.5 * U0**2, u0_moment)

    stepper = Stepper(config, disc, state.hist, dt)
    n_steps = int(round(config.T_final / dt))
    stride = int(config.output_stride)
    series = TimeSeries()
    series.append(make_record(state, disc, config, lyap))
    limit = BLOWUP_FACTOR * max(U0, np.finfo(float).tiny)
    error = None
    for n in range(n_steps):
        try:
            state = stepper.step(state)
            un = norm_L2(disc, state.u)
            if not np.isfinite(un) or (un > limit and un > 0):
                raise BlowupDetected(
                    f"||u||={un:.3g} exceeds {BLOWUP_FACTOR:g} ||U0|| at t={state.t:.6g}"
                )
        except (BlowupDetected, LinearSolveFailure) as exc:
            error = f"{type(exc).__name__}: {exc}"
            break
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            series.append(make_record(state, disc, config, lyap))
        if progress is not None:
            progress(n + 1, n_steps)
    return RunResult(series=series, state=state, disc=disc, condition=cond,
                     constants=constants, lyapunov=lyap, dt=dt, error=error)
