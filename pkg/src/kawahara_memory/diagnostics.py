"""Energy bookkeeping, the Lyapunov functional and decay-envelope fits."""

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad

from .errors import DomainError, NonpositiveD, ParameterOutOfRange, SeriesTooShort
from .history import HistoryMode, memory_dissipation, memory_norm_sq
from .kernel import Family, default_s_max, eval_f, eval_g, eval_xi, xi_integral
from .solver import nonlinear_term
from .spatial import norm_L2, x_moment

CSV_COLUMNS = ("t", "E", "F", "u_norm", "eta_norm_Lg", "boundary_diss",
               "memory_diss", "nonlinear_leak", "uxx0")
CSV_HEADER = ", ".join(CSV_COLUMNS)
ENVELOPE_SLACK = 0.05


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    E: float
    F: float
    u_norm: float
    eta_norm_Lg: float
    boundary_diss: float
    memory_diss: float
    nonlinear_leak: float
    uxx0: float
    x_moment: float = field(default=0.0, compare=False)


class TimeSeries:
    """Ordered EnergyRecords with column access."""

    def __init__(self, records=None):
        self.records = list(records or [])

    def append(self, rec):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def __getattr__(self, name):
        if name in CSV_COLUMNS or name == "x_moment":
            return self.column(name)
        raise AttributeError(name)

    def to_csv(self, path=None):
        lines = [CSV_HEADER]
        for r in self.records:
            lines.append(", ".join(repr(float(getattr(r, c))) for c in CSV_COLUMNS))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text):
        if "\n" in str(path_or_text):
            text = str(path_or_text)
        else:
            with open(path_or_text, encoding="utf-8") as fh:
                text = fh.read()
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = [h.strip() for h in lines[0].split(",")]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ParameterOutOfRange(f"series file lacks columns {missing}")
        idx = [header.index(c) for c in CSV_COLUMNS]
        recs = []
        for ln in lines[1:]:
            vals = [float(v) for v in ln.split(",")]
            recs.append(EnergyRecord(*[vals[i] for i in idx]))
        return cls(recs)


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

def energy(state, disc, kernel=None, k=0):
    """(||u||^2 + ||eta||_{L_g}^2) / 2."""
    return 0.5 * (norm_L2(disc, state.u) ** 2 + memory_norm_sq(state.hist, disc, k))


def nonlinear_leak(disc, u):
    """-(u, N(u)): zero in the continuum, roundoff for the split form at order 2."""
    return float(-disc.h * (u @ nonlinear_term(disc, u)))


def make_record(state, disc, config, lyap=None):
    u = state.u
    un = norm_L2(disc, u)
    eta_sq = memory_norm_sq(state.hist, disc, config.k) if config.memory_on else 0.0
    if state.hist.mode is not HistoryMode.GRID:
        eta_sq = np.nan
    md = memory_dissipation(state.hist, disc, config.k) if config.memory_on else 0.0
    E = 0.5 * (un * un + eta_sq)
    uxx0 = disc.uxx0(u)
    leak = nonlinear_leak(disc, u) if config.nonlinear else 0.0
    xm = x_moment(disc, u)
    F = lyapunov_value(E, xm, state.t, config.kernel, lyap) if lyap is not None else np.nan
    return EnergyRecord(
        t=float(state.t), E=float(E), F=float(F), u_norm=float(un),
        eta_norm_Lg=float(math.sqrt(eta_sq)) if np.isfinite(eta_sq) else np.nan,
        boundary_diss=float(-0.5 * config.a0 * uxx0 * uxx0),
        memory_diss=float(md), nonlinear_leak=float(leak), uxx0=float(uxx0),
        x_moment=float(xm),
    )


@dataclass
class ResidualReport:
    residuals: np.ndarray
    max_abs: float
    l1: float
    max_leak: float


def identity_residual(series, config=None):
    """(E_{n+1} - E_n)/dt - mean of [boundary + memory + leak] over the step."""
    if len(series) < 3:
        raise SeriesTooShort(f"need at least 3 records, got {len(series)}")
    t = series.column("t")
    E = series.column("E")
    rhs = series.column("boundary_diss") + series.column("memory_diss") + series.column("nonlinear_leak")
    dt = np.diff(t)
    res = np.diff(E) / dt - 0.5 * (rhs[1:] + rhs[:-1])
    return ResidualReport(
        residuals=res, max_abs=float(np.max(np.abs(res))),
        l1=float(np.sum(np.abs(res) * dt)),
        max_leak=float(np.max(np.abs(series.column("nonlinear_leak")))),
    )


# ---------------------------------------------------------------------------
# Lyapunov functional
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LyapunovConstants:
    D0: float
    eps: float
    D: float
    C_eps: float
    C1: float
    C2: float
    mu: float
    xi0: float
    lambda0: float
    upper: float  # mu + 2 L C1 xi(0)
    C3: float
    c1: float
    F0: float
    E0: float

    @property
    def c_exponential(self):
        """Rate of the exponential envelope, lambda0 * xi."""
        return self.lambda0 * self.xi0

    @property
    def c_tilde_exponential(self):
        return self.F0 / self.mu

    @property
    def c_tilde_general(self):
        return max(self.F0, 0.5 * self.c1 * self.mu) / self.mu


def _c_eps(k, eps, L, M_P, g0):
    if k == 0:
        return L**2 * M_P**2 * g0 / (4.0 * eps)
    if k == 1:
        return g0 * M_P * (M_P + L**2) / (2.0 * eps)
    return 2.0 * g0 * (M_P + L**2) / eps


def lyapunov_constants(config, constants, E0, u0_moment):
    """Chain of constants behind F = mu E + C1 xi(t) int x u^2.

    eps is fixed at D0/8, where D0 is the slack in the smallness condition
    with ||U0|| = sqrt(2 E(0)).
    """
    M_P, M_S, L = constants.M_P, constants.M_S, config.L
    a0, a1, k = config.a0, config.a1, config.k
    kernel = config.kernel
    D0 = 5.0 * a0 - (2.0 / 3.0) * M_S * math.sqrt(L) * M_P * (M_P + 1.0) * math.sqrt(2.0 * E0) - a1 * M_P**2
    if not D0 > 0:
        raise NonpositiveD(f"D0 = {D0:.6g} <= 0: the smallness condition fails")
    eps = D0 / 8.0
    D = D0 - 2.0 * eps
    g0 = kernel.g0 if config.memory_on else 0.0
    C_eps = _c_eps(k, eps, L, M_P, g0)
    C1 = 1.0 / D
    C2 = 2.0 * C_eps / D
    mu = 2.0 * (C2 + 1.0 / M_P**2)
    xi0 = float(eval_xi(kernel, 0.0))
    upper = mu + 2.0 * L * C1 * xi0
    lambda0 = 2.0 / (M_P**2 * upper)
    C3 = max(C1 * u0_moment, 2.0 * C2 * E0)
    c1 = 2.0 * max(1.0, M_P ** (2 - k) * C3)
    F0 = mu * E0 + C1 * xi0 * u0_moment
    return LyapunovConstants(D0=D0, eps=eps, D=D, C_eps=C_eps, C1=C1, C2=C2, mu=mu,
                             xi0=xi0, lambda0=lambda0, upper=upper, C3=C3, c1=c1,
                             F0=F0, E0=E0)


def lyapunov_value(E, moment, t, kernel, lyap):
    """F = mu E + C1 xi(t) int x u^2."""
    return lyap.mu * E + lyap.C1 * float(eval_xi(kernel, t)) * moment


def lyapunov(record, config, constants, lyap):
    """F for a stored record."""
    return lyapunov_value(record.E, record.x_moment, record.t, config.kernel, lyap)


def check_equivalence(series, lyap, rtol=1e-9):
    """Indices where mu E <= F <= (mu + 2 L C1 xi(0)) E fails beyond rtol."""
    E, F = series.column("E"), series.column("F")
    lo = lyap.mu * E
    hi = lyap.upper * E
    tol = rtol * np.maximum(np.abs(hi), np.finfo(float).tiny)
    bad = (F < lo - tol) | (F > hi + tol)
    return np.flatnonzero(bad)


def contraction_violations(series, lyap, rtol=1e-6):
    """Steps where F_{n+1} > F_n exp(-lambda0 xi dt) (1 + rtol), constant xi only."""
    t, F = series.column("t"), series.column("F")
    factor = np.exp(-lyap.c_exponential * np.diff(t))
    return np.flatnonzero(F[1:] > F[:-1] * factor * (1.0 + rtol))


# ---------------------------------------------------------------------------
# the h(t, s) correction and the generalized envelope
# ---------------------------------------------------------------------------

_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)


def _past_integral(u0_history, disc, a, b):
    """int_a^b u0_history(., tau) dtau with 8-point Gauss on [a, b]."""
    half = 0.5 * (b - a)
    tau = 0.5 * (a + b) + half * _GL8_X
    vals = np.broadcast_to(u0_history(disc.x[:, None], tau[None, :]), (disc.N, tau.size))
    return half * (vals @ _GL8_W)


def _dk_norm(disc, v, k):
    """||d^k v|| with the same discrete derivatives as the history-space norm."""
    if k == 0:
        return norm_L2(disc, v)
    if k == 1:
        p = np.concatenate([[0.0], v, [0.0]])
        return float(math.sqrt(np.sum(np.diff(p) ** 2) / disc.h))
    return norm_L2(disc, disc.lap @ v)


def past_norm(u0_history, disc, k, r, panels=16):
    """||int_0^{-r} d^k u0(., tau) dtau|| for r >= 0.

    The prescribed past is stored as u0_history(x, tau) = u0(x, -tau), so the
    integral over [0, -r] equals minus the integral of u0_history over [0, r];
    the norm does not see the sign.
    """
    if r == 0.0 or u0_history is None:
        return 0.0
    edges = np.linspace(0.0, r, panels + 1)
    total = sum(_past_integral(u0_history, disc, a, b) for a, b in zip(edges[:-1], edges[1:]))
    return _dk_norm(disc, -total, k)


def h_correction(t, s, u0_history, disc, k, squared=False):
    """t^2 + t + ||int_0^{t-s} d^k u0(., tau) dtau|| for 0 <= t <= s.

    ``squared=True`` uses the squared norm instead.
    """
    if t < 0 or t > s:
        raise DomainError(f"need 0 <= t <= s, got t={t}, s={s}")
    nrm = past_norm(u0_history, disc, k, s - t)
    return t * t + t + (nrm * nrm if squared else nrm)


def _past_norm_table(u0_history, disc, k, r_grid):
    """past_norm on an increasing grid of r, by accumulating panel integrals."""
    out = np.zeros(r_grid.size)
    if u0_history is None:
        return out
    acc = np.zeros(disc.N)
    for j in range(1, r_grid.size):
        a, b = r_grid[j - 1], r_grid[j]
        for lo, hi in zip(np.linspace(a, b, 5)[:-1], np.linspace(a, b, 5)[1:]):
            acc = acc + _past_integral(u0_history, disc, lo, hi)
        out[j] = _dk_norm(disc, -acc, k)
    return out


def generalized_bound(series, config, lyap, disc, squared=True, n_r=400):
    """Right-hand side of the generalized envelope at each record time.

    E(t) <= c~ e^{-c X(t)} (1 + int_0^t e^{c X(sig)} xi(sig) int_sig^inf g h ds dsig)
    with X = int_0^t xi and c = lambda0.  With s = sig + r the inner integral
    splits into (sig^2 + sig) f(sig) + int_0^inf g(sig + r) H(r) dr.
    """
    kernel = config.kernel
    t = series.column("t")
    X = cumulative_trapezoid(eval_xi(kernel, t), t, initial=0.0)
    c = lyap.lambda0
    S = default_s_max(kernel)
    r = np.concatenate([[0.0], np.geomspace(1e-4, S, n_r)])
    H = _past_norm_table(config.u0_history, disc, config.k, r)
    if squared:
        H = H * H
    inner = np.array([
        (sig * sig + sig) * float(eval_f(kernel, sig))
        + np.trapezoid(eval_g(kernel, sig + r) * H, r)
        for sig in t
    ])
    integrand = np.exp(c * X) * eval_xi(kernel, t) * inner
    outer = cumulative_trapezoid(integrand, t, initial=0.0)
    return lyap.c_tilde_general * np.exp(-c * X) * (1.0 + outer)


# ---------------------------------------------------------------------------
# decay fits
# ---------------------------------------------------------------------------

@dataclass
class DecayFit:
    model: str  # "exponential" or "xi"
    rate: float
    c_tilde: float
    r_squared: float
    window: tuple
    envelope_violations: int
    n_points: int
    all_zero: bool = False

    def summary_lines(self):
        return [
            f"model = {self.model}",
            f"c = {self.rate!r}",
            f"c_tilde = {self.c_tilde!r}",
            f"r_squared = {self.r_squared!r}",
            f"window = {self.window[0]!r}, {self.window[1]!r}",
            f"envelope_violations = {self.envelope_violations}",
        ]


def _abscissa(model, t, kernel, xi_fn=None):
    if model == "exponential":
        return t.copy()
    if xi_fn is None:
        if kernel is None:
            raise ParameterOutOfRange("the xi model needs a kernel or xi function")
        if kernel.family is not Family.TABULATED:
            return xi_integral(kernel, t)  # closed form
        xi_fn = functools.partial(eval_xi, kernel)
    X = cumulative_trapezoid(np.asarray(xi_fn(t), dtype=float), t, initial=0.0)
    if t[0] > 0:
        # the integral starts at 0, not at the first sample
        X = X + quad(lambda z: float(np.asarray(xi_fn(z))), 0.0, t[0])[0]
    return X


def fit_decay(series_or_t, E=None, model="exponential", window=None, kernel=None, xi=None):
    """Least-squares fit of log E against t or against int_0^t xi.

    Accepts a TimeSeries or explicit (t, E) arrays.  The default window is
    [T/4, T].  Envelope violations count samples in the window where E
    exceeds c~ e^{-c X} by more than 5%.
    """
    if E is None:
        t = series_or_t.column("t")
        E = series_or_t.column("E")
    else:
        t = np.asarray(series_or_t, dtype=float)
        E = np.asarray(E, dtype=float)
    model = {"exp": "exponential", "exponential": "exponential",
             "xi": "xi", "generalized": "xi"}.get(str(model).lower())
    if model is None:
        raise ParameterOutOfRange("model must be 'exp' or 'xi'")
    T = float(t[-1])
    if window is None:
        window = (T / 4.0, T)
    if np.all(E <= 0):
        return DecayFit(model, math.inf, 0.0, 0.0, tuple(window), 0, 0, all_zero=True)
    # positive prefix only
    pos = E > 0
    if not np.all(pos):
        cut = int(np.argmin(pos))
        t, E = t[:cut], E[:cut]
    X_all = _abscissa(model, t, kernel, xi)
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if np.count_nonzero(sel) < 3:
        raise SeriesTooShort("fewer than 3 positive samples in the fit window")
    X, y = X_all[sel], np.log(E[sel])
    A = np.vstack([np.ones_like(X), X]).T
    (b, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = b + slope * X
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    r2 = min(max(r2, 0.0), 1.0)
    rate, c_tilde = -float(slope), float(math.exp(b))
    envelope = c_tilde * np.exp(-rate * X)
    viol = int(np.count_nonzero(E[sel] > (1.0 + ENVELOPE_SLACK) * envelope))
    return DecayFit(model, rate, c_tilde, r2, (float(window[0]), float(window[1])),
                    viol, int(np.count_nonzero(sel)))


def monotone_violations(series, slack=None):
    """Steps with E_{n+1} > E_n + 1e-10 (1 + E_0)."""
    E = series.column("E")
    if slack is None:
        slack = 1e-10 * (1.0 + E[0])
    return np.flatnonzero(np.diff(E) > slack)
