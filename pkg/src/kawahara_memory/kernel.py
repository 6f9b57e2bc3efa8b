"""Memory kernels f, g = -f' and the rate function xi.

Three closed-form families are built in:

    exponential   g(s) = d1 exp(-q1 s)               xi(s) = q1
    polynomial    g(s) = d1 (1 + s)^(-q1)            xi(s) = q1 / (1 + s)
    stretched     g(s) = d1 exp(-q1 (1 + s)^p1)      xi(s) = q1 p1 (1 + s)^(p1 - 1)

plus ``tabulated`` kernels given either as a table of f (or g) values, which
is interpolated with a monotone cubic, or as a callable g.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma, gammaincc

from .errors import ParameterOutOfRange

TAIL_RATIO = 1e-12


class Family(str, Enum):
    EXPONENTIAL = "exponential"
    POLYNOMIAL = "polynomial"
    STRETCHED = "stretched"
    TABULATED = "tabulated"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "exponential": cls.EXPONENTIAL, "exp": cls.EXPONENTIAL, "expo": cls.EXPONENTIAL,
            "polynomial": cls.POLYNOMIAL, "poly": cls.POLYNOMIAL,
            "stretched": cls.STRETCHED, "stretchedexponential": cls.STRETCHED,
            "tabulated": cls.TABULATED, "table": cls.TABULATED,
        }
        if key not in aliases:
            raise ParameterOutOfRange(f"unknown kernel family {name!r}")
        return aliases[key]


@dataclass(frozen=True)
class MemoryKernel:
    family: Family
    d1: float
    q1: float
    p1: Optional[float]
    g0: float
    c0: float
    xi0: float
    # tabulated kernels carry their own evaluators; None for closed forms
    _g: Optional[Callable] = field(default=None, repr=False, compare=False)
    _dg: Optional[Callable] = field(default=None, repr=False, compare=False)
    _f: Optional[Callable] = field(default=None, repr=False, compare=False)
    _xi: Optional[Callable] = field(default=None, repr=False, compare=False)
    s_end: float = np.inf  # end of the tabulated support

    @property
    def xi_constant(self):
        return self.family is Family.EXPONENTIAL


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _gauss(fun, a, b, sub=8):
    edges = np.linspace(a, b, sub + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        total += half * float(_GL_W @ fun(mid + half * _GL_X))
    return total


def integrate_tail(fun, rtol=1e-14, max_panels=60, upper=np.inf):
    """int_0^inf fun over geometric panels [0,1], [1,2], [2,4], ...

    Stops once a panel adds less than ``rtol`` times the running total.
    Returns ``inf`` when the partial sums are still growing after
    ``max_panels`` panels, which is how a nonintegrable tail shows up.
    """
    total = _gauss(fun, 0.0, min(1.0, upper))
    a = 1.0
    for _ in range(max_panels):
        if a >= upper:
            return total
        b = min(2.0 * a, upper)
        piece = _gauss(fun, a, b)
        total += piece
        if abs(piece) < rtol * abs(total):
            return total
        a = b
    return np.inf


def g0_quadrature(kernel):
    """int_0^inf g by geometric-panel Gauss quadrature."""
    return integrate_tail(lambda s: eval_g(kernel, s), upper=kernel.s_end)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _need(params, key):
    if key not in params or params[key] is None:
        raise ParameterOutOfRange(f"kernel parameter {key!r} is required")
    return float(params[key])


def make_kernel(family, params=None, **kw):
    """Build a kernel from a family name and its parameters.

    ``params`` (or keywords) hold d1, q1, p1 and optionally c0.  Tabulated
    kernels take ``s`` with ``f`` or ``g`` arrays, or a callable ``g`` with an
    optional callable ``dg``.
    """
    params = dict(params or {}, **kw)
    fam = Family.parse(family)
    if fam is Family.TABULATED:
        return _make_tabulated(params)

    d1 = _need(params, "d1")
    q1 = _need(params, "q1")
    if not d1 > 0:
        raise ParameterOutOfRange(f"d1 must be positive, got {d1}")
    p1 = None
    if fam is Family.EXPONENTIAL:
        if not q1 > 0:
            raise ParameterOutOfRange(f"exponential kernel needs q1 > 0, got {q1}")
        g0, xi0 = d1 / q1, q1
    elif fam is Family.POLYNOMIAL:
        if not q1 > 1:
            raise ParameterOutOfRange(
                f"polynomial kernel needs q1 > 1, got {q1}: otherwise g is not "
                "integrable, g0 diverges and f has no finite value at 0"
            )
        g0, xi0 = d1 / (q1 - 1.0), q1
    else:
        p1 = _need(params, "p1")
        if not q1 > 0:
            raise ParameterOutOfRange(f"stretched kernel needs q1 > 0, got {q1}")
        if not 0.0 < p1 < 1.0:
            raise ParameterOutOfRange(f"stretched kernel needs 0 < p1 < 1, got {p1}")
        xi0 = q1 * p1
        g0 = np.nan  # filled by quadrature below

    c0 = float(params.get("c0") or xi0)
    k = MemoryKernel(family=fam, d1=d1, q1=q1, p1=p1, g0=g0, c0=c0, xi0=xi0)
    if fam is Family.STRETCHED:
        k = replace(k, g0=g0_quadrature(k))
    return k


def _make_tabulated(params):
    if callable(params.get("g")):
        g = params["g"]
        dg = params.get("dg")
        if dg is None:
            def dg(s, _g=g):
                s = np.asarray(s, dtype=float)
                e = 1e-6 * np.maximum(1.0, s)
                lo = np.maximum(s - e, 0.0)
                return (_g(s + e) - _g(lo)) / (s + e - lo)
        s_end = float(params.get("s_end", np.inf))
        probe = integrate_tail(lambda s: np.asarray(g(s), dtype=float), upper=s_end)

        def f(s, _g=g, _g0=probe):
            s = np.atleast_1d(np.asarray(s, dtype=float))
            out = np.array([_g0 - _gauss(_g, 0.0, si) if si > 0 else _g0 for si in s])
            return out
    else:
        s = np.asarray(params["s"], dtype=float)
        if s[0] != 0.0 or np.any(np.diff(s) <= 0):
            raise ParameterOutOfRange("table abscissae must start at 0 and increase")
        s_end = float(s[-1])
        if "f" in params and params["f"] is not None:
            F = PchipInterpolator(s, np.asarray(params["f"], dtype=float), extrapolate=False)
            dF, ddF = F.derivative(1), F.derivative(2)

            def f(x, _F=F):
                return np.nan_to_num(_F(np.minimum(x, s_end)))

            def g(x, _d=dF):
                return -_d(np.minimum(x, s_end))

            def dg(x, _d=ddF):
                return -_d(np.minimum(x, s_end))
        else:
            G = PchipInterpolator(s, np.asarray(params["g"], dtype=float), extrapolate=False)
            dG, IG = G.derivative(1), G.antiderivative(1)
            total = float(IG(s_end))

            def g(x, _G=G):
                return _G(np.minimum(x, s_end))

            def dg(x, _d=dG):
                return _d(np.minimum(x, s_end))

            def f(x, _I=IG, _t=total):
                return _t - _I(np.minimum(x, s_end))

        # integral of g over the support; equals f(0) when f vanishes at the end
        probe = float(f(0.0)) - float(f(s_end))

    xi = _running_min_xi(g, dg, s_end if np.isfinite(s_end) else 1e4)
    xi0 = float(xi(0.0))
    fine = np.linspace(0.0, s_end if np.isfinite(s_end) else 1e4, 4001)
    gv = np.asarray(g(fine), dtype=float)
    ratio = np.where(gv > 0, -np.asarray(dg(fine), dtype=float) / np.where(gv > 0, gv, 1.0), 0.0)
    c0 = float(params.get("c0") or max(float(np.max(ratio)), 0.0))
    return MemoryKernel(
        family=Family.TABULATED, d1=float(np.asarray(g(0.0))), q1=np.nan, p1=None,
        g0=float(probe), c0=c0, xi0=xi0,
        _g=g, _dg=dg, _f=f, _xi=xi, s_end=s_end,
    )


def _running_min_xi(g, dg, s_end, n=4001):
    """Largest nonincreasing, nonnegative xi below -g'/g on a fine grid.

    Between grid points the value of the next node is used, which keeps xi
    nonincreasing; the ``g' <= -xi g`` check in validation then tells whether
    the grid was fine enough.
    """
    grid = np.linspace(0.0, s_end, n)
    gv = np.asarray(g(grid), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(gv > 0, -np.asarray(dg(grid), dtype=float) / gv, 0.0)
    r = np.maximum(np.minimum.accumulate(np.nan_to_num(r)), 0.0)

    def xi(s, _grid=grid, _r=r):
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(_grid, s, side="left"), 0, _grid.size - 1)
        return _r[idx]

    return xi


# ---------------------------------------------------------------------------
# point evaluation
# ---------------------------------------------------------------------------

def eval_g(kernel, s):
    s = np.asarray(s, dtype=float)
    fam = kernel.family
    if fam is Family.EXPONENTIAL:
        return kernel.d1 * np.exp(-kernel.q1 * s)
    if fam is Family.POLYNOMIAL:
        return kernel.d1 * (1.0 + s) ** (-kernel.q1)
    if fam is Family.STRETCHED:
        return kernel.d1 * np.exp(-kernel.q1 * (1.0 + s) ** kernel.p1)
    return np.asarray(kernel._g(s), dtype=float)


def eval_dg(kernel, s):
    """g'(s)."""
    s = np.asarray(s, dtype=float)
    fam = kernel.family
    if fam is Family.TABULATED:
        return np.asarray(kernel._dg(s), dtype=float)
    return -eval_xi(kernel, s) * eval_g(kernel, s)


def eval_f(kernel, s):
    s = np.asarray(s, dtype=float)
    fam, d1, q1 = kernel.family, kernel.d1, kernel.q1
    if fam is Family.EXPONENTIAL:
        return d1 / q1 * np.exp(-q1 * s)
    if fam is Family.POLYNOMIAL:
        return d1 / (q1 - 1.0) * (1.0 + s) ** (1.0 - q1)
    if fam is Family.STRETCHED:
        p1 = kernel.p1
        a = 1.0 / p1
        return d1 / (p1 * q1**a) * gamma(a) * gammaincc(a, q1 * (1.0 + s) ** p1)
    return np.asarray(kernel._f(s), dtype=float)


def eval_xi(kernel, s):
    s = np.asarray(s, dtype=float)
    fam, q1 = kernel.family, kernel.q1
    if fam is Family.EXPONENTIAL:
        return np.full_like(s, q1)
    if fam is Family.POLYNOMIAL:
        return q1 / (s + 1.0)
    if fam is Family.STRETCHED:
        p1 = kernel.p1
        return q1 * p1 * (s + 1.0) ** (p1 - 1.0)
    return np.asarray(kernel._xi(s), dtype=float)


def eval_dxi(kernel, s):
    """xi'(s); tabulated kernels use a one-sided difference."""
    s = np.asarray(s, dtype=float)
    fam, q1 = kernel.family, kernel.q1
    if fam is Family.EXPONENTIAL:
        return np.zeros_like(s)
    if fam is Family.POLYNOMIAL:
        return -q1 / (s + 1.0) ** 2
    if fam is Family.STRETCHED:
        p1 = kernel.p1
        return q1 * p1 * (p1 - 1.0) * (s + 1.0) ** (p1 - 2.0)
    e = 1e-6 * np.maximum(1.0, s)
    return (eval_xi(kernel, s + e) - eval_xi(kernel, s)) / e


def xi_integral(kernel, t):
    """int_0^t xi for an array of increasing times, starting at t[0] = 0 or later."""
    t = np.asarray(t, dtype=float)
    fam, q1 = kernel.family, kernel.q1
    if fam is Family.EXPONENTIAL:
        return q1 * t
    if fam is Family.POLYNOMIAL:
        return q1 * np.log1p(t)
    if fam is Family.STRETCHED:
        return q1 * ((1.0 + t) ** kernel.p1 - 1.0)
    return cumulative_trapezoid(eval_xi(kernel, t), t, initial=0.0)


def default_s_max(kernel):
    """Smallest S with g(S) = 1e-12 g(0)."""
    fam, q1 = kernel.family, kernel.q1
    r = -np.log(TAIL_RATIO)
    if fam is Family.EXPONENTIAL:
        return r / q1
    if fam is Family.POLYNOMIAL:
        return TAIL_RATIO ** (-1.0 / q1) - 1.0
    if fam is Family.STRETCHED:
        return (1.0 + r / q1) ** (1.0 / kernel.p1) - 1.0
    if np.isfinite(kernel.s_end):
        return float(kernel.s_end)
    # callable kernels: double until the tail ratio is reached
    g_at0 = float(eval_g(kernel, 0.0))
    S = 1.0
    while float(eval_g(kernel, S)) > TAIL_RATIO * g_at0 and S < 1e15:
        S *= 2.0
    return S


# ---------------------------------------------------------------------------
# hypothesis validation
# ---------------------------------------------------------------------------

@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    witness: Optional[float] = None
    detail: str = ""


@dataclass
class ValidationReport:
    kernel: MemoryKernel
    s_max: float
    n_samples: int
    checks: list = field(default_factory=list)

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def get(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self):
        out = []
        for c in self.checks:
            tag = "pass" if c.passed else "FAIL"
            extra = f" at s={c.witness:.6g}" if c.witness is not None else ""
            out.append(f"{tag}  {c.name}{extra}{('  ' + c.detail) if c.detail else ''}")
        return out


def _first_bad(s, bad, name, detail=""):
    if np.any(bad):
        return HypothesisCheck(name, False, float(s[np.argmax(bad)]), detail)
    return HypothesisCheck(name, True)


def validate_hypotheses(kernel, s_max=None, n_samples=2001, rtol=1e-12):
    """Check the kernel hypotheses at sampled s in [0, s_max].

    Failures are returned as report entries with the first offending s.
    """
    if s_max is None:
        s_max = default_s_max(kernel)
    if not s_max > 0:
        raise ParameterOutOfRange(f"s_max must be positive, got {s_max}")
    if n_samples < 16:
        raise ParameterOutOfRange(f"n_samples must be at least 16, got {n_samples}")
    if np.isfinite(kernel.s_end):
        s_max = min(s_max, kernel.s_end)
    # dense near zero, where kernels change fastest
    s = np.unique(np.concatenate([
        np.linspace(0.0, s_max, n_samples),
        np.geomspace(1e-6, s_max, n_samples) if s_max > 1e-6 else [],
    ]))

    f = np.asarray(eval_f(kernel, s), dtype=float)
    g = np.asarray(eval_g(kernel, s), dtype=float)
    dg = np.asarray(eval_dg(kernel, s), dtype=float)
    xi = np.asarray(eval_xi(kernel, s), dtype=float)
    dxi = np.asarray(eval_dxi(kernel, s), dtype=float)
    c0 = kernel.c0
    fp, fpp = -g, -dg  # f' = -g, f'' = -g'

    tol_g = rtol * np.abs(g) + 1e-300
    rep = ValidationReport(kernel=kernel, s_max=float(s_max), n_samples=int(n_samples))
    chk = rep.checks
    chk.append(HypothesisCheck("f(0) > 0", bool(f[0] > 0), None if f[0] > 0 else 0.0))
    chk.append(_first_bad(s, ~(fp < 0), "f' < 0"))
    chk.append(_first_bad(s, (fpp < -tol_g * c0) | (fpp > -c0 * fp + tol_g * c0),
                          "0 <= f'' <= -c0 f'"))
    chk.append(_first_bad(s, ~(g > 0), "g > 0"))
    chk.append(_first_bad(s, (-dg < -tol_g * c0) | (-dg > c0 * g + tol_g * c0),
                          "0 <= -g' <= c0 g"))
    chk.append(_first_bad(s, dg + xi * g > tol_g * max(xi[0], 1.0), "g' <= -xi g"))
    chk.append(_first_bad(s, xi < 0, "xi >= 0"))
    chk.append(_first_bad(s, dxi > rtol * np.maximum(np.abs(xi), 1.0), "xi' <= 0"))

    g0 = kernel.g0
    finite = bool(np.isfinite(g0))
    chk.append(HypothesisCheck("g0 finite", finite, None,
                               "" if finite else "partial integrals of g keep growing"))
    if finite:
        agree = abs(g0 - f[0]) <= 1e-8 * max(abs(g0), 1e-300)
        chk.append(HypothesisCheck("g0 = f(0)", bool(agree), None if agree else 0.0,
                                   f"g0={g0:.12g} f(0)={f[0]:.12g}"))
    return rep


def tightest_c0(kernel, s_max=None, n=4001):
    """max of -g'/g over sampled s: the smallest c0 the samples allow."""
    if s_max is None:
        s_max = default_s_max(kernel)
    s = np.linspace(0.0, min(s_max, kernel.s_end), n)
    g = eval_g(kernel, s)
    return float(np.max(-eval_dg(kernel, s) / g))
