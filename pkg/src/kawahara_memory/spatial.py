"""Uniform grid on (0, L) and finite-difference operators of orders 1, 2, 3, 5.

Unknowns live on the interior nodes x_i = i h, i = 1..N, h = L/(N+1).  The
boundary values u(0) = u(L) = 0 are eliminated.  Centered stencils that reach
past the boundary read ghost values, and those ghosts are linear functionals
of the interior data obtained from a polynomial fit that enforces the remaining
conditions: u_x(0) = 0 on the left, u_x(L) = u_xx(L) = 0 on the right.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DimensionMismatch, EigSolveFailure, GridTooCoarse, ParameterOutOfRange

# polynomial degree of the ghost fits, per scheme order
_GHOST_DEGREE = {2: 7, 4: 9}
# half-width of the widest (fifth derivative) stencil, per scheme order
_HALF_WIDTH = {2: 3, 4: 4}
MIN_N = 32


def central_weights(m, order):
    """Centered finite-difference weights for d^m/dx^m on unit spacing.

    Returns (offsets, weights).  Odd derivatives skip the center point, which
    the antisymmetry makes redundant.
    """
    p = (m + order - 1) // 2  # points per side
    if m % 2:
        offsets = np.array([o for o in range(-p, p + 1) if o != 0])
    else:
        offsets = np.arange(-p, p + 1)
    n = offsets.size
    V = np.vander(offsets.astype(float), n, increasing=True).T
    rhs = np.zeros(n)
    rhs[m] = float(np.prod(np.arange(1, m + 1)))
    return offsets, np.linalg.solve(V, rhs)


def _ghost_rows(n_ghost, deg, side):
    """Rows expressing ghost values through interior values (unit spacing).

    Left side: ghost at -g uses u_1..u_{deg-1}, with p(0) = p'(0) = 0.
    Right side: ghost at +g past L uses the deg-2 nodes nearest L, with
    p(L) = p'(L) = p''(L) = 0.  Returns (ghost matrix, second-derivative row at
    the boundary).
    """
    powers = np.arange(deg + 1)
    if side == "left":
        nbc = 2
        pts = np.arange(1, deg - nbc + 2, dtype=float)
    else:
        nbc = 3
        pts = -np.arange(1, deg - nbc + 2, dtype=float)
    bc = np.zeros((nbc, deg + 1))
    for d in range(nbc):
        bc[d, d] = float(np.prod(np.arange(1, d + 1)))
    V = np.vstack([bc, pts[:, None] ** powers[None, :]])
    Vi = np.linalg.inv(V)
    ghosts = np.arange(1, n_ghost + 1, dtype=float)
    if side == "left":
        ghosts = -ghosts
    G = (ghosts[:, None] ** powers[None, :]) @ Vi
    # coefficient of x^2 times 2 gives p''(0); only needed on the left
    dd = 2.0 * Vi[2]
    return G[:, nbc:], dd[nbc:]


@dataclass(frozen=True)
class SpatialDiscretization:
    L: float
    N: int
    h: float
    order: int
    x: np.ndarray
    D1: sp.csr_matrix
    D2: sp.csr_matrix
    D3: sp.csr_matrix
    D5: sp.csr_matrix
    lap: sp.csr_matrix  # symmetric 3-point Dirichlet Laplacian
    uxx0_weights: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)  # trapezoid weights incl. both boundary nodes

    def uxx0(self, u):
        """One-sided approximation of u_xx at x = 0."""
        return float(self.uxx0_weights @ u)

    def check(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.N:
            raise DimensionMismatch(f"vector has {v.shape[0]} rows, grid has {self.N}")
        return v


def build_discretization(L, N, scheme_order=2):
    """Assemble the grid and the sparse operators D1, D2, D3, D5."""
    if not L > 0:
        raise ParameterOutOfRange(f"L must be positive, got {L}")
    if scheme_order not in _HALF_WIDTH:
        raise ParameterOutOfRange(f"scheme_order must be 2 or 4, got {scheme_order}")
    N = int(N)
    deg = _GHOST_DEGREE[scheme_order]
    if N < max(MIN_N, deg + 1):
        raise GridTooCoarse(f"N={N} is below the minimum {max(MIN_N, deg + 1)}")
    h = L / (N + 1)
    x = h * np.arange(1, N + 1)
    r = _HALF_WIDTH[scheme_order]
    ng = r - 1

    # extension: padded vector (nodes 1-r .. N+r) from interior values
    n_pad = N + 2 * r
    E = sp.lil_matrix((n_pad, N))
    for j in range(N):
        E[j + r, j] = 1.0
    GL, dd = _ghost_rows(ng, deg, "left")
    GR, _ = _ghost_rows(ng, deg, "right")
    nl, nr = GL.shape[1], GR.shape[1]
    for g in range(ng):
        # ghost at node -(g+1) sits at padded index r-2-g
        for j in range(nl):
            E[r - 2 - g, j] = GL[g, j]
        # ghost at node N+2+g sits at padded index N+r+1+g
        for j in range(nr):
            E[N + r + 1 + g, N - 1 - j] = GR[g, j]
    E = E.tocsr()

    def assemble(m):
        offs, wts = central_weights(m, scheme_order)
        diags = [np.full(N, wv) for wv in wts]
        S = sp.diags(diags, offs + r, shape=(N, n_pad))
        return ((S @ E) / h**m).tocsr()

    D1, D2, D3, D5 = (assemble(m) for m in (1, 2, 3, 5))
    lap = sp.diags(
        [np.ones(N - 1), -2.0 * np.ones(N), np.ones(N - 1)], [-1, 0, 1]
    ).tocsr() / h**2

    uxx0_weights = np.zeros(N)
    uxx0_weights[:nl] = dd / h**2
    quad = np.full(N + 2, h)
    quad[0] = quad[-1] = 0.5 * h
    return SpatialDiscretization(
        L=float(L), N=N, h=h, order=scheme_order, x=x,
        D1=D1, D2=D2, D3=D3, D5=D5, lap=lap,
        uxx0_weights=uxx0_weights, quad_weights=quad,
    )


# ---------------------------------------------------------------------------
# discrete norms
# ---------------------------------------------------------------------------

def inner(disc, v, w):
    """Trapezoid inner product; boundary values are zero so only interior nodes count."""
    v, w = disc.check(v), disc.check(w)
    return float(disc.h * (v @ w))


def norm_L2(disc, v):
    return float(np.sqrt(max(inner(disc, v, v), 0.0)))


def norm_Hk(disc, v, k):
    """Full H^k norm: sqrt(sum_{m<=k} ||d^m v||^2)."""
    v = disc.check(v)
    total = inner(disc, v, v)
    if k >= 1:
        dv = disc.D1 @ v
        total += inner(disc, dv, dv)
    if k >= 2:
        d2v = disc.D2 @ v
        total += inner(disc, d2v, d2v)
    if k > 2 or k < 0:
        raise ParameterOutOfRange(f"k must be 0, 1 or 2, got {k}")
    return float(np.sqrt(total))


def x_moment(disc, v):
    """int_0^L x v(x)^2 dx."""
    v = disc.check(v)
    return float(disc.h * np.sum(disc.x * v * v))


# ---------------------------------------------------------------------------
# embedding constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmbeddingConstants:
    M_P: float
    M_S: float
    M_S_lower: float
    iterations: int = 0


def poincare_constant(disc, tol=1e-14, max_iter=10_000):
    """1/lambda_min(-lap) by inverse iteration with a banded Cholesky factor."""
    N, h = disc.N, disc.h
    ab = np.zeros((2, N))
    ab[0, 1:] = -1.0 / h**2
    ab[1, :] = 2.0 / h**2
    cb = sla.cholesky_banded(ab)
    v = np.sin(np.pi * disc.x / disc.L) + 0.01 * np.sin(2 * np.pi * disc.x / disc.L)
    v /= np.linalg.norm(v)
    lam_old = np.inf
    for it in range(1, max_iter + 1):
        y = sla.cho_solve_banded((cb, False), v)
        # Rayleigh quotient of the inverse: v.y = 1/lambda
        mu = v @ y
        v = y / np.linalg.norm(y)
        lam = 1.0 / mu
        if abs(lam - lam_old) <= tol * abs(lam):
            return 1.0 / lam, it
        lam_old = lam
    raise EigSolveFailure(f"inverse iteration did not converge in {max_iter} steps")


def sobolev_constant_analytic(L):
    """Sharp sup ||v||_inf^2 / ||v||_{H^1}^2 over H^1(0, L): coth(L)."""
    return float(1.0 / np.tanh(L))


def sobolev_constant_lower(disc):
    """Discrete lower bound for the Sobolev constant.

    Over the piecewise-linear functions vanishing at both ends, the sup of
    v(x_i)^2/||v||_{H^1}^2 is the i-th diagonal entry of the inverse of the
    Gram matrix (mass + stiffness); the largest one is the bound.
    """
    N, h = disc.N, disc.h
    main = 4.0 * h / 6.0 + 2.0 / h
    off = h / 6.0 - 1.0 / h
    A = np.zeros((2, N))
    A[0, 1:] = off
    A[1, :] = main
    cb = sla.cholesky_banded(A)
    i = N // 2
    best = 0.0
    for j in (i - 1, i, i + 1):
        e = np.zeros(N)
        e[j] = 1.0
        best = max(best, float(sla.cho_solve_banded((cb, False), e)[j]))
    return best


def estimate_constants(disc, M_S=None):
    """Poincare constant from the grid and Sobolev constant (analytic unless given)."""
    M_P, it = poincare_constant(disc)
    lower = sobolev_constant_lower(disc)
    if M_S is None:
        M_S = sobolev_constant_analytic(disc.L)
    return EmbeddingConstants(M_P=M_P, M_S=float(M_S), M_S_lower=lower, iterations=it)
