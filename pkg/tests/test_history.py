import numpy as np
import pytest

from kawahara_memory.errors import DimensionMismatch, ModeMismatch, ParameterOutOfRange, TailTooFat
from kawahara_memory.history import (
    HistoryMode,
    _column_sums,
    _shift_operator,
    advance_history,
    hat_weights,
    init_history,
    make_s_grid,
    memory_dissipation,
    memory_integral,
    memory_norm,
    memory_norm_sq,
    stabilize_weights,
)
from kawahara_memory.kernel import default_s_max, eval_g, make_kernel
from kawahara_memory.spatial import build_discretization

EXPO = make_kernel("exponential", {"d1": 1.0, "q1": 1.0})


@pytest.fixture(scope="module")
def disc():
    return build_discretization(1.0, 32)


def sin_profile(disc):
    return np.sin(np.pi * disc.x / disc.L)


# ---- s-grid ----------------------------------------------------------------

@pytest.mark.parametrize("M_s", [16, 64, 4096])
@pytest.mark.parametrize("ds0", [None, 0.01])
def test_s_grid_shape(M_s, ds0):
    s = make_s_grid(30.0, M_s, ds0=ds0, scale=1.0)
    assert s[0] == 0.0
    assert np.all(np.diff(s) > 0)
    assert s.size <= M_s
    assert s[-1] >= 30.0 - 1e-12


def test_s_grid_needs_sixteen_nodes():
    with pytest.raises(ParameterOutOfRange):
        make_s_grid(10.0, 15)


def test_hat_weights_integrate_g():
    s = make_s_grid(default_s_max(EXPO), 512, scale=1.0)
    w = hat_weights(s, lambda t: eval_g(EXPO, t))
    assert w.sum() == pytest.approx(1.0, rel=1e-10)
    # hats reproduce linear functions exactly: int s e^{-s} ds = 1
    assert w @ s == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("kernel", [
    make_kernel("exponential", {"d1": 1.0, "q1": 1.0}),
    make_kernel("polynomial", {"d1": 1.0, "q1": 2.0}),
    make_kernel("stretched", {"d1": 1.0, "q1": 1.0, "p1": 0.5}),
], ids=["exponential", "polynomial", "stretched"])
def test_stabilized_weights_make_the_shift_nonexpansive(kernel):
    dt = 0.01
    s = make_s_grid(default_s_max(kernel), 2048, ds0=dt, scale=1.0 / kernel.xi0)
    w = hat_weights(s, lambda t: eval_g(kernel, t))
    ws = stabilize_weights(s, w, dt)
    lo, frac = _shift_operator(s, dt)
    assert np.all(_column_sums(ws, lo, frac) <= ws * (1 + 1e-12) + 1e-300)
    assert np.all(ws <= w)
    assert ws.sum() == pytest.approx(w.sum(), rel=1e-3)


def test_uniform_grid_weights_untouched_for_exponential():
    dt = 0.01
    s = make_s_grid(default_s_max(EXPO), 4096, ds0=dt)
    w = hat_weights(s, lambda t: eval_g(EXPO, t))
    assert np.array_equal(stabilize_weights(s, w, dt), w)


# ---- initialization ---------------------------------------------------------

def test_zero_past_gives_zero_history(disc):
    hist = init_history(None, disc, EXPO, M_s=64)
    assert not np.any(hist.eta)


def test_constant_past_gives_linear_history(disc):
    phi = sin_profile(disc)
    hist = init_history(lambda x, tau: np.sin(np.pi * x) * np.ones_like(tau), disc, EXPO, M_s=256)
    expect = phi[:, None] * hist.s_nodes[None, :]
    assert np.max(np.abs(hist.eta - expect)) <= 1e-12 * hist.s_nodes[-1]


def test_decaying_past_history(disc):
    phi = sin_profile(disc)
    hist = init_history(lambda x, tau: np.sin(np.pi * x) * np.exp(-tau), disc, EXPO, M_s=256)
    expect = phi[:, None] * (1.0 - np.exp(-hist.s_nodes))[None, :]
    assert np.max(np.abs(hist.eta - expect)) <= 1e-8


def test_expo_ode_mode_requires_exponential_kernel(disc):
    with pytest.raises(ModeMismatch):
        init_history(None, disc, make_kernel("polynomial", {"d1": 1, "q1": 2}), mode="expo-ode")


def test_short_tail_rejected(disc):
    with pytest.raises(TailTooFat):
        init_history(None, disc, EXPO, S_max=5.0)


def test_expo_ode_initial_memory_matches_grid(disc):
    past = lambda x, tau: np.sin(np.pi * x) * np.exp(-0.5 * tau)
    ode = init_history(past, disc, EXPO, mode="expo-ode")
    grid = init_history(past, disc, EXPO, M_s=4096)
    # int e^{-s} (1 - e^{-s/2}) / (1/2) ds = 2/3
    ref = (2.0 / 3.0) * sin_profile(disc)
    assert np.max(np.abs(ode.memory_vector() - ref)) <= 1e-12
    assert np.max(np.abs(grid.memory_vector() - ref)) <= 1e-6


# ---- advance ---------------------------------------------------------------

@pytest.mark.parametrize("mode", ["grid", "expo-ode"])
def test_zero_stays_zero(disc, mode):
    hist = init_history(None, disc, EXPO, M_s=256, mode=mode, ds0=0.01, dt=0.01)
    for _ in range(10):
        hist = advance_history(hist, np.zeros(disc.N), 0.01)
    assert not np.any(hist.memory_vector())


@pytest.mark.parametrize("mode", ["grid", "expo-ode"])
def test_constant_input_reaches_steady_memory(disc, mode):
    kernel = make_kernel("exponential", {"d1": 2.0, "q1": 4.0})
    dt = 0.01
    phi = sin_profile(disc)
    hist = init_history(None, disc, kernel, M_s=4096, mode=mode, ds0=dt, dt=dt)
    for _ in range(1500):
        hist = advance_history(hist, phi, dt, u_old=phi)
    # dm/dt = g0 phi - q1 m has the fixed point g0 phi / q1
    target = kernel.g0 / kernel.q1 * phi
    assert np.max(np.abs(hist.memory_vector() - target)) <= 1e-6 * np.max(np.abs(target))


def test_grid_and_ode_agree_over_100_steps(disc):
    dt = 0.01
    past = lambda x, tau: np.sin(np.pi * x) * np.ones_like(tau)
    grid = init_history(past, disc, EXPO, M_s=4096, ds0=dt, dt=dt)
    ode = init_history(past, disc, EXPO, mode="expo-ode")
    phi = sin_profile(disc)
    u_old = phi
    worst = 0.0
    for n in range(1, 101):
        u_new = phi * np.cos(0.3 * n * dt) + 0.2 * phi**2
        grid = advance_history(grid, u_new, dt, u_old=u_old)
        ode = advance_history(ode, u_new, dt, u_old=u_old)
        u_old = u_new
        a, b = grid.memory_vector(), ode.memory_vector()
        worst = max(worst, np.linalg.norm(a - b) / np.linalg.norm(b))
    assert worst <= 1e-4


def test_advance_rejects_bad_input(disc):
    hist = init_history(None, disc, EXPO, M_s=64)
    with pytest.raises(DimensionMismatch):
        advance_history(hist, np.zeros(disc.N + 1), 0.01)
    with pytest.raises(ParameterOutOfRange):
        advance_history(hist, np.zeros(disc.N), 0.0)


def test_advance_returns_new_field(disc):
    hist = init_history(None, disc, EXPO, M_s=64)
    new = advance_history(hist, np.ones(disc.N), 0.01)
    assert not np.any(hist.eta)
    assert np.any(new.eta)


# ---- memory integral and norms ---------------------------------------------

def test_zero_history_memory_integral(disc):
    hist = init_history(None, disc, EXPO, M_s=64)
    for k in (0, 1, 2):
        assert not np.any(memory_integral(hist, disc, k))
        assert memory_norm(hist, disc, k) == 0.0
        assert memory_dissipation(hist, disc, k) == 0.0


def test_memory_integral_of_saturating_history(disc):
    phi = sin_profile(disc)
    hist = init_history(lambda x, tau: np.sin(np.pi * x) * np.exp(-tau), disc, EXPO, M_s=4096)
    # int e^{-s} (1 - e^{-s}) ds = 1/2
    assert np.max(np.abs(memory_integral(hist, disc, 0) - 0.5 * phi)) <= 1e-6


def test_memory_integral_converges_at_second_order_in_s(disc):
    phi = sin_profile(disc)
    past = lambda x, tau: np.sin(np.pi * x) * np.exp(-tau)
    errs = [np.max(np.abs(memory_integral(init_history(past, disc, EXPO, M_s=M), disc, 0) - 0.5 * phi))
            for M in (64, 128, 256)]
    assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0


def test_memory_integral_of_linear_history(disc):
    phi = sin_profile(disc)
    hist = init_history(lambda x, tau: np.sin(np.pi * x) * np.ones_like(tau), disc, EXPO, M_s=512)
    assert np.max(np.abs(memory_integral(hist, disc, 0) - phi)) <= 1e-9


def test_memory_norm_of_linear_history():
    disc = build_discretization(1.0, 512)
    hist = init_history(lambda x, tau: np.sin(np.pi * x) * np.ones_like(tau), disc, EXPO, M_s=1024)
    # ||sin||^2 int s^2 e^{-s} ds = 0.5 * 2
    assert memory_norm(hist, disc, 0) ** 2 == pytest.approx(1.0, rel=1e-5)


def test_memory_norm_sign_invariant(disc):
    rng = np.random.default_rng(0)
    hist = init_history(None, disc, EXPO, M_s=64)
    hist.eta[:] = rng.standard_normal(hist.eta.shape)
    hist.eta[:, 0] = 0.0
    flipped = type(hist)(**{**hist.__dict__, "eta": -hist.eta})
    for k in (0, 1, 2):
        assert memory_norm(flipped, disc, k) == memory_norm(hist, disc, k)


def test_memory_operator_orders(disc):
    phi = sin_profile(disc)
    hist = init_history(lambda x, tau: np.sin(np.pi * x) * np.ones_like(tau), disc, EXPO, M_s=512)
    lam = (2.0 - 2.0 * np.cos(np.pi * disc.h)) / disc.h**2  # eigenvalue of -lap on sin
    assert np.allclose(memory_integral(hist, disc, 1), lam * phi, rtol=1e-9, atol=1e-12)
    assert np.allclose(memory_integral(hist, disc, 2), lam**2 * phi, rtol=1e-9, atol=1e-9)


def test_exponential_dissipation_is_minus_half_q1_norm(disc):
    kernel = make_kernel("exponential", {"d1": 1.0, "q1": 2.5})
    rng = np.random.default_rng(1)
    hist = init_history(None, disc, kernel, M_s=512, ds0=0.01, dt=0.01)
    hist.eta[:] = rng.standard_normal(hist.eta.shape)
    hist.eta[:, 0] = 0.0
    for k in (0, 1, 2):
        assert memory_dissipation(hist, disc, k) == pytest.approx(
            -0.5 * kernel.q1 * memory_norm_sq(hist, disc, k), rel=1e-10)


@pytest.mark.parametrize("kernel", [
    make_kernel("polynomial", {"d1": 1.0, "q1": 2.0}),
    make_kernel("stretched", {"d1": 1.0, "q1": 1.0, "p1": 0.5}),
    make_kernel("exponential", {"d1": 3.0, "q1": 0.7}),
], ids=["polynomial", "stretched", "exponential"])
def test_dissipation_bounded_by_c0(disc, kernel):
    rng = np.random.default_rng(2)
    hist = init_history(None, disc, kernel, M_s=1024)
    for _ in range(5):
        for k in (0, 1, 2):
            hist.eta[:] = rng.standard_normal(hist.eta.shape)
            hist.eta[:, 0] = 0.0
            hist.eta /= memory_norm(hist, disc, k)
            val = memory_dissipation(hist, disc, k)
            assert val <= 0.0
            assert abs(val) <= 0.5 * kernel.c0 * memory_norm_sq(hist, disc, k) + 1e-12


def test_expo_ode_has_no_norm(disc):
    hist = init_history(None, disc, EXPO, mode="expo-ode")
    assert hist.mode is HistoryMode.EXPONENTIAL_ODE
    assert np.isnan(memory_norm(hist, disc, 0))


def test_grid_advance_is_energy_stable(disc):
    """Without input the weighted norm never grows."""
    kernel = make_kernel("stretched", {"d1": 1.0, "q1": 1.0, "p1": 0.5})
    dt = 0.05
    hist = init_history(lambda x, tau: np.sin(np.pi * x) * np.ones_like(tau), disc, kernel,
                        M_s=512, ds0=dt, dt=dt)
    prev = memory_norm_sq(hist, disc, 0)
    for _ in range(200):
        hist = advance_history(hist, np.zeros(disc.N), dt)
        cur = memory_norm_sq(hist, disc, 0)
        assert cur <= prev * (1 + 1e-13)
        prev = cur
