import math

import numpy as np
import pytest

from kawahara_memory.config import get_preset
from kawahara_memory.diagnostics import (
    CSV_HEADER,
    LyapunovConstants,
    TimeSeries,
    check_equivalence,
    contraction_violations,
    energy,
    fit_decay,
    generalized_bound,
    h_correction,
    identity_residual,
    lyapunov_constants,
    monotone_violations,
    past_norm,
)
from kawahara_memory.errors import DomainError, NonpositiveD, ParameterOutOfRange, SeriesTooShort
from kawahara_memory.history import init_history
from kawahara_memory.kernel import make_kernel
from kawahara_memory.solver import SimConfig, SimState, run
from kawahara_memory.spatial import EmbeddingConstants, build_discretization

EXPO = make_kernel("exponential", {"d1": 1.0, "q1": 1.0})


def zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@pytest.fixture(scope="module")
def disc512():
    return build_discretization(1.0, 512)


@pytest.fixture(scope="module")
def expo_short():
    """Short run of the exponential preset; shared by several checks."""
    return run(get_preset("expo").config(**{"sim.T": 2.0}))


# ---- energy ----------------------------------------------------------------

def test_zero_state_has_zero_energy(disc512):
    hist = init_history(None, disc512, EXPO, M_s=64)
    assert energy(SimState(0.0, np.zeros(disc512.N), hist), disc512) == 0.0


def test_energy_of_sine_without_history(disc512):
    hist = init_history(None, disc512, EXPO, M_s=64)
    u = np.sin(np.pi * disc512.x)
    assert energy(SimState(0.0, u, hist), disc512) == pytest.approx(0.25, abs=1e-5)


def test_energy_splits_into_state_and_history():
    disc = build_discretization(2.0, 64)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(disc.N)
    hist = init_history(lambda x, tau: np.sin(x) * np.exp(-tau), disc, EXPO, M_s=256)
    empty = init_history(None, disc, EXPO, M_s=256)
    for k in (0, 1, 2):
        both = energy(SimState(0.0, u, hist), disc, k=k)
        parts = energy(SimState(0.0, u, empty), disc, k=k) + energy(SimState(0.0, 0 * u, hist), disc, k=k)
        assert both == pytest.approx(parts, rel=1e-14)


# ---- identity residual ------------------------------------------------------

def test_zero_run_has_zero_residual():
    res = run(SimConfig(kernel=EXPO, u0=zero, L=5.0, N=48, dt=0.01, T_final=0.3))
    rep = identity_residual(res.series)
    assert rep.max_abs == 0.0 and rep.max_leak == 0.0


def test_residual_needs_three_records():
    res = run(SimConfig(kernel=EXPO, u0=zero, L=5.0, N=48, dt=0.01, T_final=0.01))
    with pytest.raises(SeriesTooShort):
        identity_residual(res.series)


def test_exponential_memory_dissipation_per_record(expo_short):
    s = expo_short.series
    md, eta = s.column("memory_diss"), s.column("eta_norm_Lg")
    assert np.allclose(md, -0.5 * 1.0 * eta**2, rtol=1e-10, atol=0.0)


def test_residual_small_on_preset(expo_short):
    rep = identity_residual(expo_short.series)
    assert rep.max_abs <= 1e-3 * expo_short.series.column("E")[0]
    assert rep.max_leak <= 1e-20


# ---- Lyapunov functional ----------------------------------------------------

CONSTS = EmbeddingConstants(M_P=2.0, M_S=1.5, M_S_lower=1.0)


def _toy_config(k=0, a1=0.1):
    return SimConfig(kernel=make_kernel("exponential", {"d1": 2.0, "q1": 4.0}), u0=zero,
                     a0=1.0, a1=a1, k=k, L=3.0)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_lyapunov_constant_chain(k):
    E0, mom = 1e-4, 2e-4
    lc = lyapunov_constants(_toy_config(k), CONSTS, E0, mom)
    M_P, M_S, L, g0 = 2.0, 1.5, 3.0, 0.5
    D0 = 5.0 - (2 / 3) * M_S * math.sqrt(L) * M_P * (M_P + 1) * math.sqrt(2 * E0) - 0.1 * M_P**2
    eps = D0 / 8
    C_eps = [L**2 * M_P**2 * g0 / (4 * eps),
             g0 * M_P * (M_P + L**2) / (2 * eps),
             2 * g0 * (M_P + L**2) / eps][k]
    D = D0 - 2 * eps
    C1, C2 = 1 / D, 2 * C_eps / D
    mu = 2 * (C2 + 1 / M_P**2)
    upper = mu + 2 * L * C1 * 4.0
    assert lc.D0 == pytest.approx(D0) and lc.D == pytest.approx(D)
    assert lc.C_eps == pytest.approx(C_eps) and lc.mu == pytest.approx(mu)
    assert lc.upper == pytest.approx(upper)
    assert lc.lambda0 == pytest.approx(2 / (M_P**2 * upper))
    C3 = max(C1 * mom, 2 * C2 * E0)
    assert lc.c1 == pytest.approx(2 * max(1.0, M_P ** (2 - k) * C3))
    assert lc.F0 == pytest.approx(mu * E0 + C1 * 4.0 * mom)


def test_lyapunov_constants_need_positive_slack():
    with pytest.raises(NonpositiveD):
        lyapunov_constants(_toy_config(a1=2.0), CONSTS, 1e-4, 1e-4)


def test_equivalence_and_contraction_on_preset(expo_short):
    lyap = expo_short.lyapunov
    assert isinstance(lyap, LyapunovConstants)
    assert check_equivalence(expo_short.series, lyap).size == 0
    assert contraction_violations(expo_short.series, lyap).size == 0


def test_zero_state_has_zero_functional():
    res = run(SimConfig(kernel=EXPO, u0=zero, L=5.0, N=48, dt=0.01, T_final=0.1))
    # the functional needs E(0) > 0 only through its constants; F itself vanishes
    assert np.all((res.series.column("F") == 0) | np.isnan(res.series.column("F")))


# ---- h correction -----------------------------------------------------------

def test_h_at_time_zero_without_history(disc512):
    assert h_correction(0.0, 3.0, None, disc512, 0) == 0.0


def test_h_without_history(disc512):
    assert h_correction(1.0, 2.0, None, disc512, 0) == 2.0


def test_h_with_constant_history(disc512):
    past = lambda x, tau: np.sin(np.pi * x) * np.ones_like(tau)
    # int over [0, -1] of a constant profile is minus the profile; its norm is ||sin|| = sqrt(1/2)
    assert h_correction(1.0, 2.0, past, disc512, 0) == pytest.approx(2.0 + math.sqrt(0.5), abs=1e-5)
    assert h_correction(1.0, 2.0, past, disc512, 0, squared=True) == pytest.approx(2.5, abs=1e-5)


def test_past_norm_grows_linearly_for_constant_history(disc512):
    past = lambda x, tau: np.sin(np.pi * x) * np.ones_like(tau)
    assert past_norm(past, disc512, 0, 3.0) == pytest.approx(3.0 * math.sqrt(0.5), rel=1e-5)


def test_h_outside_domain(disc512):
    with pytest.raises(DomainError):
        h_correction(3.0, 2.0, None, disc512, 0)


def test_generalized_bound_dominates_energy():
    cfg = get_preset("poly").config(**{"sim.T": 4.0, "sim.stride": 10})
    res = run(cfg)
    bound = generalized_bound(res.series, cfg, res.lyapunov, res.disc)
    assert np.all(res.series.column("E") <= bound)


# ---- fits -------------------------------------------------------------------

def test_fit_recovers_synthetic_exponential():
    t = np.arange(0.0, 20.0 + 1e-9, 0.01)
    fit = fit_decay(t, 3.0 * np.exp(-0.7 * t))
    assert fit.rate == pytest.approx(0.7, abs=1e-6)
    assert fit.c_tilde == pytest.approx(3.0, abs=1e-6)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.envelope_violations == 0


def test_fit_against_integrated_rate():
    t = np.arange(0.0, 20.0 + 1e-9, 0.01)
    fit = fit_decay(t, (1.0 + t) ** -2.0, model="xi", xi=lambda s: 1.0 / (1.0 + s))
    assert fit.rate == pytest.approx(2.0, abs=1e-6)


def test_fit_xi_model_with_kernel():
    t = np.arange(0.0, 20.0 + 1e-9, 0.01)
    kernel = make_kernel("stretched", {"d1": 1.0, "q1": 2.0, "p1": 0.5})
    X = 2.0 * (np.sqrt(1.0 + t) - 1.0)
    fit = fit_decay(t, 5.0 * np.exp(-0.3 * X), model="xi", kernel=kernel)
    assert fit.rate == pytest.approx(0.3, abs=1e-10)
    assert fit.c_tilde == pytest.approx(5.0, rel=1e-10)


def test_fit_counts_envelope_violations():
    t = np.arange(0.0, 20.0 + 1e-9, 0.01)
    E = np.exp(-t) * (1.0 + 0.5 * np.sin(3.0 * t))
    fit = fit_decay(t, E)
    assert fit.envelope_violations > 0


def test_fit_of_identically_zero_series():
    t = np.linspace(0, 5, 50)
    fit = fit_decay(t, np.zeros_like(t))
    assert fit.all_zero and fit.envelope_violations == 0


def test_fit_rejects_unknown_model_and_short_window():
    t = np.linspace(0, 5, 50)
    with pytest.raises(ParameterOutOfRange):
        fit_decay(t, np.exp(-t), model="power")
    with pytest.raises(SeriesTooShort):
        fit_decay(t, np.exp(-t), window=(4.99, 5.0))


def test_monotone_violations_on_preset(expo_short):
    assert monotone_violations(expo_short.series).size == 0


# ---- CSV --------------------------------------------------------------------

def test_csv_header_and_round_trip(expo_short, tmp_path):
    path = tmp_path / "series.csv"
    text = expo_short.series.to_csv(path)
    assert text.splitlines()[0] == CSV_HEADER
    assert CSV_HEADER == "t, E, F, u_norm, eta_norm_Lg, boundary_diss, memory_diss, nonlinear_leak, uxx0"
    back = TimeSeries.from_csv(path)
    for name in ("t", "E", "F", "uxx0"):
        assert np.array_equal(back.column(name), expo_short.series.column(name))


def test_csv_missing_columns_rejected():
    with pytest.raises(ParameterOutOfRange):
        TimeSeries.from_csv("t, E\n0.0, 1.0\n")
