import math

import pytest

from kawahara_memory.config import (
    PRESETS,
    SCHEMA,
    build_config,
    emit_config,
    get_preset,
    isclose_settings,
    parse_config,
    parse_settings,
    set_key,
)
from kawahara_memory.errors import (
    ConfigError,
    MissingRequired,
    ParameterOutOfRange,
    ParseError,
    UnknownKey,
)
from kawahara_memory.kernel import Family, validate_hypotheses
from kawahara_memory.solver import check_smallness_condition


def test_minimal_config_fills_defaults():
    cfg = parse_config("sim.a0 = 1\nkernel.family = exponential\n")
    assert cfg.a0 == 1.0 and cfg.kernel.family is Family.EXPONENTIAL
    assert cfg.a1 == SCHEMA["sim.a1"][1]
    assert cfg.L == SCHEMA["space.L"][1] and cfg.N == SCHEMA["space.N"][1]
    assert cfg.T_final == SCHEMA["sim.T"][1] and cfg.k == 0


def test_non_integrable_polynomial_kernel_rejected():
    with pytest.raises(ParameterOutOfRange, match="integrab"):
        parse_config("sim.a0 = 1\nkernel.family = polynomial\nkernel.q1 = 0.5\n")


def test_duplicate_key_names_both_lines():
    with pytest.raises(ParseError) as info:
        parse_settings("sim.a0 = 1\n# comment\nsim.a0 = 2\n")
    msg = str(info.value)
    assert "line 3" in msg and "line 1" in msg
    assert info.value.line == 3


def test_unknown_key():
    with pytest.raises(UnknownKey):
        parse_settings("sim.a0 = 1\nsim.bogus = 2\n")


def test_missing_required():
    with pytest.raises(MissingRequired):
        parse_config("kernel.family = exponential\n")


@pytest.mark.parametrize("text", ["sim.a0\n", "sim.a0 = abc\n", "sim.nonlinear = maybe\nsim.a0 = 1\n"])
def test_malformed_lines(text):
    with pytest.raises(ParseError):
        parse_settings(text)


def test_comments_and_blank_lines_ignored():
    s = parse_settings("\n# header\nsim.a0 = 2.5   # inline\n\n")
    assert s == {"sim.a0": 2.5}


def test_none_value_means_default():
    cfg = parse_config("sim.a0 = 1\nsim.dt = none\n")
    assert cfg.dt is None


def test_missing_file_and_empty_text():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/path.cfg")
    with pytest.raises(ConfigError):
        parse_config("   \n")


def test_config_from_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("sim.a0 = 2\nspace.N = 64\n")
    cfg = parse_config(str(p))
    assert cfg.a0 == 2.0 and cfg.N == 64


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_emit_parse_round_trip(name):
    cfg = get_preset(name).config()
    text = emit_config(cfg)
    again = parse_config(text)
    assert isclose_settings(cfg.settings, again.settings)
    assert emit_config(again) == text


def test_emit_requires_settings():
    from kawahara_memory.solver import SimConfig
    cfg = SimConfig(kernel=get_preset("expo").config().kernel, u0=lambda x: 0 * x)
    with pytest.raises(ConfigError):
        emit_config(cfg)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_validate_and_pass_condition(name):
    preset = get_preset(name)
    cfg = preset.config()
    assert cfg.kernel.family.value == preset.expected_regime
    assert validate_hypotheses(cfg.kernel).all_passed
    assert check_smallness_condition(cfg).holds


def test_unknown_preset():
    with pytest.raises(ConfigError):
        get_preset("nope")


def test_set_key_converts_and_checks():
    s = set_key({"sim.a0": 1.0}, "space.N", "64")
    assert s["space.N"] == 64
    with pytest.raises(UnknownKey):
        set_key(s, "space.M", "1")


def test_expo_preset_history_covers_the_run():
    cfg = get_preset("expo").config()
    assert cfg.s_max >= cfg.T_final + math.log(1e12) - 1e-9


def test_tabulated_kernel_needs_table():
    with pytest.raises(MissingRequired):
        parse_config("sim.a0 = 1\nkernel.family = tabulated\n")


def test_tabulated_kernel_from_file(tmp_path):
    import numpy as np
    s = np.linspace(0.0, 40.0, 2001)
    table = tmp_path / "f.txt"
    np.savetxt(table, np.column_stack([s, np.exp(-s)]))
    cfg = build_config({"sim.a0": 1.0, "kernel.family": "tabulated", "kernel.table": str(table)})
    assert cfg.kernel.family is Family.TABULATED
    assert cfg.kernel.g0 == pytest.approx(1.0, rel=1e-3)
