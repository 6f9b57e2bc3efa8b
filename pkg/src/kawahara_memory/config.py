"""Flat ``section.key = value`` configuration files and experiment presets."""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, MissingRequired, ParameterOutOfRange, ParseError, UnknownKey
from .kernel import Family, make_kernel
from .solver import SimConfig

# key -> (type, default); None default means optional / computed
SCHEMA = {
    "sim.a0": (float, None),
    "sim.a1": (float, 0.0),
    "sim.dt": (float, None),
    "sim.T": (float, 50.0),
    "sim.nonlinear": (bool, True),
    "sim.memory": (bool, True),
    "sim.stride": (int, 1),
    "space.L": (float, 12.0),
    "space.N": (int, 128),
    "space.order": (int, 2),
    "kernel.family": (str, "exponential"),
    "kernel.d1": (float, 1.0),
    "kernel.q1": (float, 1.0),
    "kernel.p1": (float, 0.5),
    "kernel.c0": (float, None),
    "kernel.table": (str, None),
    "memory.k": (int, 0),
    "memory.s_nodes": (int, 4096),
    "memory.s_max": (float, None),
    "memory.ds": (float, None),
    "memory.mode": (str, "auto"),
    "init.u0": (str, "bump"),
    "init.amplitude": (float, 0.001),
    "init.history": (str, "constant"),
    "constants.M_S": (float, None),
    "fit.model": (str, "auto"),
    "fit.t0": (float, None),
    "fit.t1": (float, None),
    "meta.preset": (str, ""),
}
REQUIRED = ("sim.a0",)
ORDER = list(SCHEMA)

U0_PRESETS = ("sine", "bump", "poly33", "zero")
HISTORY_PRESETS = ("zero", "constant", "decaying")


def _to_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(key, raw):
    typ = SCHEMA[key][0]
    if raw.strip().lower() in ("none", ""):
        return None
    if typ is bool:
        return _to_bool(raw)
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    return raw.strip()


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_settings(text):
    """Parse config text into a dict of explicitly given keys."""
    seen = {}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"expected 'section.key = value', got {body!r}", lineno)
        key, raw = (p.strip() for p in body.split("=", 1))
        if key not in SCHEMA:
            raise UnknownKey(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ParseError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno)
        seen[key] = lineno
        try:
            out[key] = _convert(key, raw)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {exc}", lineno) from None
    return out


def resolve(settings):
    """Fill defaults and check required keys."""
    missing = [k for k in REQUIRED if settings.get(k) is None]
    if missing:
        raise MissingRequired(f"missing required key(s): {', '.join(missing)}")
    full = {k: SCHEMA[k][1] for k in ORDER}
    full.update(settings)
    return full


def emit_settings(settings):
    lines = [f"{k} = {_format(settings.get(k, SCHEMA[k][1]))}" for k in ORDER]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def u0_profile(name, L, amplitude):
    """Initial profiles vanishing with enough derivatives at both ends."""
    name = name.lower()
    if name == "zero" or amplitude == 0.0:
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if name == "sine":
        # sin^3 vanishes to third order at both ends
        return lambda x: amplitude * np.sin(np.pi * np.asarray(x, dtype=float) / L) ** 3
    if name == "bump":
        def bump(x):
            z = np.asarray(x, dtype=float) / L
            out = np.zeros_like(z)
            inside = (z > 0) & (z < 1)
            zi = z[inside]
            out[inside] = np.exp(4.0 - 1.0 / (zi * (1.0 - zi)))
            return amplitude * out
        return bump
    if name == "poly33":
        return lambda x: amplitude * 64.0 / L**6 * np.asarray(x, float) ** 3 * (L - np.asarray(x, float)) ** 3
    raise ParameterOutOfRange(f"unknown init.u0 {name!r}; choose from {U0_PRESETS}")


def history_profile(name, u0):
    """Prescribed past u0_history(x, tau), tau >= 0."""
    name = name.lower()
    if name == "zero":
        return None
    if name == "constant":
        return lambda x, tau: u0(x) * np.ones_like(tau)
    if name == "decaying":
        return lambda x, tau: u0(x) * np.exp(-tau)
    raise ParameterOutOfRange(f"unknown init.history {name!r}; choose from {HISTORY_PRESETS}")


def kernel_from_settings(s):
    fam = Family.parse(s["kernel.family"])
    if fam is Family.TABULATED:
        path = s.get("kernel.table")
        if not path:
            raise MissingRequired("kernel.family = tabulated needs kernel.table")
        data = np.loadtxt(path, ndmin=2)
        return make_kernel(fam, s=data[:, 0], f=data[:, 1], c0=s.get("kernel.c0"))
    params = {"d1": s["kernel.d1"], "q1": s["kernel.q1"], "c0": s.get("kernel.c0")}
    if fam is Family.STRETCHED:
        params["p1"] = s["kernel.p1"]
    return make_kernel(fam, params)


def build_config(settings):
    """SimConfig from resolved settings; the settings ride along for emission."""
    s = resolve(settings)
    kernel = kernel_from_settings(s)
    L = s["space.L"]
    u0 = u0_profile(s["init.u0"], L, s["init.amplitude"])
    hist = history_profile(s["init.history"], u0)
    mode = s["memory.mode"].lower()
    if mode == "auto":
        mode = "grid"
    cfg = SimConfig(
        kernel=kernel, u0=u0, a0=s["sim.a0"], a1=s["sim.a1"], k=s["memory.k"],
        L=L, N=s["space.N"], scheme_order=s["space.order"], dt=s["sim.dt"],
        T_final=s["sim.T"], u0_history=hist, nonlinear=s["sim.nonlinear"],
        memory_on=s["sim.memory"], s_nodes=s["memory.s_nodes"], s_max=s["memory.s_max"],
        s_spacing=s["memory.ds"],
        history_mode=mode, output_stride=s["sim.stride"], M_S=s["constants.M_S"],
        preset=s["meta.preset"] or "",
    )
    cfg.settings = s
    return cfg


def parse_config(path_or_text):
    """SimConfig from a file path or config text."""
    text = str(path_or_text)
    if "\n" not in text and "=" not in text:
        p = Path(text)
        if not p.exists():
            raise ConfigError(f"config file {text!r} not found")
        text = p.read_text(encoding="utf-8")
    if not text.strip():
        raise ConfigError("empty configuration")
    return build_config(parse_settings(text))


def emit_config(config):
    settings = getattr(config, "settings", None)
    if settings is None:
        raise ConfigError("config was not built from settings and cannot be emitted")
    return emit_settings(settings)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    settings: dict
    expected_regime: str

    def config(self, **overrides):
        s = dict(self.settings)
        s.update(overrides)
        return build_config(s)


_COMMON = {
    "sim.a0": 1.0, "sim.a1": 0.0, "sim.dt": 0.01, "sim.T": 50.0, "sim.nonlinear": True,
    "space.L": 12.0, "space.N": 128, "space.order": 2, "memory.k": 0,
    "memory.s_nodes": 4096, "init.u0": "bump", "init.amplitude": 0.001,
}

PRESETS = {
    "expo": ExperimentPreset("expo", {
        **_COMMON, "kernel.family": "exponential", "kernel.d1": 1.0, "kernel.q1": 1.0,
        # keep the transported past on an exact uniform grid for the whole run:
        # a 1e-12 tail cut is far above the energy levels reached by t = T
        "memory.s_max": 50.0 + math.log(1e12), "memory.s_nodes": 8192,
        "init.history": "constant", "fit.model": "exp", "meta.preset": "expo",
    }, "exponential"),
    "poly": ExperimentPreset("poly", {
        **_COMMON, "kernel.family": "polynomial", "kernel.d1": 1.0, "kernel.q1": 2.0,
        "init.history": "decaying", "fit.model": "xi", "meta.preset": "poly",
    }, "polynomial"),
    "stretched": ExperimentPreset("stretched", {
        **_COMMON, "kernel.family": "stretched", "kernel.d1": 1.0, "kernel.q1": 1.0,
        "kernel.p1": 0.5, "init.history": "decaying", "fit.model": "xi",
        "meta.preset": "stretched",
    }, "stretched"),
}


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def set_key(settings, key, raw):
    """Assign ``key`` from its textual value, with schema checks."""
    if key not in SCHEMA:
        raise UnknownKey(f"unknown key {key!r}")
    out = dict(settings)
    out[key] = _convert(key, raw)
    return out


def isclose_settings(a, b):
    if set(a) != set(b):
        return False
    for k in a:
        x, y = a[k], b[k]
        if isinstance(x, float) and isinstance(y, float):
            if not (x == y or (math.isnan(x) and math.isnan(y))):
                return False
        elif x != y:
            return False
    return True
