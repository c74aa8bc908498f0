"""Parameter containers for the two-inverter microgrid and the built-in presets."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace

OMEGA_N = 2.0 * math.pi * 50.0


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


def _require_positive(obj, names, allow_zero=()):
    for name in names:
        v = getattr(obj, name)
        if not math.isfinite(v):
            raise ConfigError(f"{name} must be finite, got {v!r}")
        if name in allow_zero:
            if v < 0:
                raise ConfigError(f"{name} must be non-negative, got {v!r}")
        elif v <= 0:
            raise ConfigError(f"{name} must be positive, got {v!r}")


@dataclass(frozen=True)
class InverterParams:
    R_f: float = 0.1
    L_f: float = 5e-3
    C_f: float = 50e-6
    k_p: float = 6e-5
    k_q: float = 1.5e-4
    tau: float = 31.8e-3
    omega_n: float = OMEGA_N
    V_n: float = 311.0
    K_PV: float = 5.0
    K_IV: float = 10.0
    K_PC: float = 5.0
    K_IC: float = 25.0

    def __post_init__(self):
        # zero droop gain means droop disabled; everything else must be > 0
        _require_positive(self, [f.name for f in fields(self)], allow_zero=("k_p", "k_q"))


@dataclass(frozen=True)
class LineParams:
    R_ik: float = 0.195
    L_ik: float = 0.61e-3

    def __post_init__(self):
        _require_positive(self, ("R_ik", "L_ik"))

    def reactance(self, omega0: float) -> float:
        return omega0 * self.L_ik

    def conductance(self, omega0: float) -> float:
        x = self.reactance(omega0)
        return self.R_ik / (self.R_ik**2 + x**2)

    def susceptance(self, omega0: float) -> float:
        x = self.reactance(omega0)
        return x / (self.R_ik**2 + x**2)

    def sub_conductance(self, omega0: float) -> float:
        """G' of the first-order Taylor line correction; negative when X > R."""
        x = self.reactance(omega0)
        return (self.R_ik**2 - x**2) * self.L_ik / (self.R_ik**2 + x**2) ** 2

    def sub_susceptance(self, omega0: float) -> float:
        x = self.reactance(omega0)
        return 2.0 * self.R_ik * x * self.L_ik / (self.R_ik**2 + x**2) ** 2

    def rx_ratio(self, omega0: float = OMEGA_N) -> float:
        return self.R_ik / self.reactance(omega0)


@dataclass(frozen=True)
class LoadParams:
    R_l: float
    L_l: float

    def __post_init__(self):
        _require_positive(self, ("R_l", "L_l"))


@dataclass(frozen=True)
class MicrogridConfig:
    inverter_i: InverterParams = field(default_factory=InverterParams)
    inverter_k: InverterParams = field(default_factory=InverterParams)
    line: LineParams = field(default_factory=LineParams)
    load_i: LoadParams = field(default_factory=lambda: LoadParams(20.0, 15e-3))
    load_k: LoadParams = field(default_factory=lambda: LoadParams(40.0, 40e-3))
    # frame frequency; replaced by the solved synchronous frequency before analysis
    omega0: float = OMEGA_N

    def __post_init__(self):
        if not (math.isfinite(self.omega0) and self.omega0 > 0):
            raise ConfigError(f"omega0 must be positive, got {self.omega0!r}")

    @property
    def inverters(self) -> tuple[InverterParams, InverterParams]:
        return self.inverter_i, self.inverter_k

    @property
    def loads(self) -> tuple[LoadParams, LoadParams]:
        return self.load_i, self.load_k

    def with_gains(self, k_p: float | None = None, k_q: float | None = None) -> "MicrogridConfig":
        """Equal droop gains on both inverters (``None`` keeps the current value)."""
        def upd(inv):
            return replace(
                inv,
                k_p=inv.k_p if k_p is None else k_p,
                k_q=inv.k_q if k_q is None else k_q,
            )
        return replace(self, inverter_i=upd(self.inverter_i), inverter_k=upd(self.inverter_k))

    def with_omega0(self, omega0: float) -> "MicrogridConfig":
        return replace(self, omega0=float(omega0))

    def with_line(self, line: LineParams) -> "MicrogridConfig":
        return replace(self, line=line)


# line presets
PRESET_LINES = {
    "rx-gg1": LineParams(R_ik=0.641, L_ik=0.26e-3),
    "rx-eq1": LineParams(R_ik=0.195, L_ik=0.61e-3),
    "rx-ll1": LineParams(R_ik=0.4, L_ik=7e-3),
}

PRESET_ALIASES = {"RXgg1": "rx-gg1", "RXeq1": "rx-eq1", "RXll1": "rx-ll1"}


def preset_name(name: str) -> str:
    key = PRESET_ALIASES.get(name, name).lower()
    if key not in PRESET_LINES:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESET_LINES)}")
    return key


def preset_config(name: str, k_p: float | None = None, k_q: float | None = None) -> MicrogridConfig:
    cfg = MicrogridConfig(line=PRESET_LINES[preset_name(name)])
    return cfg.with_gains(k_p, k_q)


# ---------------------------------------------------------------------------
# text configuration

_SECTIONS = {
    "inverter_i": InverterParams,
    "inverter_k": InverterParams,
    "line": LineParams,
    "load_i": LoadParams,
    "load_k": LoadParams,
}


def _valid_keys(cls) -> list[str]:
    return [f.name for f in fields(cls)]


def parse_config(text: str, base: MicrogridConfig | None = None) -> MicrogridConfig:
    """Parse an INI-style config; omitted keys keep the default values."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    cfg = base or MicrogridConfig()
    parts = {name: getattr(cfg, name) for name in _SECTIONS}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]; valid sections: {sorted(_SECTIONS)}")
        cls = _SECTIONS[section]
        valid = _valid_keys(cls)
        updates = {}
        for key, raw in cp.items(section):
            if key not in valid:
                raise ConfigError(f"unknown key {key!r} in [{section}]; valid keys: {valid}")
            try:
                updates[key] = float(raw)
            except ValueError:
                raise ConfigError(f"{key} in [{section}] is not a number: {raw!r}") from None
        try:
            parts[section] = replace(parts[section], **updates)
        except ConfigError as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    return replace(cfg, **parts)


def serialize_config(cfg: MicrogridConfig) -> str:
    lines = []
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        lines.append(f"[{section}]")
        for f in fields(obj):
            lines.append(f"{f.name} = {getattr(obj, f.name)!r}")
        lines.append("")
    return "\n".join(lines)
