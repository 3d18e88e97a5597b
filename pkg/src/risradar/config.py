"""YAML run configuration with explicit physical units.

Example (every key optional; an empty file gives the reference scenario)::

    scenario:
      wavelength: 1.07 cm          # or carrier_frequency: 28 GHz
      tx_power: 30 dBm
      bs_gain: 18.06 dB
      rcs: 2 m2
      p_tgt: 3.5355, 3.5355, 8.6603 m
      v_tgt: 30, 0, 30 mps
      ris_elements: 21 x 21
      ris_spacing: 0.25 wavelength
      subcarrier_spacing: 120 kHz
      n_subcarriers: 1024
      n_symbols: 1120
      m_over_l: 2
    sweep:
      powers: 15, 20, 25, 30, 35 dBm
      m_over_l: [2, 5]
      trials: 200
      master_seed: 0
      estimators: both
      desk: true

Dimensional values must carry a unit; bare numbers are rejected.
"""

from __future__ import annotations

import math
import re
from pathlib import Path

import yaml

from .experiments import SweepConfig, dbm_to_watts
from .geometry import SPEED_OF_LIGHT, ScenarioConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _db(x):
    return 10.0 ** (x / 10.0)


# unit -> converter into internal units (W, linear, m, m/s, deg, Hz, s, W/Hz, m^2)
UNITS = {
    "power": {"dbm": lambda x: dbm_to_watts(x), "dbw": _db, "w": float, "mw": lambda x: x * 1e-3},
    "gain": {"db": _db, "dbi": _db, "lin": float},
    "length": {"m": float, "cm": lambda x: x * 1e-2, "mm": lambda x: x * 1e-3},
    "speed": {"mps": float, "m/s": float, "kmh": lambda x: x / 3.6, "km/h": lambda x: x / 3.6},
    "angle": {"deg": float, "rad": math.degrees},
    "frequency": {"hz": float, "khz": lambda x: x * 1e3, "mhz": lambda x: x * 1e6, "ghz": lambda x: x * 1e9},
    "time": {"s": float, "ms": lambda x: x * 1e-3, "us": lambda x: x * 1e-6, "ns": lambda x: x * 1e-9},
    "power_dbm": {"dbm": float, "dbw": lambda x: x + 30.0, "w": lambda x: 10.0 * math.log10(x * 1e3)},
    "psd": {"dbm/hz": lambda x: dbm_to_watts(x), "w/hz": float},
    "area": {"m2": float, "m^2": float, "dbsm": _db},
    "spacing": {"wavelength": float, "lambda": float},
}

_QUANTITY = re.compile(r"^\s*(?P<num>[-+0-9.eE,\s]*[0-9.])\s*(?P<unit>[A-Za-z/^2]+)\s*$")

# key -> (kind, vector length or None); ints/strings handled separately
SCENARIO_KEYS = {
    "p_bs": ("length", 3),
    "p_ris": ("length", 3),
    "p_tgt": ("length", 3),
    "v_tgt": ("speed", 3),
    "wavelength": ("length", None),
    "carrier_frequency": ("frequency", None),
    "tx_power": ("power", None),
    "bs_gain": ("gain", None),
    "ris_gain": ("gain", None),
    "rcs": ("area", None),
    "subcarrier_spacing": ("frequency", None),
    "cp_duration": ("time", None),
    "noise_psd": ("psd", None),
    "noise_figure": ("gain", None),
    "az_range": ("angle", 2),
    "el_range": ("angle", 2),
    "ris_spacing": ("spacing", None),
}
SCENARIO_INTS = {"n_subcarriers", "n_symbols", "m_over_l", "grid_n_az"}
SWEEP_KEYS = {"powers", "m_over_l", "trials", "master_seed", "estimators", "p_fa", "noise_trials",
              "desk", "n_subcarriers", "n_symbols"}


def parse_quantity(value, kind: str, key: str = "value", length: int | None = None):
    """Parse ``"<number(s)> <unit>"`` (or a list of such strings) into SI floats."""
    table = UNITS[kind]
    if isinstance(value, (list, tuple)):
        if any(isinstance(v, (list, tuple)) for v in value):
            raise ConfigError(f"{key}: nested lists are not allowed")
        parts = [parse_quantity(v, kind, key, None) for v in value]
        out = [p for part in parts for p in (part if isinstance(part, list) else [part])]
    else:
        if isinstance(value, bool) or isinstance(value, (int, float)):
            raise ConfigError(
                f"{key}: missing unit for {value!r} (expected one of {', '.join(sorted(table))})"
            )
        m = _QUANTITY.match(str(value))
        if not m:
            raise ConfigError(f"{key}: cannot parse {value!r} as '<number> <unit>'")
        unit = m.group("unit").lower()
        if unit not in table:
            raise ConfigError(
                f"{key}: unit '{m.group('unit')}' is not a {kind} unit (expected one of {', '.join(sorted(table))})"
            )
        try:
            nums = [float(t) for t in re.split(r"[,\s]+", m.group("num").strip()) if t]
        except ValueError as exc:
            raise ConfigError(f"{key}: bad number in {value!r}") from exc
        out = [table[unit](x) for x in nums]
    if length is None:
        if len(out) != 1:
            raise ConfigError(f"{key}: expected a single value, got {len(out)}")
        return out[0]
    if len(out) != length:
        raise ConfigError(f"{key}: expected {length} values, got {len(out)}")
    return out


def _int(value, key: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{key}: must be >= {minimum}, got {value}")
    return value


def _scenario(section: dict) -> ScenarioConfig:
    unknown = set(section) - set(SCENARIO_KEYS) - SCENARIO_INTS - {"ris_elements"}
    if unknown:
        raise ConfigError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
    if "wavelength" in section and "carrier_frequency" in section:
        raise ConfigError("scenario: give either wavelength or carrier_frequency, not both")
    kw = {}
    for key, value in section.items():
        name = f"scenario.{key}"
        if key in SCENARIO_INTS:
            kw[key] = _int(value, name, 1)
        elif key == "ris_elements":
            m = re.match(r"^\s*(\d+)\s*[xX*]\s*(\d+)\s*$", str(value))
            if not m:
                raise ConfigError(f"{name}: expected '<nx> x <ny>', got {value!r}")
            kw["ris_nx"], kw["ris_ny"] = int(m.group(1)), int(m.group(2))
        else:
            kind, length = SCENARIO_KEYS[key]
            q = parse_quantity(value, kind, name, length)
            if key == "carrier_frequency":
                kw["wavelength"] = SPEED_OF_LIGHT / q
            elif key == "ris_spacing":
                kw["ris_spacing_wavelengths"] = q
            else:
                kw[key] = tuple(q) if length else q
    for key in ("wavelength", "tx_power", "subcarrier_spacing", "rcs", "noise_psd"):
        if key in kw and not kw[key] > 0:
            raise ConfigError(f"scenario.{key}: must be positive")
    try:
        return ScenarioConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc


def _sweep(section: dict, scenario: ScenarioConfig) -> SweepConfig:
    unknown = set(section) - SWEEP_KEYS
    if unknown:
        raise ConfigError(f"unknown sweep key(s): {', '.join(sorted(unknown))}")
    kw = {}
    if section.get("desk"):
        kw.update(n_subcarriers=256, n_symbols=280, trials=200)
    for key, value in section.items():
        name = f"sweep.{key}"
        if key == "desk":
            if not isinstance(value, bool):
                raise ConfigError(f"{name}: expected true/false")
        elif key == "powers":
            if isinstance(value, (list, tuple)):
                vals = [parse_quantity(v, "power_dbm", name) for v in value]
            else:
                m = _QUANTITY.match(str(value))
                n = len(re.split(r"[,\s]+", m.group("num").strip())) if m else 1
                vals = parse_quantity(value, "power_dbm", name, n)
            if not vals:
                raise ConfigError(f"{name}: empty power list")
            kw["powers_dbm"] = tuple(vals)
        elif key == "m_over_l":
            vals = value if isinstance(value, (list, tuple)) else [value]
            kw["m_over_l"] = tuple(_int(v, name, 1) for v in vals)
        elif key in ("trials", "noise_trials", "n_subcarriers", "n_symbols"):
            kw[key] = _int(value, name, 1)
        elif key == "master_seed":
            kw[key] = _int(value, name, 0)
        elif key == "estimators":
            vals = [value] if isinstance(value, str) else list(value)
            if vals == ["both"]:
                vals = ["joint", "di"]
            kw[key] = tuple(vals)
        elif key == "p_fa":
            vals = value if isinstance(value, (list, tuple)) else [value]
            try:
                pf = tuple(float(v) for v in vals)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{name}: expected numbers") from exc
            if not all(0 < p <= 1 for p in pf):
                raise ConfigError(f"{name}: values must lie in (0, 1]")
            kw[key] = pf
    try:
        sweep = SweepConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}") from exc
    check_divisibility(scenario, sweep)
    return sweep


def check_divisibility(scenario: ScenarioConfig, sweep: SweepConfig) -> None:
    m = sweep.n_symbols or scenario.n_symbols
    for ml in sweep.m_over_l:
        if m % ml:
            raise ConfigError(f"M={m} is not divisible by M/L={ml}")


def parse_config(path=None) -> tuple[ScenarioConfig, SweepConfig]:
    """Read a YAML config file into fully resolved (ScenarioConfig, SweepConfig).

    ``path=None`` or an empty file yields the reference defaults.
    """
    data = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: malformed YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(data) - {"scenario", "sweep"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    for sec in ("scenario", "sweep"):
        if data.get(sec) is not None and not isinstance(data[sec], dict):
            raise ConfigError(f"{sec}: must be a mapping")
    scenario = _scenario(data.get("scenario") or {})
    return scenario, _sweep(data.get("sweep") or {}, scenario)


def scenario_from_dict(d: dict) -> ScenarioConfig:
    """Inverse of ``ScenarioConfig.to_dict`` (as stored in run manifests)."""
    d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return ScenarioConfig(**d)


def sweep_from_dict(d: dict) -> SweepConfig:
    d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return SweepConfig(**d)
