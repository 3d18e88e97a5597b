"""Scene geometry, steering vectors and the RIS-path link budget.

Angles are stored in radians. Use :meth:`AnglePair.deg` to build one from
degrees and :attr:`AnglePair.degrees` to read it back.

Direction convention: a unit vector for (az, el) is
``(cos el cos az, cos el sin az, sin el)`` in the RIS frame, with the RIS
lying in the x-y plane and its boresight along +z.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299792458.0
RIS_PATTERN_EXPONENT = 0.285


@dataclass(frozen=True)
class AnglePair:
    """Azimuth/elevation pair in radians."""

    az: float
    el: float

    def __post_init__(self):
        if not -math.pi - 1e-12 <= self.az <= math.pi + 1e-12:
            raise ValueError(f"azimuth {math.degrees(self.az):.6g} deg outside [-180, 180]")
        if not -math.pi / 2 - 1e-12 <= self.el <= math.pi / 2 + 1e-12:
            raise ValueError(f"elevation {math.degrees(self.el):.6g} deg outside [-90, 90]")

    @classmethod
    def deg(cls, az: float, el: float) -> "AnglePair":
        return cls(math.radians(az), math.radians(el))

    @property
    def degrees(self) -> tuple[float, float]:
        return math.degrees(self.az), math.degrees(self.el)

    def unit_vector(self) -> np.ndarray:
        ce = math.cos(self.el)
        return np.array([ce * math.cos(self.az), ce * math.sin(self.az), math.sin(self.el)])

    @classmethod
    def from_vector(cls, v) -> "AnglePair":
        v = np.asarray(v, dtype=float)
        r = np.linalg.norm(v)
        if r == 0.0:
            raise ValueError("direction of a zero-length vector is undefined")
        return cls(math.atan2(v[1], v[0]), math.asin(np.clip(v[2] / r, -1.0, 1.0)))


@dataclass(frozen=True)
class RISGeometry:
    """Element positions (meters, RIS-centered) in the local horizontal/vertical axes."""

    element_positions: np.ndarray
    spacing_x: float
    spacing_y: float

    @classmethod
    def uniform(cls, nx: int, ny: int, spacing: float) -> "RISGeometry":
        """Uniform rectangular layout of ``nx`` by ``ny`` elements centered at the origin."""
        if nx < 1 or ny < 1:
            raise ValueError("RIS needs at least one element per axis")
        px = (np.arange(nx) - (nx - 1) / 2) * spacing
        py = (np.arange(ny) - (ny - 1) / 2) * spacing
        gx, gy = np.meshgrid(px, py, indexing="ij")
        pos = np.column_stack([gx.ravel(), gy.ravel()])
        pos.setflags(write=False)
        return cls(pos, spacing, spacing)

    @property
    def n_elements(self) -> int:
        return self.element_positions.shape[0]


def _db(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and waveform parameters in SI units (W, Hz, s, m, linear gains).

    Defaults reproduce the reference scenario: RIS at the origin, BS 5 m
    away at (135 deg, 30 deg), target 10 m away at (45 deg, 60 deg).
    """

    p_bs: tuple = (-3.0618, 3.0618, 2.5)
    p_ris: tuple = (0.0, 0.0, 0.0)
    p_tgt: tuple = (3.5355, 3.5355, 8.6603)
    v_tgt: tuple = (30.0, 0.0, 30.0)
    ris_nx: int = 21
    ris_ny: int = 21
    ris_spacing_wavelengths: float = 0.25
    wavelength: float = 0.0107
    tx_power: float = 1.0
    bs_gain: float = _db(18.06)
    ris_gain: float = 1.0
    rcs: float = 2.0
    n_subcarriers: int = 1024
    subcarrier_spacing: float = 120e3
    n_symbols: int = 1120
    cp_duration: float | None = None
    noise_psd: float = _db(-174.0) * 1e-3
    noise_figure: float = _db(8.0)
    m_over_l: int = 2
    az_range: tuple = (-90.0, 90.0)
    el_range: tuple = (0.0, 90.0)
    grid_n_az: int | None = None

    def __post_init__(self):
        if self.n_symbols % self.m_over_l:
            raise ValueError(
                f"M={self.n_symbols} is not divisible by M/L={self.m_over_l}"
            )
        if self.n_subcarriers < 1 or self.n_symbols < 1:
            raise ValueError("N and M must be positive")

    @property
    def symbol_duration(self) -> float:
        """Elementary symbol duration T = 1/delta_f."""
        return 1.0 / self.subcarrier_spacing

    @property
    def cp(self) -> float:
        return self.symbol_duration / 14.0 if self.cp_duration is None else self.cp_duration

    @property
    def total_symbol_duration(self) -> float:
        """T_s = T + T_cp."""
        return self.symbol_duration + self.cp

    @property
    def n_profiles(self) -> int:
        return self.n_symbols // self.m_over_l

    @property
    def ris_geometry(self) -> RISGeometry:
        return RISGeometry.uniform(
            self.ris_nx, self.ris_ny, self.ris_spacing_wavelengths * self.wavelength
        )

    @property
    def theta_br(self) -> AnglePair:
        """Known direction from the RIS towards the BS."""
        return AnglePair.from_vector(np.subtract(self.p_bs, self.p_ris))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}

    def digest(self) -> str:
        """Short stable identifier of this configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class PathParams:
    """Unknowns of the single target path: complex gain, delay (s), Doppler (Hz), angle."""

    alpha: complex
    tau: float
    nu: float
    theta: AnglePair

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("delay must be non-negative")


@dataclass(frozen=True)
class Scene:
    """Path parameters together with the known BS-side geometry they were derived from."""

    path: PathParams
    theta_br: AnglePair
    d_br: float
    d: float
    radial_speed: float = field(default=0.0)


def ris_steering(theta: AnglePair, geom: RISGeometry, wavelength: float) -> np.ndarray:
    """RIS array response a(theta), one unit-modulus entry per element."""
    k = 2.0 * np.pi / wavelength
    ce = math.cos(theta.el)
    p = geom.element_positions
    phase = k * ce * (math.cos(theta.az) * p[:, 0] + math.sin(theta.az) * p[:, 1])
    return np.exp(1j * phase)


def ris_steering_many(az, el, geom: RISGeometry, wavelength: float) -> np.ndarray:
    """Vectorised :func:`ris_steering`; returns shape ``(K, N_RIS)`` for K angle pairs (radians)."""
    az = np.atleast_1d(np.asarray(az, dtype=float))
    el = np.atleast_1d(np.asarray(el, dtype=float))
    k = 2.0 * np.pi / wavelength
    ux = np.cos(el) * np.cos(az)
    uy = np.cos(el) * np.sin(az)
    p = geom.element_positions
    return np.exp(1j * k * (np.outer(ux, p[:, 0]) + np.outer(uy, p[:, 1])))


def combined_steering(
    theta: AnglePair, theta_br: AnglePair, geom: RISGeometry, wavelength: float
) -> np.ndarray:
    """Two-way RIS response b(theta) = a(theta) * a(theta_br), element-wise."""
    return ris_steering(theta, geom, wavelength) * ris_steering(theta_br, geom, wavelength)


def delay_steering(tau: float, n: int, delta_f: float) -> np.ndarray:
    """Frequency-domain response c(tau): entry n is exp(-j 2 pi n delta_f tau)."""
    return np.exp(-2j * np.pi * delta_f * tau * np.arange(n))


def doppler_steering(nu: float, m: int, t_s: float) -> np.ndarray:
    """Slow-time response d(nu): entry m is exp(+j 2 pi m T_s nu)."""
    return np.exp(2j * np.pi * t_s * nu * np.arange(m))


def ris_pattern(theta: AnglePair) -> float:
    """Normalised RIS power pattern F(theta) = cos(el)^0.285."""
    ce = math.cos(theta.el)
    if ce < -1e-15:
        raise ValueError("RIS pattern undefined for cos(elevation) < 0")
    return max(ce, 0.0) ** RIS_PATTERN_EXPONENT


def channel_gain(
    cfg: ScenarioConfig, theta: AnglePair, theta_br: AnglePair, d_br: float, d: float
) -> float:
    """Magnitude of the two-way path gain |alpha| (radar equation through the RIS)."""
    if d_br <= 0 or d <= 0:
        raise ValueError("distances must be positive")
    geom = cfg.ris_geometry
    num = (
        cfg.tx_power
        * cfg.bs_gain**2
        * cfg.ris_gain**2
        * ris_pattern(theta) ** 2
        * ris_pattern(theta_br) ** 2
        * geom.spacing_x**2
        * geom.spacing_y**2
        * cfg.wavelength**2
        * cfg.rcs
    )
    den = (4.0 * np.pi) ** 5 * d_br**4 * d**4
    return math.sqrt(num / den)


def scene_to_path(cfg: ScenarioConfig, alpha_phase: float = 0.0) -> Scene:
    """Convert the Cartesian scene in ``cfg`` into the path parameters seen by the BS.

    The Doppler shift is -2 v_r / lambda, where v_r is the target speed along
    the RIS-to-target direction (positive when receding).
    """
    p_ris = np.asarray(cfg.p_ris, dtype=float)
    to_bs = np.asarray(cfg.p_bs, dtype=float) - p_ris
    to_tgt = np.asarray(cfg.p_tgt, dtype=float) - p_ris
    d_br = float(np.linalg.norm(to_bs))
    d = float(np.linalg.norm(to_tgt))
    if d_br == 0.0 or d == 0.0:
        raise ValueError("BS and target must not coincide with the RIS")
    theta = AnglePair.from_vector(to_tgt)
    theta_br = AnglePair.from_vector(to_bs)
    v_r = float(np.dot(cfg.v_tgt, to_tgt / d))
    tau = 2.0 * (d_br + d) / SPEED_OF_LIGHT
    nu = -2.0 * v_r / cfg.wavelength
    mag = channel_gain(cfg, theta, theta_br, d_br, d)
    alpha = mag * complex(math.cos(alpha_phase), math.sin(alpha_phase))
    return Scene(PathParams(alpha, tau, nu, theta), theta_br, d_br, d, v_r)


def position_from_path(d: float, theta: AnglePair, p_ris: Sequence[float] = (0, 0, 0)) -> np.ndarray:
    """Inverse of the geometric part of :func:`scene_to_path`."""
    return np.asarray(p_ris, dtype=float) + d * theta.unit_vector()


def delay_to_range(tau: float) -> float:
    """One-way RIS-target-equivalent range for reporting: c * tau / 2."""
    return SPEED_OF_LIGHT * tau / 2.0


def doppler_to_velocity(nu: float, wavelength: float) -> float:
    return -nu * wavelength / 2.0
