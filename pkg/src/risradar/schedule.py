"""Scanning RIS beams and repetitive phase schedules.

A schedule holds ``L`` distinct phase profiles, each applied for ``reps``
consecutive OFDM symbols, so ``M = L * reps``. Holding a profile constant
over a block makes the angle-dependent factor piecewise constant in slow
time, which is what lets Doppler be estimated separately from angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    AnglePair,
    RISGeometry,
    ScenarioConfig,
    combined_steering,
    ris_steering,
    ris_steering_many,
)


@dataclass(frozen=True)
class PhaseSchedule:
    """RIS control matrix ``W`` (N_RIS x M) built from repeated profiles."""

    profiles: np.ndarray  # N_RIS x L
    reps: int
    beam_directions: tuple = ()

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not np.allclose(np.abs(self.profiles), 1.0, atol=1e-12):
            raise ValueError("phase profiles must be unit modulus")

    @property
    def n_profiles(self) -> int:
        return self.profiles.shape[1]

    @property
    def n_symbols(self) -> int:
        return self.n_profiles * self.reps

    @property
    def n_elements(self) -> int:
        return self.profiles.shape[0]

    @property
    def W(self) -> np.ndarray:
        return np.repeat(self.profiles, self.reps, axis=1)

    def to_csv(self, path) -> None:
        """Write the phase angles (radians) as N_RIS rows by M columns."""
        np.savetxt(path, np.angle(self.W), delimiter=",", fmt="%.17g")


def load_schedule_phases(path) -> np.ndarray:
    """Read a schedule CSV back into a complex ``W`` matrix."""
    phases = np.loadtxt(path, delimiter=",", ndmin=2)
    return np.exp(1j * phases)


def design_beam(theta_b: AnglePair, theta_br: AnglePair, geom: RISGeometry, wavelength: float) -> np.ndarray:
    """Phase-conjugate profile steering the two-way response towards ``theta_b``.

    Satisfies ``b(theta_b) @ w == N_RIS``.
    """
    b = combined_steering(theta_b, theta_br, geom, wavelength)
    return np.exp(-1j * np.angle(b))


def grid_shape(n_beams: int, n_az: int | None = None) -> tuple[int, int]:
    """Split ``n_beams`` into an (n_az, n_el) grid.

    Without an override, n_az is the divisor of ``n_beams`` nearest to
    sqrt(2 * n_beams); ties go to the smaller divisor. The azimuth sector is
    twice as wide as the elevation one, hence the factor 2.
    """
    if n_beams < 1:
        raise ValueError("need at least one beam")
    if n_az is not None:
        if n_beams % n_az:
            raise ValueError(f"n_az={n_az} does not divide L={n_beams}")
        return n_az, n_beams // n_az
    target = math.sqrt(2 * n_beams)
    divisors = [k for k in range(1, n_beams + 1) if n_beams % k == 0]
    best = min(divisors, key=lambda k: (abs(k - target), k))
    return best, n_beams // best


def beam_grid(
    n_beams: int,
    az_range: tuple = (-90.0, 90.0),
    el_range: tuple = (0.0, 90.0),
    n_az: int | None = None,
) -> list[AnglePair]:
    """Cell-center directions of a uniform az x el grid, row-major (elevation outer).

    Ranges are in degrees. For prime ``n_beams`` the nearest divisor can
    degenerate to 1 or ``n_beams``; one of the axes then has a single row.
    """
    n_az, n_el = grid_shape(n_beams, n_az)
    az_w = (az_range[1] - az_range[0]) / n_az
    el_w = (el_range[1] - el_range[0]) / n_el
    az_c = az_range[0] + az_w * (np.arange(n_az) + 0.5)
    el_c = el_range[0] + el_w * (np.arange(n_el) + 0.5)
    return [AnglePair.deg(a, e) for e in el_c for a in az_c]


def build_schedule(beams, m: int, reps: int, directions=()) -> PhaseSchedule:
    """Repeat each profile in ``beams`` for ``reps`` consecutive symbols."""
    profiles = np.column_stack([np.asarray(b) for b in beams])
    if profiles.shape[1] * reps != m:
        raise ValueError(
            f"M={m} must equal number of profiles ({profiles.shape[1]}) times reps ({reps})"
        )
    return PhaseSchedule(profiles, reps, tuple(directions))


def scanning_schedule(cfg: ScenarioConfig) -> PhaseSchedule:
    """Beam-scanning schedule covering the configured sector with M/L repetitions."""
    geom = cfg.ris_geometry
    theta_br = cfg.theta_br
    dirs = beam_grid(cfg.n_profiles, cfg.az_range, cfg.el_range, cfg.grid_n_az)
    beams = [design_beam(t, theta_br, geom, cfg.wavelength) for t in dirs]
    return build_schedule(beams, cfg.n_symbols, cfg.m_over_l, dirs)


def effective_gain(
    theta: AnglePair, sched: PhaseSchedule, theta_br: AnglePair, geom: RISGeometry, wavelength: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-symbol gain g (length M) and per-profile gain g_L (length L).

    ``g[m] = (b(theta) @ w_m) ** 2`` evaluated on every column of ``W``.
    """
    b = combined_steering(theta, theta_br, geom, wavelength)
    g = (b @ sched.W) ** 2
    g_l = (b @ sched.profiles) ** 2
    return g, g_l


class ProfileResponse:
    """Fast evaluation of g_L(theta) and its angle derivatives for one schedule.

    Folds a(theta_br) into the profiles once so each evaluation is a single
    N_RIS x L product.
    """

    def __init__(self, sched: PhaseSchedule, theta_br: AnglePair, geom: RISGeometry, wavelength: float):
        self.geom = geom
        self.wavelength = wavelength
        self.k = 2.0 * np.pi / wavelength
        self.folded = ris_steering(theta_br, geom, wavelength)[:, None] * sched.profiles
        self.reps = sched.reps

    def amplitude(self, az: float, el: float) -> np.ndarray:
        """s_l = b(theta) @ w_l, so that g_L = s**2."""
        p = self.geom.element_positions
        ce = math.cos(el)
        a = np.exp(1j * self.k * ce * (math.cos(az) * p[:, 0] + math.sin(az) * p[:, 1]))
        return a @ self.folded

    def gains(self, az: float, el: float) -> np.ndarray:
        return self.amplitude(az, el) ** 2

    def gains_with_grad(self, az: float, el: float):
        """g_L and its partial derivatives with respect to az and el (radians)."""
        p = self.geom.element_positions
        ca, sa, ce, se = math.cos(az), math.sin(az), math.cos(el), math.sin(el)
        phase = self.k * ce * (ca * p[:, 0] + sa * p[:, 1])
        a = np.exp(1j * phase)
        dphase_az = self.k * ce * (-sa * p[:, 0] + ca * p[:, 1])
        dphase_el = -self.k * se * (ca * p[:, 0] + sa * p[:, 1])
        stacked = np.vstack([a, 1j * dphase_az * a, 1j * dphase_el * a]) @ self.folded
        s, ds_az, ds_el = stacked
        return s**2, 2.0 * s * ds_az, 2.0 * s * ds_el

    def gains_many(self, az, el, chunk: int = 2048) -> np.ndarray:
        """g_L for many directions (radians), shape ``(K, L)``; evaluated in chunks."""
        az = np.ravel(az)
        el = np.ravel(el)
        out = np.empty((az.size, self.folded.shape[1]), dtype=complex)
        for start in range(0, az.size, chunk):
            stop = start + chunk
            a = ris_steering_many(az[start:stop], el[start:stop], self.geom, self.wavelength)
            out[start:stop] = (a @ self.folded) ** 2
        return out
