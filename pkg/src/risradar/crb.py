"""Fisher information and Cramer-Rao bounds for (alpha, tau, nu, az, el).

Real parameter vector, fixed order::

    [Re alpha, Im alpha, tau (s), nu (Hz), az (rad), el (rad)]

The noiseless mean is an outer product ``alpha c(tau) h(nu, theta)^T`` and
every Jacobian column is again an outer product, which keeps the Fisher
matrix cheap to form at full scale (:func:`fisher_information_factored`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forward import noise_variance
from .geometry import SPEED_OF_LIGHT, PathParams, ScenarioConfig, delay_steering, doppler_steering
from .schedule import PhaseSchedule, ProfileResponse

PARAM_NAMES = ("re_alpha", "im_alpha", "tau", "nu", "az", "el")


class SingularFisherError(np.linalg.LinAlgError):
    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class CRBReport:
    fim: np.ndarray
    crb_diag: np.ndarray
    condition: float
    range_m: float
    velocity_mps: float
    az_deg: float
    el_deg: float

    def as_row(self) -> dict:
        return {
            "range_crb_m": self.range_m,
            "velocity_crb_mps": self.velocity_mps,
            "az_crb_deg": self.az_deg,
            "el_crb_deg": self.el_deg,
        }


def _factors(eta: PathParams, sched: PhaseSchedule, cfg: ScenarioConfig):
    """Left (length N) and right (length M) factors of every Jacobian column."""
    n, m = cfg.n_subcarriers, cfg.n_symbols
    t_s = cfg.total_symbol_duration
    resp = ProfileResponse(sched, cfg.theta_br, cfg.ris_geometry, cfg.wavelength)
    g_l, dg_az, dg_el = resp.gains_with_grad(eta.theta.az, eta.theta.el)
    rep = sched.reps
    g, dg_az, dg_el = np.repeat(g_l, rep), np.repeat(dg_az, rep), np.repeat(dg_el, rep)
    c = delay_steering(eta.tau, n, cfg.subcarrier_spacing)
    d = doppler_steering(eta.nu, m, t_s)
    h = d * g
    a = eta.alpha
    dc_tau = -2j * np.pi * cfg.subcarrier_spacing * np.arange(n) * c
    dh_nu = 2j * np.pi * t_s * np.arange(m) * h
    left = [c, 1j * c, a * dc_tau, a * c, a * c, a * c]
    right = [h, h, h, dh_nu, d * dg_az, d * dg_el]
    return left, right


def mean_jacobian(eta: PathParams, sched: PhaseSchedule, cfg: ScenarioConfig) -> np.ndarray:
    """d vec(Ybar) / d eta, shape ``(N*M, 6)``; vec stacks columns (Fortran order)."""
    left, right = _factors(eta, sched, cfg)
    return np.column_stack([np.outer(u, v).ravel(order="F") for u, v in zip(left, right)])


def fisher_information(J: np.ndarray, sigma2: float) -> np.ndarray:
    """Slepian-Bangs FIM for white circular Gaussian noise: (2/sigma2) Re(J^H J)."""
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    F = 2.0 / sigma2 * np.real(J.conj().T @ J)
    return 0.5 * (F + F.T)


def fisher_information_factored(
    eta: PathParams, sched: PhaseSchedule, cfg: ScenarioConfig, sigma2: float | None = None
) -> np.ndarray:
    """Same matrix as ``fisher_information(mean_jacobian(...))`` without forming J."""
    if sigma2 is None:
        sigma2 = noise_variance(cfg)
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    left, right = _factors(eta, sched, cfg)
    U = np.column_stack(left)
    V = np.column_stack(right)
    gram = (U.conj().T @ U) * (V.conj().T @ V)
    F = 2.0 / sigma2 * np.real(gram)
    return 0.5 * (F + F.T)


def crb_report(fim: np.ndarray, cfg: ScenarioConfig, max_condition: float = 1e13) -> CRBReport:
    """Invert ``fim`` and convert the bounds to range, velocity and degrees.

    The matrix is equilibrated by its diagonal before inversion; a condition
    number above ``max_condition`` raises :class:`SingularFisherError`.
    """
    fim = np.asarray(fim, dtype=float)
    diag = np.diag(fim)
    if np.any(diag <= 0):
        raise SingularFisherError("Fisher matrix has a non-positive diagonal entry", math.inf)
    s = 1.0 / np.sqrt(diag)
    scaled = fim * np.outer(s, s)
    cond = float(np.linalg.cond(scaled))
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularFisherError(f"Fisher matrix is singular (condition {cond:.3e})", cond)
    crb = np.linalg.inv(scaled) * np.outer(s, s)
    var = np.diag(crb).copy()
    return CRBReport(
        fim=fim,
        crb_diag=var,
        condition=cond,
        range_m=SPEED_OF_LIGHT / 2.0 * math.sqrt(var[2]),
        velocity_mps=cfg.wavelength / 2.0 * math.sqrt(var[3]),
        az_deg=math.degrees(math.sqrt(var[4])),
        el_deg=math.degrees(math.sqrt(var[5])),
    )


def crb_at(eta: PathParams, sched: PhaseSchedule, cfg: ScenarioConfig) -> CRBReport:
    return crb_report(fisher_information_factored(eta, sched, cfg), cfg)
