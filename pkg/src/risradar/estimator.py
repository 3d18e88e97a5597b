"""GLRT detection and the three-stage delay/Doppler/angle estimator.

Pipeline (:func:`joint_estimate`):

1. split ``Y`` into the ``L`` constant-profile segments and locate the peak
   of the non-coherently integrated delay-Doppler map, then refine it by
   gradient ascent;
2. with delay and Doppler fixed, grid-search the 2D angle objective and
   refine it;
3. scan Doppler on the full GLRT objective around the stage-1 value and run
   a joint 4D ascent from the best point.

All objectives are evaluated through ``z(tau) = c(tau)^H Y``, so one
(N x M) product per delay value is the dominant cost. Gradients are
analytic; :func:`fd_gradient_4d` is the finite-difference reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sp_fft

from .ascent import central_difference, gradient_ascent
from .forward import Observation
from .geometry import (
    SPEED_OF_LIGHT,
    AnglePair,
    PathParams,
    ScenarioConfig,
    doppler_steering,
)
from .crb import _factors as _jacobian_factors
from .schedule import PhaseSchedule, ProfileResponse

DEG = math.pi / 180.0


class DegenerateProfileError(ValueError):
    """The combined Doppler/angle vector h vanishes, so the statistic is undefined."""


@dataclass(frozen=True)
class RefinementSettings:
    """Tuning knobs of the estimator. Steps are in resolution units.

    A delay bin is 1/(N delta_f); a Doppler bin is 1/(M T_s) on the full
    objective and 1/((M/L) T_s) on the segment objective.
    """

    angle_step_deg: float = 1.0
    az_range: tuple | None = None
    el_range: tuple | None = None
    doppler_zero_pad: int = 4
    doppler_search: bool = True
    doppler_search_pad: int = 4
    max_iter: int = 300
    xtol: float = 1e-7
    ftol: float = 1e-14
    fd_delay_bins: float = 1e-3
    fd_doppler_bins: float = 1e-3
    fd_angle_deg: float = 0.01

    def __post_init__(self):
        for name in ("angle_step_deg", "max_iter", "xtol", "fd_delay_bins", "fd_doppler_bins", "fd_angle_deg"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.doppler_zero_pad < 1 or self.doppler_search_pad < 1:
            raise ValueError("zero-padding factors must be >= 1")


@dataclass
class Estimate:
    eta_hat: PathParams
    statistic: float
    stage_trace: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)

    @property
    def all_converged(self) -> bool:
        return all(self.converged.values())

    def to_record(self, wavelength: float) -> dict:
        e = self.eta_hat
        az, el = e.theta.degrees
        return {
            "tau_s": e.tau,
            "range_m": SPEED_OF_LIGHT * e.tau / 2.0,
            "nu_hz": e.nu,
            "velocity_mps": -e.nu * wavelength / 2.0,
            "az_deg": az,
            "el_deg": el,
            "alpha_re": complex(e.alpha).real,
            "alpha_im": complex(e.alpha).imag,
            "statistic": self.statistic,
            "converged": self.all_converged,
        }


@dataclass
class SegmentStack:
    segments: list
    source: np.ndarray | None = field(default=None, repr=False)

    def concatenate(self) -> np.ndarray:
        if self.source is not None:
            return self.source
        return np.concatenate(self.segments, axis=1)


def _as_matrix(Y) -> np.ndarray:
    return Y.Y if isinstance(Y, Observation) else np.asarray(Y)


def segment(Y, n_segments: int) -> SegmentStack:
    """Split the symbol axis into ``n_segments`` equal consecutive blocks."""
    Y = _as_matrix(Y)
    m = Y.shape[1]
    if n_segments < 1 or m % n_segments:
        raise ValueError(f"M={m} is not divisible by L={n_segments}")
    w = m // n_segments
    return SegmentStack([Y[:, l * w:(l + 1) * w] for l in range(n_segments)], Y)


def detect(statistic: float, gamma: float) -> bool:
    """True (H1) iff the statistic exceeds the threshold."""
    if gamma < 0:
        raise ValueError("threshold must be non-negative")
    return bool(statistic > gamma)


def wrap_signed(x: float, period: float) -> float:
    return (x + period / 2.0) % period - period / 2.0


def normalize_angles(az: float, el: float) -> AnglePair:
    """Fold an unconstrained (az, el) iterate back to az in [-pi, pi), el in [-pi/2, pi/2]."""
    el = wrap_signed(el, 2 * math.pi)
    if el > math.pi / 2:
        el, az = math.pi - el, az + math.pi
    elif el < -math.pi / 2:
        el, az = -math.pi - el, az + math.pi
    return AnglePair(wrap_signed(az, 2 * math.pi), el)


class GLRTModel:
    """Cached per-schedule quantities and the objective functions of every stage."""

    def __init__(self, sched: PhaseSchedule, cfg: ScenarioConfig):
        if sched.n_symbols != cfg.n_symbols:
            raise ValueError("schedule length does not match cfg.n_symbols")
        self.sched = sched
        self.cfg = cfg
        self.N = cfg.n_subcarriers
        self.M = cfg.n_symbols
        self.L = sched.n_profiles
        self.reps = sched.reps
        self.df = cfg.subcarrier_spacing
        self.ts = cfg.total_symbol_duration
        self.resp = ProfileResponse(sched, cfg.theta_br, cfg.ris_geometry, cfg.wavelength)
        self._n = np.arange(self.N)
        self._m = np.arange(self.M)
        self._r = np.arange(self.reps)
        self._l = np.arange(self.L)
        self._grids = {}
        # resolution units used to scale ascent variables
        self.delay_bin = 1.0 / (self.N * self.df)
        self.doppler_bin = 1.0 / (self.M * self.ts)
        self.segment_doppler_bin = 1.0 / (self.reps * self.ts)

    # -- delay projection ---------------------------------------------------
    def project_delay(self, Y: np.ndarray, tau: float, grad: bool = False):
        """z = c(tau)^H Y (length M) and optionally dz/dtau."""
        cc = np.exp(2j * np.pi * self.df * tau * self._n)
        if not grad:
            return cc @ Y
        both = np.vstack([cc, (2j * np.pi * self.df) * self._n * cc]) @ Y
        return both[0], both[1]

    # -- full 4D GLRT objective --------------------------------------------
    def h_vector(self, nu: float, az: float, el: float) -> np.ndarray:
        g = np.repeat(self.resp.gains(az, el), self.reps)
        return doppler_steering(nu, self.M, self.ts) * g

    def statistic(self, Y: np.ndarray, tau: float, nu: float, az: float, el: float) -> float:
        h = self.h_vector(nu, az, el)
        hn = float(np.vdot(h, h).real)
        if hn == 0.0:
            raise DegenerateProfileError("h(nu, theta) is identically zero")
        z = self.project_delay(Y, tau)
        return float(abs(z @ h.conj()) ** 2 / hn)

    def objective_4d(self, Y, tau, nu, az, el, grad=True):
        """GLRT objective and its gradient in (tau [s], nu [Hz], az [rad], el [rad])."""
        z, dz = self.project_delay(Y, tau, grad=True)
        g_l, dg_az, dg_el = self.resp.gains_with_grad(az, el)
        d = doppler_steering(nu, self.M, self.ts)
        g = np.repeat(g_l, self.reps)
        h = d * g
        hn = self.reps * float(np.vdot(g_l, g_l).real)
        if hn == 0.0:
            return -np.inf, np.zeros(4)
        hc = h.conj()
        S = z @ hc
        f = abs(S) ** 2 / hn
        if not grad:
            return f, None
        dS_tau = dz @ hc
        dS_nu = (z * (-2j * np.pi * self.ts) * self._m) @ hc
        zdc = z * d.conj()
        dS_az = zdc @ np.repeat(dg_az, self.reps).conj()
        dS_el = zdc @ np.repeat(dg_el, self.reps).conj()
        dhn_az = 2.0 * self.reps * float(np.real(np.vdot(g_l, dg_az)))
        dhn_el = 2.0 * self.reps * float(np.real(np.vdot(g_l, dg_el)))
        Sc = S.conjugate()
        gr = np.array([
            2.0 * (Sc * dS_tau).real / hn,
            2.0 * (Sc * dS_nu).real / hn,
            2.0 * (Sc * dS_az).real / hn - f * dhn_az / hn,
            2.0 * (Sc * dS_el).real / hn - f * dhn_el / hn,
        ])
        return f, gr

    # -- segment (delay-Doppler) objective ----------------------------------
    def objective_dd(self, Y, tau, nu, grad=True, pinned_doppler=False):
        """sum_l |c^H(tau) Y_l d*_{M/L}(nu)|^2 and its gradient in (tau, nu)."""
        z, dz = self.project_delay(Y, tau, grad=True)
        Z = z.reshape(self.L, self.reps)
        dZ = dz.reshape(self.L, self.reps)
        e = np.exp(-2j * np.pi * self.ts * nu * self._r)
        q = Z @ e
        f = float(np.vdot(q, q).real)
        if not grad:
            return f, None
        dq_tau = dZ @ e
        dq_nu = Z @ ((-2j * np.pi * self.ts) * self._r * e)
        gr = np.array([
            2.0 * np.real(np.vdot(q, dq_tau)),
            0.0 if pinned_doppler else 2.0 * np.real(np.vdot(q, dq_nu)),
        ])
        return f, gr

    # -- angle objective ----------------------------------------------------
    def angle_weights(self, Y, tau, nu) -> np.ndarray:
        """w_l such that the angle objective is |sum_l conj(g_l) w_l|^2 / ||g_L||^2."""
        z = self.project_delay(Y, tau)
        Z = z.reshape(self.L, self.reps)
        d_r = np.exp(-2j * np.pi * self.ts * nu * self._r)
        d_l = np.exp(-2j * np.pi * self.ts * nu * self.reps * self._l)
        return d_l * (Z @ d_r)

    def objective_angle(self, w, az, el, grad=True):
        g, dg_az, dg_el = self.resp.gains_with_grad(az, el)
        gn = float(np.vdot(g, g).real)
        if gn == 0.0:
            return -np.inf, np.zeros(2)
        S = np.vdot(g, w)
        f = abs(S) ** 2 / gn
        if not grad:
            return f, None
        Sc = S.conjugate()
        out = []
        for dg in (dg_az, dg_el):
            dS = np.vdot(dg, w)
            dgn = 2.0 * float(np.real(np.vdot(g, dg)))
            out.append(2.0 * (Sc * dS).real / gn - f * dgn / gn)
        return f, np.array(out)

    def angle_grid(self, step_deg: float, az_range, el_range):
        """Grid directions (radians) and their g_L rows, cached per grid spec."""
        key = (step_deg, tuple(az_range), tuple(el_range))
        if key not in self._grids:
            az = np.arange(az_range[0], az_range[1] + 1e-9, step_deg)
            el = np.arange(el_range[0], el_range[1] - 1e-9, step_deg)
            if el.size == 0:
                el = np.array([el_range[0]])
            A, E = np.meshgrid(az * DEG, el * DEG, indexing="ij")
            G = self.resp.gains_many(A.ravel(), E.ravel())
            norms = np.einsum("kl,kl->k", G.conj(), G).real
            self._grids[key] = (A.ravel(), E.ravel(), G, norms)
        return self._grids[key]


_MODEL_CACHE: dict = {}


def model_for(sched: PhaseSchedule, cfg: ScenarioConfig) -> GLRTModel:
    """Memoised :class:`GLRTModel` (schedules are immutable, so identity is a safe key)."""
    key = (id(sched), cfg)
    model = _MODEL_CACHE.get(key)
    if model is None or model.sched is not sched:
        if len(_MODEL_CACHE) > 8:
            _MODEL_CACHE.clear()
        model = GLRTModel(sched, cfg)
        _MODEL_CACHE[key] = model
    return model


def alpha_hat(Y, tau, nu, theta: AnglePair, sched, cfg) -> complex:
    """Least-squares channel gain for given (tau, nu, theta)."""
    model = model_for(sched, cfg)
    Y = _as_matrix(Y)
    h = model.h_vector(nu, theta.az, theta.el)
    hn = float(np.vdot(h, h).real)
    if hn == 0.0:
        raise DegenerateProfileError("h(nu, theta) is identically zero")
    z = model.project_delay(Y, tau)
    return complex(z @ h.conj() / (model.N * hn))


def glrt_statistic(Y, tau, nu, theta: AnglePair, sched, cfg) -> float:
    """|c^H(tau) Y h*(nu, theta)|^2 / ||h(nu, theta)||^2."""
    return model_for(sched, cfg).statistic(_as_matrix(Y), tau, nu, theta.az, theta.el)


def coarse_delay_doppler(stack: SegmentStack, cfg: ScenarioConfig, zero_pad: int = 4, pinned_doppler=False):
    """Non-coherently integrated delay-Doppler map and its peak.

    IFFT across subcarriers matches the exp(-j 2 pi n df tau) delay phase and
    FFT across symbols matches exp(+j 2 pi m T_s nu). Returns
    ``(map, tau0, nu0)``; ``map`` has shape (N, zero_pad * M/L) with Doppler
    bins in FFT order. With ``pinned_doppler`` the map is the (N, 1) delay
    profile of the Doppler-free sum over each segment.
    """
    n_seg = len(stack.segments)
    Y = stack.concatenate()
    n_sub, reps = Y.shape[0], Y.shape[1] // n_seg
    X = sp_fft.ifft(Y, axis=0) * n_sub
    X = X.reshape(n_sub, n_seg, reps)
    if pinned_doppler:
        power = np.abs(X.sum(axis=2)) ** 2
        rd_map = power.sum(axis=1)[:, None]
    else:
        power = np.abs(sp_fft.fft(X, n=zero_pad * reps, axis=2)) ** 2
        rd_map = power.sum(axis=1)
    k, q = np.unravel_index(int(np.argmax(rd_map)), rd_map.shape)
    ts = cfg.total_symbol_duration
    tau0 = k / (n_sub * cfg.subcarrier_spacing)
    nu0 = 0.0 if pinned_doppler else wrap_signed(q / (rd_map.shape[1] * ts), 1.0 / ts)
    return rd_map, tau0, nu0


def _settings_ranges(settings: RefinementSettings, cfg: ScenarioConfig):
    az_range = settings.az_range if settings.az_range is not None else cfg.az_range
    el_range = settings.el_range if settings.el_range is not None else cfg.el_range
    return az_range, el_range


def refine_delay_doppler(stack_or_Y, tau0, nu0, sched, cfg, settings=RefinementSettings(), pinned_doppler=False):
    """Gradient ascent on the segment objective from the coarse peak.

    Returns ``(tau_hat, nu_hat, AscentResult)``.
    """
    Y = stack_or_Y.concatenate() if isinstance(stack_or_Y, SegmentStack) else _as_matrix(stack_or_Y)
    model = model_for(sched, cfg)
    s_tau, s_nu = model.delay_bin, model.segment_doppler_bin

    def fg(x):
        f, g = model.objective_dd(Y, x[0] * s_tau, x[1] * s_nu, pinned_doppler=pinned_doppler)
        return f, g * np.array([s_tau, s_nu])

    res = gradient_ascent(fg, [tau0 / s_tau, nu0 / s_nu], settings.max_iter, settings.xtol, settings.ftol)
    tau = res.x[0] * s_tau % (1.0 / model.df)
    nu = 0.0 if pinned_doppler else wrap_signed(res.x[1] * s_nu, 1.0 / model.ts)
    return tau, nu, res


def estimate_angles(Y, tau_hat, nu_hat, sched, cfg, settings=RefinementSettings()):
    """Grid search then 2D ascent on the angle objective.

    Returns ``(theta_hat, info)`` with the grid winner and ascent result in ``info``.
    """
    Y = _as_matrix(Y)
    model = model_for(sched, cfg)
    w = model.angle_weights(Y, tau_hat, nu_hat)
    az_range, el_range = _settings_ranges(settings, cfg)
    A, E, G, norms = model.angle_grid(settings.angle_step_deg, az_range, el_range)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.abs(G @ w.conj()) ** 2 / norms
    vals[~(norms > 0)] = -np.inf
    k = int(np.argmax(vals))
    start = np.array([A[k], E[k]]) / DEG

    def fg(x):
        f, g = model.objective_angle(w, x[0] * DEG, x[1] * DEG)
        return f, g * DEG

    res = gradient_ascent(fg, start, settings.max_iter, settings.xtol, settings.ftol)
    theta = normalize_angles(res.x[0] * DEG, res.x[1] * DEG)
    info = {"grid_winner_deg": tuple(start), "grid_value": float(vals[k]), "ascent": res}
    return theta, info


def doppler_scan(Y, tau, nu_center, theta: AnglePair, sched, cfg, half_width: float, pad: int = 4):
    """Evaluate the full objective on a fine Doppler grid (FFT) and return the best Doppler.

    The grid spacing is 1/(pad M T_s); only points within ``half_width`` Hz of
    ``nu_center`` are considered.
    """
    model = model_for(sched, cfg)
    Y = _as_matrix(Y)
    z = model.project_delay(Y, tau)
    g = np.repeat(model.resp.gains(theta.az, theta.el), model.reps)
    n_fft = pad * model.M
    spec = np.abs(sp_fft.fft(z * g.conj(), n=n_fft)) ** 2
    nus = np.fft.fftfreq(n_fft, d=model.ts)
    period = 1.0 / model.ts
    offset = np.abs((nus - nu_center + period / 2.0) % period - period / 2.0)
    spec[offset > half_width] = -np.inf
    q = int(np.argmax(spec))
    return float(nus[q])


def curvature_metric(model: GLRTModel, p, free) -> np.ndarray:
    """Fisher-type curvature of the objective at ``p`` for the ``free`` coordinates.

    Gram matrix of the mean derivatives at unit gain with the complex gain
    projected out, restricted to ``free`` indices of (tau, nu, az, el) and
    scaled to resolution units. Used only to precondition the ascent.
    """
    theta = normalize_angles(p[2], p[3])
    left, right = _jacobian_factors(PathParams(1.0 + 0j, p[0] % (1.0 / model.df), p[1], theta), model.sched, model.cfg)
    U = np.column_stack(left)
    V = np.column_stack(right)
    F = np.real((U.conj().T @ U) * (V.conj().T @ V))
    A, B, C = F[:2, :2], F[:2, 2:], F[2:, 2:]
    eff = C - B.T @ np.linalg.solve(A, B)
    scales = np.array([model.delay_bin, model.doppler_bin, DEG, DEG])
    eff = eff * np.outer(scales, scales)
    eff = eff[np.ix_(free, free)]
    eff = 0.5 * (eff + eff.T)
    ridge = 1e-9 * np.trace(eff) / len(free)
    return eff / np.trace(eff) + (ridge / np.trace(eff) + 1e-12) * np.eye(len(free))


def _ascend_4d(Y, model, start, settings, pinned_doppler=False):
    scales = np.array([model.delay_bin, model.doppler_bin, DEG, DEG])
    free = [0, 2, 3] if pinned_doppler else [0, 1, 2, 3]
    p0 = np.asarray(start, dtype=float)

    def full(x):
        p = p0.copy()
        p[free] = x * scales[free]
        return p

    def fg(x):
        p = full(x)
        f, g = model.objective_4d(Y, p[0], p[1], p[2], p[3])
        return f, (g * scales)[free]

    try:
        metric = curvature_metric(model, p0, free)
        np.linalg.cholesky(metric)
    except np.linalg.LinAlgError:
        metric = None
    res = gradient_ascent(
        fg, p0[free] / scales[free], settings.max_iter, settings.xtol, settings.ftol, metric=metric
    )
    res.x = full(res.x)
    return res


def refine_4d(Y, eta_init: PathParams, sched, cfg, settings=RefinementSettings(), pinned_doppler=False) -> Estimate:
    """Joint ascent of the GLRT objective over (tau, nu, az, el) from ``eta_init``.

    With ``settings.doppler_search`` the Doppler start is first re-picked by a
    fine scan of the full objective within one segment-Doppler bin of the
    initial value, which lets the ascent start on the correct lobe.
    """
    Y = _as_matrix(Y)
    model = model_for(sched, cfg)
    th = eta_init.theta
    nu_start = eta_init.nu
    trace = {}
    if settings.doppler_search and not pinned_doppler:
        nu_start = doppler_scan(
            Y, eta_init.tau, eta_init.nu, th, sched, cfg,
            half_width=model.segment_doppler_bin, pad=settings.doppler_search_pad,
        )
        trace["doppler_scan_hz"] = nu_start
    start = [eta_init.tau, 0.0 if pinned_doppler else nu_start, th.az, th.el]
    f0 = model.objective_4d(Y, *start, grad=False)[0]
    res = _ascend_4d(Y, model, start, settings, pinned_doppler)
    p = res.x
    tau = p[0] % (1.0 / model.df)
    nu = 0.0 if pinned_doppler else wrap_signed(p[1], 1.0 / model.ts)
    theta = normalize_angles(p[2], p[3])
    a = alpha_hat(Y, tau, nu, theta, sched, cfg)
    stat = glrt_statistic(Y, tau, nu, theta, sched, cfg)
    trace.update({"initial_statistic": f0, "refined": (tau, nu, *theta.degrees)})
    return Estimate(
        PathParams(a, tau, nu, theta), stat, trace,
        iterations={"refine_4d": res.n_iter}, converged={"refine_4d": res.converged},
    )


def joint_estimate(Y, sched, cfg, settings=RefinementSettings(), pinned_doppler=False) -> Estimate:
    """Full three-stage estimator; with ``pinned_doppler`` Doppler is held at zero throughout."""
    Y = _as_matrix(Y)
    stack = segment(Y, sched.n_profiles)
    rd_map, tau0, nu0 = coarse_delay_doppler(stack, cfg, settings.doppler_zero_pad, pinned_doppler)
    k, q = np.unravel_index(int(np.argmax(rd_map)), rd_map.shape)
    tau1, nu1, dd = refine_delay_doppler(Y, tau0, nu0, sched, cfg, settings, pinned_doppler)
    theta1, ang = estimate_angles(Y, tau1, nu1, sched, cfg, settings)
    est = refine_4d(Y, PathParams(0j, tau1, nu1, theta1), sched, cfg, settings, pinned_doppler)
    est.stage_trace.update({
        "coarse_bin": (int(k), int(q)),
        "coarse": (tau0, nu0),
        "delay_doppler": (tau1, nu1),
        "angle_grid_deg": ang["grid_winner_deg"],
        "angle": theta1.degrees,
    })
    est.iterations.update({"delay_doppler": dd.n_iter, "angle": ang["ascent"].n_iter})
    est.converged.update({"delay_doppler": dd.converged, "angle": ang["ascent"].converged})
    return est


def di_estimate(Y, sched, cfg, settings=RefinementSettings()) -> Estimate:
    """Doppler-ignorant baseline: the same pipeline with nu fixed to 0."""
    return joint_estimate(Y, sched, cfg, settings, pinned_doppler=True)


def fd_gradient_4d(Y, x, sched, cfg, settings=RefinementSettings()) -> np.ndarray:
    """Central-difference gradient of the 4D objective in (s, Hz, rad, rad)."""
    model = model_for(sched, cfg)
    Y = _as_matrix(Y)
    steps = np.array([
        settings.fd_delay_bins * model.delay_bin,
        settings.fd_doppler_bins * model.doppler_bin,
        settings.fd_angle_deg * DEG,
        settings.fd_angle_deg * DEG,
    ])
    return central_difference(lambda p: model.objective_4d(Y, *p, grad=False)[0], np.asarray(x, float), steps)
