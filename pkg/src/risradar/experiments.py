"""Monte-Carlo harness: RMSE sweeps, threshold calibration, detection sweeps, objective cuts.

Randomness is keyed by tuples ``(master_seed, stream, trial)``, so a trial
draws the same noise whatever the power, worker or execution order:

* stream 0: target-present trials (shared across powers and M/L values)
* stream 1: noise-only trials used to calibrate thresholds
* stream 2: fresh noise-only trials for checking the false-alarm rate
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .crb import crb_at
from .estimator import (
    Estimate,
    RefinementSettings,
    di_estimate,
    joint_estimate,
    model_for,
    wrap_signed,
)
from .forward import make_rng, noise_variance, sample_observation, synthesize_mean
from .geometry import SPEED_OF_LIGHT, PathParams, ScenarioConfig, scene_to_path
from .schedule import PhaseSchedule, scanning_schedule

TARGET_STREAM, CALIBRATION_STREAM, FRESH_NOISE_STREAM = 0, 1, 2
ESTIMATORS = {"joint": joint_estimate, "di": di_estimate}
WORKERS_ENV = "RISRADAR_WORKERS"

RMSE_FIELDS = [
    "power_dbm", "m_over_l", "estimator", "trials",
    "range_rmse_m", "velocity_rmse_mps", "az_rmse_deg", "el_rmse_deg",
    "crb_range_m", "crb_velocity_mps", "crb_az_deg", "crb_el_deg",
]
DETECTION_FIELDS = ["power_dbm", "p_fa", "estimator", "p_d", "gamma", "m_over_l", "trials"]
CRB_FIELDS = ["power_dbm", "range_crb_m", "velocity_crb_mps", "az_crb_deg", "el_crb_deg"]
CUT_FIELDS = ["velocity_mps", "value", "which", "m_over_l"]


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** (p_dbm / 10.0) / 1000.0


def default_powers() -> list:
    return [15.0 + 2.5 * k for k in range(9)]


@dataclass(frozen=True)
class SweepConfig:
    powers_dbm: tuple = tuple(default_powers())
    m_over_l: tuple = (2, 5)
    trials: int = 1000
    master_seed: int = 0
    estimators: tuple = ("joint", "di")
    p_fa: tuple = (1e-2,)
    noise_trials: int = 1000
    n_subcarriers: int | None = None
    n_symbols: int | None = None

    def __post_init__(self):
        if self.trials < 1 or self.noise_trials < 1:
            raise ValueError("trial counts must be >= 1")
        if not all(math.isfinite(p) for p in self.powers_dbm):
            raise ValueError("powers must be finite")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimator(s): {sorted(unknown)}")

    @classmethod
    def desk(cls, **overrides) -> "SweepConfig":
        """Reduced-size sweep: N=256, M=280, 200 trials."""
        base = dict(n_subcarriers=256, n_symbols=280, trials=200)
        base.update(overrides)
        return cls(**base)

    def scenario(self, cfg: ScenarioConfig, m_over_l: int | None = None, power_dbm: float | None = None) -> ScenarioConfig:
        changes = {}
        if self.n_subcarriers is not None:
            changes["n_subcarriers"] = self.n_subcarriers
        if self.n_symbols is not None:
            changes["n_symbols"] = self.n_symbols
        if m_over_l is not None:
            changes["m_over_l"] = m_over_l
        if power_dbm is not None:
            changes["tx_power"] = dbm_to_watts(power_dbm)
        return cfg.replace(**changes) if changes else cfg

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass
class TrialResult:
    seed: tuple
    truth: PathParams
    estimates: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    noise_statistic: float | None = None
    observation: object = None


_SCHEDULES: dict = {}


def schedule_for(cfg: ScenarioConfig) -> PhaseSchedule:
    """Scanning schedule for ``cfg``; transmit power does not affect it, so it is shared across powers."""
    key = cfg.replace(tx_power=1.0)
    if key not in _SCHEDULES:
        if len(_SCHEDULES) > 8:
            _SCHEDULES.clear()
        _SCHEDULES[key] = scanning_schedule(key)
    return _SCHEDULES[key]


def estimate_errors(est: Estimate, truth: PathParams, cfg: ScenarioConfig) -> np.ndarray:
    """(range m, velocity m/s, az deg, el deg) error of one estimate."""
    e = est.eta_hat
    d_tau = wrap_signed(e.tau - truth.tau, 1.0 / cfg.subcarrier_spacing)
    return np.array([
        SPEED_OF_LIGHT / 2.0 * d_tau,
        -(e.nu - truth.nu) * cfg.wavelength / 2.0,
        wrap_signed(math.degrees(e.theta.az - truth.theta.az), 360.0),
        math.degrees(e.theta.el - truth.theta.el),
    ])


def trial_observation(seed, power_dbm: float, cfg: ScenarioConfig, sigma2: float | None = None, target: bool = True):
    """Truth and noisy observation of one trial; both are fixed by ``seed``.

    The gain phase is uniform on [0, 2 pi). ``sigma2`` overrides the
    configured noise power (0 gives a noiseless observation).
    """
    cfg = cfg.replace(tx_power=dbm_to_watts(power_dbm))
    sched = schedule_for(cfg)
    rng = make_rng(seed)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    noise_seed = int(rng.integers(0, 2**63 - 1))
    truth = scene_to_path(cfg, alpha_phase=phase).path
    s2 = noise_variance(cfg) if sigma2 is None else sigma2
    if target:
        mean = synthesize_mean(truth, sched, cfg)
    else:
        mean = np.zeros((cfg.n_subcarriers, cfg.n_symbols), dtype=complex)
    return truth, sample_observation(mean, s2, noise_seed, cfg.digest())


def run_trial(
    seed,
    power_dbm: float,
    cfg: ScenarioConfig,
    estimators=("joint", "di"),
    settings: RefinementSettings = RefinementSettings(),
    sigma2: float | None = None,
    target: bool = True,
    keep_observation: bool = False,
) -> TrialResult:
    """One Monte-Carlo trial at ``power_dbm``: synthesize, estimate, record errors.

    ``target=False`` produces a noise-only trial whose joint statistic is
    stored in ``noise_statistic``. Non-converged estimates are kept (and
    flagged in the Estimate) so RMSEs include outliers.
    """
    truth, obs = trial_observation(seed, power_dbm, cfg, sigma2, target)
    cfg = cfg.replace(tx_power=dbm_to_watts(power_dbm))
    sched = schedule_for(cfg)
    result = TrialResult(tuple(np.atleast_1d(seed).tolist()), truth)
    for name in estimators:
        est = ESTIMATORS[name](obs, sched, cfg, settings)
        result.estimates[name] = est
        result.errors[name] = estimate_errors(est, truth, cfg)
    if not target and "joint" in result.estimates:
        result.noise_statistic = result.estimates["joint"].statistic
    if keep_observation:
        result.observation = obs
    return result


def _worker_count() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_job(job):
    fn, args, kwargs = job
    return fn(*args, **kwargs)


def run_many(jobs, workers: int | None = None) -> list:
    """Evaluate ``(fn, args, kwargs)`` jobs, in parallel when more than one worker is allowed.

    Results come back in job order, so aggregation does not depend on scheduling.
    """
    jobs = list(jobs)
    workers = _worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def rmse(errors) -> np.ndarray:
    """Root-mean-square over trials of an (n_trials, 4) error array; outliers included."""
    e = np.asarray(errors, dtype=float)
    return np.sqrt(np.mean(e**2, axis=0))


@dataclass
class SweepReport:
    rmse_rows: list = field(default_factory=list)
    detection_rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def write(self, out_dir) -> list:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        if self.rmse_rows:
            written.append(write_csv(out_dir / "rmse.csv", RMSE_FIELDS, self.rmse_rows))
        if self.detection_rows:
            written.append(write_csv(out_dir / "detection.csv", DETECTION_FIELDS, self.detection_rows))
        return written


def write_csv(path, fields, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in fields})
    return path


def read_csv(path) -> list:
    """Parse a CSV written by :func:`write_csv`; numeric columns come back as float."""
    def conv(v):
        try:
            return float(v)
        except ValueError:
            return v

    with Path(path).open(newline="") as fh:
        return [{k: conv(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def crb_sweep(cfg: ScenarioConfig, powers_dbm=None, m_over_l: int | None = None) -> list:
    """CRB rows (range m, velocity m/s, az deg, el deg) per transmit power."""
    powers_dbm = default_powers() if powers_dbm is None else powers_dbm
    if m_over_l is not None:
        cfg = cfg.replace(m_over_l=m_over_l)
    sched = schedule_for(cfg)
    rows = []
    for p in powers_dbm:
        c = cfg.replace(tx_power=dbm_to_watts(p))
        rep = crb_at(scene_to_path(c).path, sched, c)
        rows.append({"power_dbm": p, **rep.as_row()})
    return rows


def rmse_sweep(
    sweep: SweepConfig,
    cfg: ScenarioConfig = ScenarioConfig(),
    settings: RefinementSettings = RefinementSettings(),
    sigma2: float | None = None,
    workers: int | None = None,
) -> SweepReport:
    """RMSE per (power, M/L, estimator) over ``sweep.trials`` trials, with CRB columns."""
    report = SweepReport(metadata={
        "version": __version__,
        "config_hash": cfg.digest(),
        "master_seed": sweep.master_seed,
        "sweep": sweep.to_dict(),
    })
    for ml in sweep.m_over_l:
        base = sweep.scenario(cfg, m_over_l=ml)
        crbs = {r["power_dbm"]: r for r in crb_sweep(base, sweep.powers_dbm)}
        for p in sweep.powers_dbm:
            jobs = [
                (run_trial, ((sweep.master_seed, TARGET_STREAM, t), p, base),
                 {"estimators": sweep.estimators, "settings": settings, "sigma2": sigma2})
                for t in range(sweep.trials)
            ]
            results = run_many(jobs, workers)
            for name in sweep.estimators:
                r = rmse([res.errors[name] for res in results])
                c = crbs[p]
                report.rmse_rows.append({
                    "power_dbm": p, "m_over_l": ml, "estimator": name, "trials": sweep.trials,
                    "range_rmse_m": r[0], "velocity_rmse_mps": r[1],
                    "az_rmse_deg": r[2], "el_rmse_deg": r[3],
                    "crb_range_m": c["range_crb_m"], "crb_velocity_mps": c["velocity_crb_mps"],
                    "crb_az_deg": c["az_crb_deg"], "crb_el_deg": c["el_crb_deg"],
                })
    return report


def calibrate_threshold(noise_stats, p_fa: float) -> float:
    """Empirical (1 - p_fa) quantile: the ceil(n * p_fa)-th largest noise-only statistic."""
    stats = np.sort(np.asarray(noise_stats, dtype=float))[::-1]
    n = stats.size
    if not 0 < p_fa <= 1:
        raise ValueError("p_fa must be in (0, 1]")
    if n * p_fa < 1:
        raise ValueError(f"{n} noise-only statistics cannot resolve p_fa={p_fa:g}")
    k = math.ceil(n * p_fa - 1e-9)
    return float(stats[k - 1])


def noise_statistics(
    cfg: ScenarioConfig,
    n_trials: int,
    master_seed: int = 0,
    stream: int = CALIBRATION_STREAM,
    estimator: str = "joint",
    settings: RefinementSettings = RefinementSettings(),
    workers: int | None = None,
) -> np.ndarray:
    """GLRT statistics of the full pipeline on noise-only observations."""
    jobs = [
        (run_trial, ((master_seed, stream, t), 0.0, cfg),
         {"estimators": (estimator,), "settings": settings, "target": False})
        for t in range(n_trials)
    ]
    return np.array([r.estimates[estimator].statistic for r in run_many(jobs, workers)])


def detection_sweep(
    sweep: SweepConfig,
    cfg: ScenarioConfig = ScenarioConfig(),
    p_fa_list=None,
    settings: RefinementSettings = RefinementSettings(),
    workers: int | None = None,
    alpha_zero: bool = False,
) -> SweepReport:
    """P_d per (power, p_fa, estimator) with thresholds calibrated on noise-only runs.

    Requires ``sweep.noise_trials >= 10 / p_fa`` for every requested p_fa.
    ``alpha_zero`` replaces the target by nothing (null check: P_d ~ p_fa).
    """
    p_fa_list = tuple(sweep.p_fa if p_fa_list is None else p_fa_list)
    for pf in p_fa_list:
        if sweep.noise_trials < 10.0 / pf - 1e-9:
            raise ValueError(
                f"p_fa={pf:g} needs at least {math.ceil(10 / pf)} noise-only trials, got {sweep.noise_trials}"
            )
    report = SweepReport(metadata={
        "version": __version__,
        "config_hash": cfg.digest(),
        "master_seed": sweep.master_seed,
        "sweep": sweep.to_dict(),
        "thresholds": {},
    })
    for ml in sweep.m_over_l:
        base = sweep.scenario(cfg, m_over_l=ml)
        for name in sweep.estimators:
            null = noise_statistics(base, sweep.noise_trials, sweep.master_seed, CALIBRATION_STREAM, name, settings, workers)
            gammas = {pf: calibrate_threshold(null, pf) for pf in p_fa_list}
            report.metadata["thresholds"][f"{name}/M_over_L={ml}"] = {str(k): v for k, v in gammas.items()}
            for p in sweep.powers_dbm:
                jobs = [
                    (run_trial, ((sweep.master_seed, TARGET_STREAM, t), p, base),
                     {"estimators": (name,), "settings": settings, "target": not alpha_zero})
                    for t in range(sweep.trials)
                ]
                stats = np.array([r.estimates[name].statistic for r in run_many(jobs, workers)])
                for pf, g in gammas.items():
                    report.detection_rows.append({
                        "power_dbm": p, "p_fa": pf, "estimator": name,
                        "p_d": float(np.mean(stats > g)), "gamma": g,
                        "m_over_l": ml, "trials": sweep.trials,
                    })
    return report


def objective_cut(
    cfg: ScenarioConfig,
    eta_true: PathParams | None = None,
    which: str = "4d",
    velocities=None,
    half_span_mps: float = 40.0,
    step_mps: float = 0.02,
) -> tuple[np.ndarray, np.ndarray]:
    """Noiseless velocity cut of the GLRT ("4d") or segment ("2d") objective.

    All other parameters sit at their true values. Returns
    ``(velocities_mps, values)`` with values normalised to peak 1.
    """
    if eta_true is None:
        eta_true = scene_to_path(cfg).path
    sched = schedule_for(cfg)
    model = model_for(sched, cfg)
    Y = synthesize_mean(eta_true, sched, cfg)
    v0 = -eta_true.nu * cfg.wavelength / 2.0
    if velocities is None:
        velocities = v0 + np.arange(-half_span_mps, half_span_mps + step_mps / 2, step_mps)
    velocities = np.asarray(velocities, dtype=float)
    nus = -2.0 * velocities / cfg.wavelength
    th = eta_true.theta
    if which == "4d":
        vals = [model.objective_4d(Y, eta_true.tau, nu, th.az, th.el, grad=False)[0] for nu in nus]
    elif which == "2d":
        vals = [model.objective_dd(Y, eta_true.tau, nu, grad=False)[0] for nu in nus]
    else:
        raise ValueError("which must be '4d' or '2d'")
    vals = np.asarray(vals)
    return velocities, vals / vals.max()


def nearest_sidelobe(velocities, values, v_peak: float | None = None) -> tuple[float, float]:
    """(|offset| m/s, level) of the local maximum closest to the main peak."""
    v = np.asarray(velocities)
    f = np.asarray(values)
    if v_peak is None:
        v_peak = v[int(np.argmax(f))]
    idx = np.where((f[1:-1] > f[:-2]) & (f[1:-1] >= f[2:]))[0] + 1
    idx = idx[np.abs(v[idx] - v_peak) > 1e-9]
    if idx.size == 0:
        return math.inf, 0.0
    k = idx[int(np.argmin(np.abs(v[idx] - v_peak)))]
    return float(abs(v[k] - v_peak)), float(f[k])
