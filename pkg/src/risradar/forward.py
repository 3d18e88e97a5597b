"""Noiseless echo synthesis and noisy observations on the subcarrier x symbol grid."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import PathParams, ScenarioConfig, delay_steering, doppler_steering
from .schedule import PhaseSchedule, effective_gain


class ModelValidityWarning(UserWarning):
    """The round-trip delay exceeds the cyclic prefix, so the per-subcarrier model no longer holds."""


@dataclass(frozen=True)
class Observation:
    Y: np.ndarray
    sigma2: float
    seed: object = None
    cfg_hash: str = ""

    @property
    def shape(self):
        return self.Y.shape


def synthesize_mean(eta: PathParams, sched: PhaseSchedule, cfg: ScenarioConfig) -> np.ndarray:
    """Noiseless N x M echo ``alpha * c(tau) (d(nu) * g(theta))^T``."""
    if eta.tau >= cfg.cp:
        warnings.warn(
            f"round-trip delay {eta.tau:.3e} s is not shorter than the CP ({cfg.cp:.3e} s)",
            ModelValidityWarning,
            stacklevel=2,
        )
    if sched.n_symbols != cfg.n_symbols:
        raise ValueError("schedule length does not match the number of symbols")
    g, _ = effective_gain(eta.theta, sched, cfg.theta_br, cfg.ris_geometry, cfg.wavelength)
    c = delay_steering(eta.tau, cfg.n_subcarriers, cfg.subcarrier_spacing)
    d = doppler_steering(eta.nu, cfg.n_symbols, cfg.total_symbol_duration)
    return eta.alpha * np.outer(c, d * g)


def noise_variance(cfg: ScenarioConfig) -> float:
    """Per-entry noise power N0 * N * delta_f * NF (W)."""
    return cfg.noise_psd * cfg.n_subcarriers * cfg.subcarrier_spacing * cfg.noise_figure


def make_rng(seed) -> np.random.Generator:
    """Generator for an integer seed or a tuple such as ``(master_seed, trial_index)``.

    Tuples map to independent streams through :class:`numpy.random.SeedSequence`,
    so a trial's noise does not depend on which worker runs it.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def complex_noise(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with total variance ``sigma2``."""
    scale = np.sqrt(sigma2 / 2.0)
    z = rng.standard_normal((2,) + tuple(shape))
    return scale * (z[0] + 1j * z[1])


def sample_observation(mean: np.ndarray, sigma2: float, seed, cfg_hash: str = "") -> Observation:
    if sigma2 < 0:
        raise ValueError("noise variance must be non-negative")
    rng = make_rng(seed)
    Y = np.array(mean, dtype=complex, copy=True)
    if sigma2 > 0:
        Y += complex_noise(Y.shape, sigma2, rng)
    return Observation(Y, float(sigma2), seed, cfg_hash)


def save_observation(obs: Observation, path) -> None:
    """Dump ``obs.Y`` row-major with interleaved real/imag parts.

    ``.csv`` gives N rows of 2M numbers; anything else is raw little-endian
    float64. A ``.json`` sidecar records shape and provenance.
    """
    path = Path(path)
    inter = np.empty(obs.Y.shape[:1] + (2 * obs.Y.shape[1],), dtype="<f8")
    inter[:, 0::2] = obs.Y.real
    inter[:, 1::2] = obs.Y.imag
    if path.suffix == ".csv":
        np.savetxt(path, inter, delimiter=",", fmt="%.17g")
    else:
        path.write_bytes(inter.tobytes(order="C"))
    meta = {
        "n_rows": int(obs.Y.shape[0]),
        "n_cols": int(obs.Y.shape[1]),
        "sigma2": obs.sigma2,
        "seed": obs.seed if isinstance(obs.seed, (int, type(None))) else list(obs.seed),
        "cfg_hash": obs.cfg_hash,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))


def load_observation(path, shape=None) -> Observation:
    path = Path(path)
    meta_path = path.with_suffix(path.suffix + ".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    if path.suffix == ".csv":
        inter = np.loadtxt(path, delimiter=",", ndmin=2)
    else:
        if shape is None:
            shape = (meta["n_rows"], meta["n_cols"])
        inter = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(shape[0], 2 * shape[1])
    Y = inter[:, 0::2] + 1j * inter[:, 1::2]
    seed = meta.get("seed")
    if isinstance(seed, list):
        seed = tuple(seed)
    return Observation(Y, meta.get("sigma2", 0.0), seed, meta.get("cfg_hash", ""))
