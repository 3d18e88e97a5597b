import cmath
import math

import numpy as np
import pytest

from risradar.forward import (
    ModelValidityWarning,
    load_observation,
    noise_variance,
    sample_observation,
    save_observation,
    synthesize_mean,
)
from risradar.geometry import PathParams, ScenarioConfig, combined_steering
from risradar.schedule import effective_gain, scanning_schedule

from conftest import random_path, small_config


@pytest.fixture
def setup():
    cfg = small_config()
    sched = scanning_schedule(cfg)
    eta = random_path(np.random.default_rng(5), cfg)
    return cfg, sched, eta


def test_zero_gain_gives_zero_matrix(setup):
    cfg, sched, eta = setup
    Y = synthesize_mean(PathParams(0j, eta.tau, eta.nu, eta.theta), sched, cfg)
    assert np.all(Y == 0)


def test_rank_one(setup):
    cfg, sched, eta = setup
    s = np.linalg.svd(synthesize_mean(eta, sched, cfg), compute_uv=False)
    assert s[1] < 1e-12 * s[0]


def test_entry_oracle(setup):
    cfg, sched, eta = setup
    Y = synthesize_mean(eta, sched, cfg)
    b = combined_steering(eta.theta, cfg.theta_br, cfg.ris_geometry, cfg.wavelength)
    ts = cfg.total_symbol_duration
    for n, m in [(0, 0), (5, 17), (63, 79), (31, 40)]:
        w = sched.W[:, m]
        val = eta.alpha * cmath.exp(-2j * math.pi * n * cfg.subcarrier_spacing * eta.tau) \
            * cmath.exp(2j * math.pi * m * ts * eta.nu) * sum(bi * wi for bi, wi in zip(b, w)) ** 2
        assert abs(Y[n, m] - val) < 1e-10 * abs(val)


def test_energy_identity(setup):
    cfg, sched, eta = setup
    Y = synthesize_mean(eta, sched, cfg)
    g, _ = effective_gain(eta.theta, sched, cfg.theta_br, cfg.ris_geometry, cfg.wavelength)
    assert np.linalg.norm(Y) ** 2 == pytest.approx(abs(eta.alpha) ** 2 * cfg.n_subcarriers * np.linalg.norm(g) ** 2, rel=1e-12)


def test_segment_blocks_are_scaled_doppler_vectors(setup):
    cfg, sched, eta = setup
    Y = synthesize_mean(eta, sched, cfg)
    reps = sched.reps
    ts = cfg.total_symbol_duration
    d_short = np.exp(2j * np.pi * ts * eta.nu * np.arange(reps))
    row = Y[0].reshape(sched.n_profiles, reps)
    scale = row[:, :1]
    assert np.allclose(row, scale * d_short[None, :], rtol=1e-12, atol=1e-12 * np.abs(row).max())


def test_delay_beyond_cp_warns(setup):
    cfg, sched, eta = setup
    with pytest.warns(ModelValidityWarning):
        synthesize_mean(PathParams(eta.alpha, 2 * cfg.cp, eta.nu, eta.theta), sched, cfg)


class TestNoiseVariance:
    def test_reference_value(self):
        # -174 dBm/Hz + 10 log10(1024 * 120 kHz) + 8 dB, converted from dBm to W.
        db = -174 + 10 * math.log10(1024 * 120e3) + 8
        oracle = 10 ** ((db - 30) / 10)
        assert noise_variance(ScenarioConfig()) == pytest.approx(oracle, rel=1e-12)
        assert noise_variance(ScenarioConfig()) == pytest.approx(3.09e-12, rel=2e-3)

    def test_unit_noise_figure(self):
        cfg = ScenarioConfig(noise_figure=1.0)
        assert noise_variance(cfg) == pytest.approx(cfg.noise_psd * cfg.n_subcarriers * cfg.subcarrier_spacing)

    def test_linear_in_spacing(self):
        assert noise_variance(ScenarioConfig(subcarrier_spacing=240e3)) == pytest.approx(2 * noise_variance(ScenarioConfig()))


class TestSampling:
    def test_noiseless(self, setup):
        cfg, sched, eta = setup
        mean = synthesize_mean(eta, sched, cfg)
        assert np.array_equal(sample_observation(mean, 0.0, 1).Y, mean)

    def test_deterministic(self):
        a = sample_observation(np.zeros((8, 8)), 1.0, (3, 0, 7)).Y
        b = sample_observation(np.zeros((8, 8)), 1.0, (3, 0, 7)).Y
        c = sample_observation(np.zeros((8, 8)), 1.0, (3, 0, 8)).Y
        assert np.array_equal(a, b) and not np.array_equal(a, c)

    def test_variance(self):
        Y = sample_observation(np.zeros((100, 1000)), 2.5, 11).Y
        assert np.mean(np.abs(Y) ** 2) == pytest.approx(2.5, rel=0.02)
        assert np.var(Y.real) == pytest.approx(1.25, rel=0.02)
        assert abs(np.mean(Y.real * Y.imag)) < 0.02

    def test_negative_variance(self):
        with pytest.raises(ValueError):
            sample_observation(np.zeros((2, 2)), -1.0, 0)

    @pytest.mark.parametrize("suffix", [".csv", ".bin"])
    def test_save_load_round_trip(self, tmp_path, suffix):
        obs = sample_observation(np.zeros((6, 4)), 1.0, 2, "abc")
        path = tmp_path / f"y{suffix}"
        save_observation(obs, path)
        back = load_observation(path)
        assert np.array_equal(back.Y, obs.Y)
        assert back.sigma2 == obs.sigma2 and back.cfg_hash == "abc"
