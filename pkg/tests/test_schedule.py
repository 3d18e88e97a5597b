import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from risradar.geometry import AnglePair, RISGeometry, ScenarioConfig, combined_steering
from risradar.schedule import (
    ProfileResponse,
    beam_grid,
    build_schedule,
    design_beam,
    effective_gain,
    grid_shape,
    load_schedule_phases,
    scanning_schedule,
)

WL = 0.0107
GEOM = RISGeometry.uniform(5, 5, WL / 4)
TBR = AnglePair.deg(135, 30)


class TestDesignBeam:
    def test_all_ones_response_gives_all_ones_profile(self):
        geom = RISGeometry(np.zeros((4, 2)), WL / 4, WL / 4)
        w = design_beam(AnglePair.deg(20, 30), TBR, geom, WL)
        assert np.allclose(w, 1.0)

    @given(st.floats(-85, 85), st.floats(5, 85))
    @settings(max_examples=30)
    def test_phase_alignment(self, az, el):
        t = AnglePair.deg(az, el)
        w = design_beam(t, TBR, GEOM, WL)
        assert abs(combined_steering(t, TBR, GEOM, WL) @ w) == pytest.approx(GEOM.n_elements, rel=1e-12)
        assert np.allclose(np.abs(w), 1.0)

    def test_maximality_over_random_directions(self):
        rng = np.random.default_rng(3)
        tb = AnglePair.deg(30, 50)
        w = design_beam(tb, TBR, GEOM, WL)
        peak = abs(combined_steering(tb, TBR, GEOM, WL) @ w)
        for _ in range(200):
            t = AnglePair.deg(rng.uniform(-180, 180), rng.uniform(-90, 90))
            assert abs(combined_steering(t, TBR, GEOM, WL) @ w) <= peak + 1e-9


class TestBeamGrid:
    def test_single_beam(self):
        (b,) = beam_grid(1)
        assert b.degrees == pytest.approx((0.0, 45.0))

    def test_four_beams(self):
        beams = beam_grid(4)
        assert [tuple(np.round(b.degrees, 9)) for b in beams] == [(-45, 22.5), (45, 22.5), (-45, 67.5), (45, 67.5)]

    @pytest.mark.parametrize("L, shape", [(560, (35, 16)), (224, (16, 14)), (140, (14, 10)), (56, (8, 7)), (2, (2, 1))])
    def test_grid_shapes(self, L, shape):
        assert grid_shape(L) == shape

    def test_560_by_enumeration(self):
        target = np.sqrt(2 * 560)
        divisors = [k for k in range(1, 561) if 560 % k == 0]
        assert min(divisors, key=lambda k: abs(k - target)) == 35

    def test_override(self):
        assert grid_shape(560, 28) == (28, 20)
        with pytest.raises(ValueError):
            grid_shape(560, 33)

    def test_cells_inside_ranges(self):
        beams = beam_grid(560)
        deg = np.array([b.degrees for b in beams])
        assert np.all((deg[:, 0] > -90) & (deg[:, 0] < 90))
        assert np.all((deg[:, 1] > 0) & (deg[:, 1] < 90))
        assert len({tuple(d) for d in np.round(deg, 9)}) == 560


class TestBuildSchedule:
    def test_repetition_order(self):
        w1, w2 = np.ones(3), -np.ones(3)
        s = build_schedule([w1, w2], 4, 2)
        assert np.array_equal(s.W, np.column_stack([w1, w1, w2, w2]))

    def test_no_repetition(self):
        beams = [np.exp(1j * np.arange(3) * k) for k in range(4)]
        s = build_schedule(beams, 4, 1)
        assert np.array_equal(s.W, np.column_stack(beams))

    def test_mismatch(self):
        with pytest.raises(ValueError):
            build_schedule([np.ones(3)] * 3, 4, 1)

    def test_scanning_schedule_unit_modulus(self):
        s = scanning_schedule(ScenarioConfig(ris_nx=5, ris_ny=5, n_symbols=40, m_over_l=5))
        assert s.n_profiles == 8 and s.reps == 5 and s.n_symbols == 40
        assert np.allclose(np.abs(s.W), 1.0, atol=1e-12)

    def test_csv_round_trip(self, tmp_path):
        s = scanning_schedule(ScenarioConfig(ris_nx=3, ris_ny=3, n_symbols=8, m_over_l=2))
        s.to_csv(tmp_path / "w.csv")
        assert np.allclose(load_schedule_phases(tmp_path / "w.csv"), s.W, atol=1e-12)


class TestEffectiveGain:
    cfg = ScenarioConfig(ris_nx=5, ris_ny=5, n_symbols=40, m_over_l=5)

    def test_aligned_beam_gain(self):
        s = scanning_schedule(self.cfg)
        t = s.beam_directions[3]
        _, g_l = effective_gain(t, s, self.cfg.theta_br, self.cfg.ris_geometry, self.cfg.wavelength)
        assert abs(g_l[3]) == pytest.approx(25**2, rel=1e-12)

    @given(st.floats(-90, 90), st.floats(0, 90))
    @settings(max_examples=25)
    def test_kronecker_structure(self, az, el):
        s = scanning_schedule(self.cfg)
        g, g_l = effective_gain(AnglePair.deg(az, el), s, self.cfg.theta_br, self.cfg.ris_geometry, self.cfg.wavelength)
        assert np.max(np.abs(g - np.kron(g_l, np.ones(s.reps)))) <= 1e-12 * max(1.0, np.max(np.abs(g)))

    def test_arbitrary_schedule_column_oracle(self):
        rng = np.random.default_rng(0)
        W = np.exp(2j * np.pi * rng.random((25, 6)))
        s = build_schedule(list(W.T), 6, 1)
        t = AnglePair.deg(12, 34)
        g, _ = effective_gain(t, s, TBR, GEOM, WL)
        b = combined_steering(t, TBR, GEOM, WL)
        oracle = np.array([(b @ W[:, m]) ** 2 for m in range(6)])
        assert np.allclose(g, oracle, rtol=1e-12)

    def test_profile_response_matches_and_differentiates(self):
        s = scanning_schedule(self.cfg)
        resp = ProfileResponse(s, self.cfg.theta_br, self.cfg.ris_geometry, self.cfg.wavelength)
        az, el = 0.4, 0.7
        _, g_l = effective_gain(AnglePair(az, el), s, self.cfg.theta_br, self.cfg.ris_geometry, self.cfg.wavelength)
        g, dg_az, dg_el = resp.gains_with_grad(az, el)
        assert np.allclose(g, g_l, rtol=1e-12)
        h = 1e-6
        fd_az = (resp.gains(az + h, el) - resp.gains(az - h, el)) / (2 * h)
        fd_el = (resp.gains(az, el + h) - resp.gains(az, el - h)) / (2 * h)
        scale = np.max(np.abs(dg_az)) + np.max(np.abs(dg_el))
        assert np.max(np.abs(fd_az - dg_az)) < 1e-6 * scale
        assert np.max(np.abs(fd_el - dg_el)) < 1e-6 * scale
        many = resp.gains_many(np.array([az, -0.2]), np.array([el, 0.3]))
        assert np.allclose(many[0], g)
