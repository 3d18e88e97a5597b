import pytest

from risradar.geometry import AnglePair, PathParams, ScenarioConfig, scene_to_path
from risradar.schedule import scanning_schedule


def tiny_config(**kw) -> ScenarioConfig:
    """N=16 subcarriers, M=8 symbols, L=2 profiles, 3x3 RIS."""
    base = dict(n_subcarriers=16, n_symbols=8, m_over_l=4, ris_nx=3, ris_ny=3)
    base.update(kw)
    return ScenarioConfig(**base)


def small_config(**kw) -> ScenarioConfig:
    """N=64, M=80, L=40, 7x7 RIS: big enough for the full pipeline, small enough to be fast."""
    base = dict(n_subcarriers=64, n_symbols=80, m_over_l=2, ris_nx=7, ris_ny=7)
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture
def tiny():
    cfg = tiny_config()
    return cfg, scanning_schedule(cfg)


@pytest.fixture
def small():
    cfg = small_config()
    return cfg, scanning_schedule(cfg)


@pytest.fixture
def paper_cfg():
    return ScenarioConfig()


def random_path(rng, cfg, alpha_scale=1.0) -> PathParams:
    """Random path with angles inside the scan region and delay below the CP."""
    alpha = alpha_scale * complex(rng.normal(), rng.normal())
    tau = rng.uniform(0.05, 0.9) * cfg.cp
    nu = rng.uniform(-0.4, 0.4) / cfg.total_symbol_duration
    theta = AnglePair.deg(rng.uniform(-70, 70), rng.uniform(15, 75))
    return PathParams(alpha, tau, nu, theta)


def true_path(cfg, phase=0.3) -> PathParams:
    return scene_to_path(cfg, alpha_phase=phase).path


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
