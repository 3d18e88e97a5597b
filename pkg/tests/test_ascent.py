import numpy as np
import pytest

from risradar.ascent import central_difference, gradient_ascent


def gaussian_bump(center, scales):
    center, scales = np.asarray(center, float), np.asarray(scales, float)

    def fg(x):
        r = (np.asarray(x) - center) / scales
        f = float(np.exp(-0.5 * r @ r))
        return f, -f * r / scales

    return fg


def test_finds_maximum_and_is_monotone():
    fg = gaussian_bump([1.0, -2.0], [1.0, 3.0])
    res = gradient_ascent(fg, [0.3, 0.5], xtol=1e-10, ftol=1e-16)
    assert res.converged
    assert np.allclose(res.x, [1.0, -2.0], atol=1e-4)
    assert np.all(np.diff(res.history) >= 0)


def test_scale_free_in_log_mode():
    # Multiplying f by a tiny constant must not change the path.
    base = gaussian_bump([0.5], [2.0])

    def tiny(x):
        f, g = base(x)
        return 1e-20 * f, 1e-20 * g

    a = gradient_ascent(base, [3.0])
    b = gradient_ascent(tiny, [3.0])
    assert np.allclose(a.x, b.x) and a.n_iter == b.n_iter
    assert b.f == pytest.approx(1e-20 * a.f)


def test_metric_preconditioning_reaches_same_point():
    fg = gaussian_bump([0.0, 0.0], [1.0, 100.0])
    metric = np.diag([1.0, 1e-4])
    plain = gradient_ascent(fg, [0.5, 40.0], max_iter=2000, xtol=1e-12, ftol=1e-16)
    pre = gradient_ascent(fg, [0.5, 40.0], metric=metric, xtol=1e-12, ftol=1e-16)
    assert np.allclose(pre.x, [0, 0], atol=1e-3)
    assert pre.n_iter <= plain.n_iter


def test_central_difference():
    g = central_difference(lambda x: x[0] ** 2 + 3 * x[1], np.array([2.0, 1.0]), 1e-5)
    assert np.allclose(g, [4.0, 3.0])
