"""Monotone gradient ascent with backtracking and Barzilai-Borwein step sizes.

Callers pass variables already scaled to natural resolution units (delay
bins, Doppler bins, degrees) so a unit step is meaningful on every axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AscentResult:
    x: np.ndarray
    f: float
    n_iter: int
    converged: bool
    history: list = field(default_factory=list)


def central_difference(fun, x, steps) -> np.ndarray:
    """Central finite-difference gradient of scalar ``fun`` at ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i, h in enumerate(np.broadcast_to(steps, x.shape)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def gradient_ascent(
    fun_grad,
    x0,
    max_iter: int = 200,
    xtol: float = 1e-7,
    ftol: float = 1e-13,
    step0: float = 1e-3,
    armijo: float = 1e-4,
    max_backtracks: int = 60,
    project=None,
    log_scale: bool = True,
    metric=None,
) -> AscentResult:
    """Maximise ``fun_grad(x) -> (f, grad)`` from ``x0``.

    Every accepted step satisfies the Armijo condition, so the recorded
    objective sequence never decreases. ``project`` optionally maps an
    iterate back into the feasible set (e.g. wrapping periodic variables).

    With ``log_scale`` (default) the ascent runs on log f, which makes step
    sizes independent of the signal power; ``f`` must then be positive.
    The returned ``f`` and ``history`` are always on the original scale.

    ``metric`` is an optional positive-definite matrix approximating the
    negative Hessian; the ascent then runs in the coordinates it whitens.
    """
    if metric is not None:
        R = np.linalg.cholesky(np.asarray(metric, dtype=float)).T
        R_inv = np.linalg.inv(R)
        inner = fun_grad

        def whitened(y):
            f, g = inner(R_inv @ y)
            return f, R_inv.T @ np.asarray(g)

        res = gradient_ascent(
            whitened, R @ np.asarray(x0, dtype=float), max_iter, xtol, ftol, step0,
            armijo, max_backtracks, None, log_scale,
        )
        res.x = R_inv @ res.x
        return res
    if log_scale:
        raw = fun_grad

        def fun_grad(x):
            f, g = raw(x)
            if not f > 0:
                return -np.inf, np.zeros_like(np.asarray(x, dtype=float))
            return math.log(f), np.asarray(g) / f

    res = _ascend(fun_grad, x0, max_iter, xtol, ftol, step0, armijo, max_backtracks, project)
    if log_scale:
        res.f = math.exp(res.f) if np.isfinite(res.f) else 0.0
        res.history = [math.exp(v) if np.isfinite(v) else 0.0 for v in res.history]
    return res


def _ascend(fun_grad, x0, max_iter, xtol, ftol, step0, armijo, max_backtracks, project):
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun_grad(x)
    history = [f]
    step = step0
    for it in range(1, max_iter + 1):
        gn2 = float(g @ g)
        if gn2 == 0.0 or not np.isfinite(gn2):
            return AscentResult(x, f, it - 1, gn2 == 0.0, history)
        for _ in range(max_backtracks):
            x_new = x + step * g
            if project is not None:
                x_new = project(x_new)
            f_new, g_new = fun_grad(x_new)
            if np.isfinite(f_new) and f_new >= f + armijo * step * gn2:
                break
            step *= 0.5
        else:
            return AscentResult(x, f, it - 1, True, history)
        s = x_new - x
        y = g_new - g
        f_old = f
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if np.sqrt(s @ s) < xtol or f - f_old <= ftol * abs(f):
            return AscentResult(x, f, it, True, history)
        sy = float(s @ y)
        step = float(-(s @ s) / sy) if sy < 0 else 2.0 * step
        step = min(max(step, 1e-12), 1e6)
    return AscentResult(x, f, max_iter, False, history)
