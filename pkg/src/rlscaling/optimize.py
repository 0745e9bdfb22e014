"""Derivative-free minimization: bounded Nelder-Mead with seeded restarts.

Used by the joint power-law fitter, whose loss is a smooth-ish function of
3-5 parameters. Restarts jitter the simplex around the best point so far;
everything is driven by one seeded generator, so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize


@dataclass(frozen=True)
class SearchConfig:
    max_evals: int = 4000
    restarts: int = 4
    init_step: float = 0.3
    tol_loss: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.max_evals < 100:
            raise ValueError("max_evals must be >= 100")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.tol_loss > 0:
            raise ValueError("tol_loss must be > 0")


@dataclass
class MinimizeResult:
    params: np.ndarray
    loss: float
    evals: int
    converged: bool
    budget_exhausted: bool
    bounds_active: np.ndarray  # per-dimension: optimum within tol of a bound
    trace: list = field(default_factory=list, repr=False)  # best-so-far per eval


def minimize(objective, init, bounds, cfg: SearchConfig) -> MinimizeResult:
    """Minimize ``objective`` within ``bounds`` starting from ``init``.

    ``bounds`` is a sequence of (lo, hi) per dimension and must contain
    ``init``. The returned loss never exceeds ``objective(init)``, no point
    outside the bounds is ever evaluated, and the result is a deterministic
    function of (objective, init, bounds, cfg).
    """
    x0 = np.asarray(init, dtype=np.float64)
    lo = np.array([b[0] for b in bounds], dtype=np.float64)
    hi = np.array([b[1] for b in bounds], dtype=np.float64)
    if x0.shape != lo.shape or np.any(lo >= hi):
        raise ValueError("bounds must be (lo, hi) pairs, one per dimension, with lo < hi")
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError("init must lie within bounds")

    best_x = x0.copy()
    best_f = float(objective(x0))
    if not np.isfinite(best_f):
        raise ValueError("objective is not finite at init")
    evals = 1
    trace = [best_f]

    def wrapped(x):
        nonlocal best_x, best_f, evals
        f = float(objective(x))
        evals += 1
        if np.isfinite(f) and f < best_f:
            best_f = f
            best_x = np.array(x, dtype=np.float64)
        trace.append(best_f)
        return f

    rng = np.random.default_rng(cfg.seed)
    dim = x0.size
    for restart in range(cfg.restarts):
        remaining = cfg.max_evals - evals
        if remaining < dim + 2 or best_f <= cfg.tol_loss:
            break
        base = best_x.copy()
        if restart > 0:
            base = np.clip(base + cfg.init_step * rng.standard_normal(dim), lo, hi)
        simplex = _initial_simplex(base, cfg.init_step, lo, hi)
        _scipy_minimize(
            wrapped,
            base,
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={
                "initial_simplex": simplex,
                "maxfev": remaining,
                "fatol": cfg.tol_loss,
                "xatol": 1e-10,
                "adaptive": dim > 3,
            },
        )

    tol = 1e-9 * np.maximum(1.0, np.abs(hi - lo))
    bounds_active = (np.abs(best_x - lo) <= tol) | (np.abs(best_x - hi) <= tol)
    converged = best_f <= cfg.tol_loss
    return MinimizeResult(
        params=best_x,
        loss=best_f,
        evals=evals,
        converged=converged,
        budget_exhausted=not converged and evals >= cfg.max_evals,
        bounds_active=bounds_active,
        trace=trace,
    )


def _initial_simplex(base, step, lo, hi):
    dim = base.size
    simplex = np.tile(base, (dim + 1, 1))
    for i in range(dim):
        vertex = base.copy()
        vertex[i] = base[i] + step if base[i] + step <= hi[i] else base[i] - step
        simplex[i + 1] = np.clip(vertex, lo, hi)
    return simplex
