"""Weighted isotonic (monotone non-decreasing) regression.

The pool-adjacent-violators algorithm gives the exact weighted
least-squares fit; results are wrapped in a :class:`StepFunction` that can
be evaluated either as a right-continuous step or by linear interpolation
between block centers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import pava

INTERPOLATIONS = ("step", "linear_in_x")


@dataclass(frozen=True)
class StepFunction:
    """Non-decreasing piecewise fit stored as (x, level) breakpoints.

    ``xs`` must be strictly increasing and ``levels`` non-decreasing.
    In ``step`` mode, evaluation returns the level of the greatest
    breakpoint <= x (clamped at both ends). In ``linear_in_x`` mode,
    evaluation interpolates linearly between the centers of constant-level
    blocks, again clamped outside the covered range.
    """

    xs: np.ndarray
    levels: np.ndarray
    interpolation: str = "step"

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        levels = np.asarray(self.levels, dtype=np.float64)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "levels", levels)
        if xs.ndim != 1 or xs.shape != levels.shape or xs.size == 0:
            raise ValueError("xs and levels must be equal-length 1-d arrays")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(levels))):
            raise ValueError("breakpoints must be finite")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("xs must be strictly increasing")
        if np.any(np.diff(levels) < 0):
            raise ValueError("levels must be non-decreasing")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")

    def block_centers(self):
        """(centers, levels) of maximal constant-level blocks."""
        starts = np.flatnonzero(np.r_[True, np.diff(self.levels) != 0])
        ends = np.r_[starts[1:], self.levels.size]
        centers = np.array([self.xs[a:b].mean() for a, b in zip(starts, ends)])
        return centers, self.levels[starts]

    def __call__(self, x):
        return evaluate(self, x)


def evaluate(f: StepFunction, x) -> np.ndarray | float:
    """Evaluate a step function at scalar or array ``x``."""
    xq = np.asarray(x, dtype=np.float64)
    if f.interpolation == "step":
        idx = np.clip(np.searchsorted(f.xs, xq, side="right") - 1, 0, f.xs.size - 1)
        out = f.levels[idx]
    else:
        centers, levels = f.block_centers()
        out = np.interp(xq, centers, levels)
    return float(out) if np.isscalar(x) else out


def isotonic_fit(xs, ys, weights=None, interpolation: str = "step") -> StepFunction:
    """Weighted least-squares non-decreasing fit of ``ys`` against ``xs``.

    Parameters
    ----------
    xs : sorted (ascending) abscissae; ties are pre-pooled by weighted mean
    ys : observations
    weights : strictly positive weights (default: all ones)
    interpolation : evaluation mode of the returned StepFunction

    Returns the exact pool-adjacent-violators solution, i.e. the levels
    minimizing ``sum(w * (fit - y)**2)`` over non-decreasing functions.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size == 0:
        raise ValueError("xs and ys must be equal-length 1-d arrays with >= 1 point")
    if weights is None:
        weights = np.ones_like(ys)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != ys.shape:
            raise ValueError("weights must match ys in length")
    if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be strictly positive and finite")
    if np.any(np.diff(xs) < 0):
        raise ValueError("xs must be sorted ascending")

    ux, uy, uw = _pool_ties(xs, ys, weights)
    levels = pava(uy, uw)
    return StepFunction(ux, levels, interpolation=interpolation)


def _pool_ties(xs, ys, ws):
    # Stable pre-pooling of exactly-tied x by weighted mean; makes the
    # solution unique and independent of input order among ties.
    ux, start = np.unique(xs, return_index=True)
    if ux.size == xs.size:
        return xs, ys.copy(), ws.copy()
    idx = np.searchsorted(ux, xs)
    uw = np.zeros(ux.size)
    uy = np.zeros(ux.size)
    np.add.at(uw, idx, ws)
    np.add.at(uy, idx, ws * ys)
    return ux, uy / uw, uw
