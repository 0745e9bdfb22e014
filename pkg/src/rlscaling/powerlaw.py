"""Closed-form algebra of the two-term compute power law.

The law reads ``I**(-beta) = (n_c/N)**alpha_n + (e_c/E)**alpha_e`` where
``I`` is intrinsic performance in units of parameters x interactions,
``N`` is model size and ``E`` is interaction count. Once ``alpha_n``,
``alpha_e`` and ``n_c`` are chosen, ``beta`` and ``e_c`` are pinned by the
frontier consistency conditions::

    1/beta = 1/alpha_n + 1/alpha_e
    1/(n_c*e_c) = (1 + alpha_n/alpha_e)**(1/alpha_n)
                  * (1 + alpha_e/alpha_n)**(1/alpha_e)

These identities are enforced on every constructed :class:`PowerLawFit`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

#: FLOPs in one petaflop/s-day (1e15 FLOP/s for 24 hours).
PFDAY_FLOPS = 1e15 * 24 * 3600

_IDENTITY_RTOL = 1e-9


@dataclass(frozen=True)
class PowerLawFit:
    """Constants of one fitted law plus its validity window.

    ``i_min``/``i_max`` bound the intrinsic-performance range covered by
    the fitted data; ``n_min``/``n_max`` bound the model sizes whose
    curves reach the compute-efficient frontier inside that range.
    Predictions outside these windows are extrapolations and are flagged,
    not rejected.
    """

    alpha_n: float
    alpha_e: float
    n_c: float
    beta: float
    e_c: float
    i_min: float = 0.0
    i_max: float = math.inf
    n_min: float = 0.0
    n_max: float = math.inf

    def __post_init__(self):
        for name in ("alpha_n", "alpha_e", "n_c", "beta", "e_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        beta, e_c = _lemma_constants(self.alpha_n, self.alpha_e, self.n_c)
        if not math.isclose(self.beta, beta, rel_tol=_IDENTITY_RTOL):
            raise ValueError("beta inconsistent with 1/beta = 1/alpha_n + 1/alpha_e")
        if not math.isclose(self.e_c, e_c, rel_tol=_IDENTITY_RTOL):
            raise ValueError("e_c inconsistent with the n_c*e_c identity")
        if not (self.i_min <= self.i_max and self.n_min <= self.n_max):
            raise ValueError("validity ranges must be ordered")

    # -- predictions ----------------------------------------------------

    def intrinsic(self, n, e):
        """Predicted intrinsic performance at model size ``n``, interactions ``e``."""
        n = _positive(n, "n")
        e = _positive(e, "e")
        y = np.exp(self.alpha_n * (math.log(self.n_c) - np.log(n))) + np.exp(
            self.alpha_e * (math.log(self.e_c) - np.log(e))
        )
        return _maybe_scalar(np.exp(-np.log(y) / self.beta))

    def efficient_frontier(self, n):
        """Interactions E at which size ``n`` touches the compute-efficient frontier."""
        return self.cost_frontier(0.0, n)[0]

    def cost_frontier(self, n_env, n):
        """Frontier generalized to an environment cost of ``n_env`` parameters.

        Returns ``(e, c)`` where ``e`` solves
        ``(1 + n_env/n) * alpha_n * (n_c/n)**alpha_n = alpha_e * (e_c/e)**alpha_e``
        and ``c = (n + n_env) * e`` is the total cost. ``n_env = 0``
        reduces exactly to the plain efficient frontier.
        """
        if n_env < 0:
            raise ValueError("n_env must be >= 0")
        n = _positive(n, "n")
        log_term = (
            np.log1p(n_env / n)
            + math.log(self.alpha_n / self.alpha_e)
            + self.alpha_n * (math.log(self.n_c) - np.log(n))
        )
        e = np.exp(math.log(self.e_c) - log_term / self.alpha_e)
        return _maybe_scalar(e), _maybe_scalar((n + n_env) * e)

    def optimal_size(self, c):
        """Model size maximizing intrinsic performance at compute budget ``c``
        (parameters x interactions)."""
        c = _positive(c, "c")
        ratio = self.alpha_n / self.alpha_e
        log_n = (
            math.log(self.n_c)
            + math.log1p(ratio) / self.alpha_n
            + np.log(c) / (1.0 + ratio)
        )
        return _maybe_scalar(np.exp(log_n))

    def optimal_size_pfdays(self, c_pfdays, fppi):
        """Optimal model size for a budget in PF-days, given FLOPs per
        param-interact ``fppi``."""
        if not fppi > 0:
            raise ValueError("fppi must be > 0")
        c = _positive(c_pfdays, "c_pfdays")
        return self.optimal_size(c * PFDAY_FLOPS / fppi)

    def optimal_size_cost(self, c, n_env):
        """Cost-optimal model size when each interaction also costs as much
        as running ``n_env`` parameters; ``c`` is the total budget
        ``(n + n_env) * e``. Solved by bisection on the (strictly
        increasing) frontier cost; ``n_env = 0`` falls back to the exact
        closed form."""
        if n_env == 0:
            return self.optimal_size(c)
        if not c > 0:
            raise ValueError("c must be > 0")
        target = math.log(c)

        def log_cost(log_n):
            n = math.exp(log_n)
            return math.log(self.cost_frontier(n_env, n)[1])

        lo = hi = math.log(self.optimal_size(c))
        while log_cost(lo) > target:
            lo -= 1.0
        while log_cost(hi) < target:
            hi += 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if log_cost(mid) < target:
                lo = mid
            else:
                hi = mid
        return math.exp(0.5 * (lo + hi))

    def limit_intrinsic(self, which, at):
        """Single-term limits of the law.

        ``which="n_inf"``: intrinsic performance at infinite model size as
        a function of interactions ``at``. ``which="e_inf"``: the infinite
        -interactions limit as a function of model size ``at``.
        """
        at = _positive(at, "at")
        if which == "n_inf":
            out = np.exp(self.alpha_e / self.beta * (np.log(at) - math.log(self.e_c)))
        elif which == "e_inf":
            out = np.exp(self.alpha_n / self.beta * (np.log(at) - math.log(self.n_c)))
        else:
            raise ValueError("which must be 'n_inf' or 'e_inf'")
        return _maybe_scalar(out)

    # -- validity-range flags -------------------------------------------

    def intrinsic_in_range(self, i):
        return _maybe_scalar((np.asarray(i) >= self.i_min) & (np.asarray(i) <= self.i_max))

    def size_in_range(self, n):
        return _maybe_scalar((np.asarray(n) >= self.n_min) & (np.asarray(n) <= self.n_max))

    def with_ranges(self, i_min, i_max, n_min, n_max) -> "PowerLawFit":
        return replace(self, i_min=i_min, i_max=i_max, n_min=n_min, n_max=n_max)


def derive_constants(alpha_n, alpha_e, n_c, **ranges) -> PowerLawFit:
    """Build a :class:`PowerLawFit` from the three free constants."""
    if not (alpha_n > 0 and alpha_e > 0 and n_c > 0):
        raise ValueError("alpha_n, alpha_e and n_c must be > 0")
    beta, e_c = _lemma_constants(alpha_n, alpha_e, n_c)
    return PowerLawFit(alpha_n, alpha_e, n_c, beta, e_c, **ranges)


def _lemma_constants(alpha_n, alpha_e, n_c):
    beta = 1.0 / (1.0 / alpha_n + 1.0 / alpha_e)
    log_inv_nc_ec = (
        math.log1p(alpha_n / alpha_e) / alpha_n + math.log1p(alpha_e / alpha_n) / alpha_e
    )
    e_c = math.exp(-log_inv_nc_ec - math.log(n_c))
    return beta, e_c


def intrinsic_range(fit: PowerLawFit, curves) -> tuple[float, float, float, float]:
    """Validity window implied by a fitted curve set.

    ``i_min``/``i_max`` are the extreme predicted intrinsic performances
    over all retained data points. ``n_min``/``n_max`` are the smallest and
    largest tested sizes whose learning curve touches the efficient
    frontier (at ``I = N * E``) inside that window. If no size qualifies,
    the size whose frontier point is closest to the window is used for
    both bounds.
    """
    sizes = []
    i_lo, i_hi = math.inf, -math.inf
    for curve in curves:
        i_vals = fit.intrinsic(curve.model_size, curve.interactions)
        i_lo = min(i_lo, float(np.min(i_vals)))
        i_hi = max(i_hi, float(np.max(i_vals)))
        sizes.append(curve.model_size)
    if not sizes:
        raise ValueError("curve set is empty")
    sizes = np.array(sorted(set(sizes)))
    frontier_i = sizes * np.asarray(fit.efficient_frontier(sizes))
    ok = (frontier_i >= i_lo) & (frontier_i <= i_hi)
    if np.any(ok):
        n_min = float(sizes[ok].min())
        n_max = float(sizes[ok].max())
    else:
        mid = 0.5 * (math.log(i_lo) + math.log(i_hi))
        nearest = sizes[np.argmin(np.abs(np.log(frontier_i) - mid))]
        n_min = n_max = float(nearest)
    return i_lo, i_hi, n_min, n_max


def _positive(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be positive and finite")
    return arr


def _maybe_scalar(arr):
    arr = np.asarray(arr)
    return arr.item() if arr.ndim == 0 else arr
