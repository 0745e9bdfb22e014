"""Hot inner loops, JIT-compiled with numba unless disabled.

Set ``RLSCALING_DISABLE_NUMBA=1`` to run the same functions un-jitted
(pure NumPy/Python). Both paths execute identical code, so results match
bit for bit; only speed differs. ``benchmarks/bench_kernels.py`` compares
the two.
"""

from __future__ import annotations

import os

import numpy as np

_TRUTHY = ("1", "true", "yes", "on")


def numba_enabled() -> bool:
    return os.environ.get("RLSCALING_DISABLE_NUMBA", "").lower() not in _TRUTHY


def _pava_impl(y, w):
    # Weighted pool-adjacent-violators. y, w: float64 arrays of equal
    # length; returns the non-decreasing weighted least-squares fit.
    n = y.shape[0]
    levels = np.empty(n)
    weights = np.empty(n)
    sizes = np.empty(n, np.int64)
    j = -1
    for i in range(n):
        j += 1
        levels[j] = y[i]
        weights[j] = w[i]
        sizes[j] = 1
        while j > 0 and levels[j - 1] > levels[j]:
            total = weights[j - 1] + weights[j]
            levels[j - 1] = (weights[j - 1] * levels[j - 1] + weights[j] * levels[j]) / total
            weights[j - 1] = total
            sizes[j - 1] += sizes[j]
            j -= 1
    out = np.empty(n)
    pos = 0
    for k in range(j + 1):
        for _ in range(sizes[k]):
            out[pos] = levels[k]
            pos += 1
    return out


def _discounted_reverse_sum_impl(rewards, gamma):
    # out[t] = sum_{k>=t} gamma^(k-t) * rewards[k], truncated at the end.
    n = rewards.shape[0]
    out = np.empty(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def _weighted_sse_impl(fit, target, w):
    n = fit.shape[0]
    acc = 0.0
    for i in range(n):
        d = fit[i] - target[i]
        acc += w[i] * d * d
    return acc


_PY_IMPLS = {
    "pava": _pava_impl,
    "discounted_reverse_sum": _discounted_reverse_sum_impl,
    "weighted_sse": _weighted_sse_impl,
}

if numba_enabled():
    from numba import njit

    pava = njit(cache=True)(_pava_impl)
    discounted_reverse_sum = njit(cache=True)(_discounted_reverse_sum_impl)
    weighted_sse = njit(cache=True)(_weighted_sse_impl)
else:  # pragma: no cover - exercised via RLSCALING_DISABLE_NUMBA runs
    pava = _pava_impl
    discounted_reverse_sum = _discounted_reverse_sum_impl
    weighted_sse = _weighted_sse_impl


def get_impls(jit: bool):
    """Return the kernel set for one path; used by the benchmark."""
    if not jit:
        return dict(_PY_IMPLS)
    from numba import njit

    return {name: njit(cache=True)(fn) for name, fn in _PY_IMPLS.items()}
