"""Synthetic learning-curve families generated from a known power law.

Used for fixtures and recovery tests: curves are produced by evaluating
the law exactly, optionally perturbing intrinsic performance with
multiplicative noise per seed, and mapping through a monotone
return-style transform.
"""

from __future__ import annotations

import math

import numpy as np

from .curves import LearningCurveSet, RunRecord, RunSet, aggregate_seeds
from .powerlaw import PowerLawFit


def logistic_return_transform(i_mid: float, r_max: float = 10.0, slope: float = 0.25):
    """Monotone map from intrinsic performance to a bounded return."""

    def transform(i):
        return r_max / (1.0 + (i_mid / np.asarray(i)) ** slope)

    return transform


def generate_runs(
    fit: PowerLawFit,
    sizes,
    e_range=(1e5, 1e9),
    points_per_size: int = 64,
    transform=None,
    noise_sd: float = 0.0,
    n_seeds: int = 1,
    seed: int = 0,
    family_id: str = "synthetic",
) -> RunSet:
    """Per-seed records sampled exactly from ``fit``.

    ``noise_sd`` is the standard deviation of multiplicative lognormal
    noise applied to intrinsic performance before the metric transform
    (``I * exp(noise_sd * z)``).
    """
    rng = np.random.default_rng(seed)
    e_grid = np.logspace(math.log10(e_range[0]), math.log10(e_range[1]), points_per_size)
    e_grid = np.unique(np.rint(e_grid))  # interaction counts are integers
    if transform is None:
        i_mid = float(np.median(fit.intrinsic(np.median(sizes), e_grid)))
        transform = logistic_return_transform(i_mid)
    records = []
    for n in sizes:
        i_true = np.asarray(fit.intrinsic(n, e_grid))
        for s in range(n_seeds):
            i_obs = i_true
            if noise_sd > 0:
                i_obs = i_true * np.exp(noise_sd * rng.standard_normal(i_true.shape))
            metrics = transform(i_obs)
            records.extend(
                RunRecord(family_id, float(n), s, float(e), float(m))
                for e, m in zip(e_grid, metrics)
            )
    return RunSet.from_records(records)


def generate_curve_set(fit: PowerLawFit, sizes, **kwargs) -> LearningCurveSet:
    """Seed-aggregated form of :func:`generate_runs`."""
    return aggregate_seeds(generate_runs(fit, sizes, **kwargs))


def write_csv(runs: RunSet, path) -> None:
    """Serialize a RunSet in the ingestion CSV schema."""

    def fmt(x):
        return str(int(x)) if float(x).is_integer() else repr(float(x))

    with open(path, "w", newline="") as fh:
        fh.write("family_id,model_size,seed,interactions,metric\n")
        for rec in runs.records:
            fh.write(
                f"{rec.family_id},{fmt(rec.model_size)},{rec.seed},"
                f"{fmt(rec.interactions)},{rec.metric!r}\n"
            )
