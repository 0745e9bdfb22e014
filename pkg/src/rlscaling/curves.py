"""Learning-curve ingestion, seed aggregation, windowing and smoothing.

Input records are per-seed (family, model size, interactions, metric)
rows. They are aggregated into per-size curves of seed means with sample
standard errors, optionally windowed in interactions, and smoothed with a
Gaussian kernel in log10(interactions) before fitting.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

METRIC_KINDS = ("return", "fail_ratio_source", "trueskill")
CSV_COLUMNS = ("family_id", "model_size", "seed", "interactions", "metric")


class CurveDataError(ValueError):
    """Malformed input data (parse failures, bad values, duplicates)."""


class GridAlignmentError(CurveDataError):
    """Seeds of one (family, size) cannot be aligned on a common grid."""


@dataclass(frozen=True)
class RunRecord:
    family_id: str
    model_size: float
    seed: int
    interactions: float
    metric: float
    metric_kind: str = "return"


@dataclass(frozen=True)
class RunSet:
    """Validated per-seed records, grouped by (family, size, seed)."""

    records: tuple[RunRecord, ...]
    metric_kind: str = "return"
    negated: bool = False

    @classmethod
    def from_records(cls, records, metric_kind="return", negated=False) -> "RunSet":
        if metric_kind not in METRIC_KINDS:
            raise CurveDataError(f"metric_kind must be one of {METRIC_KINDS}")
        groups: dict[tuple, list[RunRecord]] = {}
        for rec in records:
            if not rec.model_size > 0:
                raise CurveDataError(f"model_size must be > 0, got {rec.model_size}")
            if not rec.interactions > 0:
                raise CurveDataError(f"interactions must be > 0, got {rec.interactions}")
            if not math.isfinite(rec.metric):
                raise CurveDataError(f"metric must be finite, got {rec.metric}")
            groups.setdefault((rec.family_id, rec.model_size, rec.seed), []).append(rec)
        ordered = []
        for key in sorted(groups):
            runs = sorted(groups[key], key=lambda r: r.interactions)
            for a, b in zip(runs, runs[1:]):
                if a.interactions == b.interactions:
                    raise CurveDataError(
                        f"duplicate row for family={key[0]} size={key[1]:g} "
                        f"seed={key[2]} interactions={a.interactions:g}"
                    )
            ordered.extend(runs)
        return cls(tuple(ordered), metric_kind=metric_kind, negated=negated)

    def __len__(self):
        return len(self.records)

    def groups(self) -> dict[tuple, list[RunRecord]]:
        out: dict[tuple, list[RunRecord]] = {}
        for rec in self.records:
            out.setdefault((rec.family_id, rec.model_size, rec.seed), []).append(rec)
        return out


@dataclass(frozen=True)
class LearningCurve:
    """Seed-aggregated curve for one model size."""

    model_size: float
    interactions: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_seeds: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.interactions, dtype=np.float64)
        object.__setattr__(self, "interactions", e)
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=np.float64))
        object.__setattr__(self, "n_seeds", np.asarray(self.n_seeds, dtype=np.int64))
        if not self.model_size > 0:
            raise CurveDataError("model_size must be > 0")
        if e.size == 0 or np.any(np.diff(e) <= 0):
            raise CurveDataError("interactions must be non-empty and strictly increasing")
        if np.any(self.stderr < 0):
            raise CurveDataError("stderr must be >= 0")
        if np.any(self.n_seeds < 1):
            raise CurveDataError("n_seeds must be >= 1")

    def __len__(self):
        return self.interactions.size


@dataclass(frozen=True)
class SmoothingConfig:
    points_per_decade: int = 12
    target_residual_ratio: float = 1.0
    min_bandwidth_decades: float = 0.05

    def __post_init__(self):
        if self.points_per_decade < 4:
            raise ValueError("points_per_decade must be >= 4")
        if not 0 < self.target_residual_ratio <= 2:
            raise ValueError("target_residual_ratio must be in (0, 2]")
        if not self.min_bandwidth_decades > 0:
            raise ValueError("min_bandwidth_decades must be > 0")


@dataclass(frozen=True)
class LearningCurveSet:
    """Curves keyed by (family_id, model_size); one metric kind per set."""

    family_ids: tuple[str, ...]
    curves: tuple[LearningCurve, ...]
    metric_kind: str = "return"
    negated: bool = False
    dropped: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if len(self.family_ids) != len(self.curves):
            raise ValueError("family_ids and curves must be parallel")
        keys = [(f, c.model_size) for f, c in zip(self.family_ids, self.curves)]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (family, model_size) curve")

    def __iter__(self):
        return iter(self.curves)

    def __len__(self):
        return len(self.curves)

    def families(self) -> tuple[str, ...]:
        seen = dict.fromkeys(self.family_ids)
        return tuple(seen)

    def family(self, family_id: str) -> "LearningCurveSet":
        pairs = [
            (f, c) for f, c in zip(self.family_ids, self.curves) if f == family_id
        ]
        if not pairs:
            raise KeyError(family_id)
        return replace(
            self,
            family_ids=tuple(f for f, _ in pairs),
            curves=tuple(c for _, c in pairs),
            dropped=tuple(d for d in self.dropped if d[0] == family_id),
        )

    def sizes(self) -> tuple[float, ...]:
        return tuple(sorted({c.model_size for c in self.curves}))

    def map_curves(self, fn, dropped_extra=()) -> "LearningCurveSet":
        fams, kept, dropped = [], [], list(self.dropped) + list(dropped_extra)
        for f, c in zip(self.family_ids, self.curves):
            out = fn(c)
            if out is None:
                dropped.append((f, c.model_size))
            else:
                fams.append(f)
                kept.append(out)
        return replace(
            self, family_ids=tuple(fams), curves=tuple(kept), dropped=tuple(dropped)
        )


# -- ingestion -----------------------------------------------------------


def load_runs(path, format=None, metric_kind="return", negate_metric=False) -> RunSet:
    """Load per-seed records from CSV or JSON.

    CSV must carry the exact header columns
    ``family_id,model_size,seed,interactions,metric`` (extra columns are
    ignored); the JSON form is an array of objects with the same keys.
    Rows duplicating a (family, size, seed, interactions) key are
    rejected, as are non-positive sizes or interaction counts.
    """
    path = Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    if format == "csv":
        rows = _read_csv(path)
    elif format == "json":
        rows = _read_json(path)
    else:
        raise CurveDataError(f"unknown format {format!r}")
    sign = -1.0 if negate_metric else 1.0
    records = [
        RunRecord(
            family_id=fam,
            model_size=size,
            seed=seed,
            interactions=inter,
            metric=sign * metric,
            metric_kind=metric_kind,
        )
        for fam, size, seed, inter, metric in rows
    ]
    return RunSet.from_records(records, metric_kind=metric_kind, negated=negate_metric)


def _read_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return rows  # empty file -> empty RunSet
        header = [h.strip() for h in header]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise CurveDataError(f"{path}: line 1: missing columns {missing}")
        idx = {c: header.index(c) for c in CSV_COLUMNS}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise CurveDataError(f"{path}: line {lineno}: expected {len(header)} fields")
            try:
                rows.append(_parse_row({c: row[idx[c]] for c in CSV_COLUMNS}))
            except (ValueError, CurveDataError) as exc:
                raise CurveDataError(f"{path}: line {lineno}: {exc}") from None
    return rows


def _read_json(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CurveDataError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, list):
        raise CurveDataError(f"{path}: expected a JSON array of records")
    rows = []
    for i, obj in enumerate(data):
        missing = [c for c in CSV_COLUMNS if c not in obj]
        if missing:
            raise CurveDataError(f"{path}: record {i}: missing keys {missing}")
        try:
            rows.append(_parse_row(obj))
        except (ValueError, CurveDataError) as exc:
            raise CurveDataError(f"{path}: record {i}: {exc}") from None
    return rows


def _parse_row(cells):
    fam = str(cells["family_id"]).strip()
    size = float(cells["model_size"])
    seed = int(cells["seed"])
    inter = float(cells["interactions"])
    metric = float(cells["metric"])
    if not size > 0:
        raise ValueError(f"model_size must be > 0, got {size:g}")
    if not inter > 0:
        raise ValueError(f"interactions must be > 0, got {inter:g}")
    if not math.isfinite(metric):
        raise ValueError("metric must be finite")
    return fam, size, seed, inter, metric


# -- aggregation ---------------------------------------------------------


def aggregate_seeds(runs: RunSet, trim: int = 0) -> LearningCurveSet:
    """Aggregate seeds of each (family, size) into mean/stderr curves.

    Seeds must share a common interactions grid up to half a (log-scale)
    grid step. ``trim=k`` drops the k highest and k lowest seed values at
    each grid point before averaging (applied only where more than 2k
    seeds are present), matching the middle-m-of-n seed convention.
    """
    if trim < 0:
        raise ValueError("trim must be >= 0")
    by_size: dict[tuple, dict[int, list[RunRecord]]] = {}
    for (fam, size, seed), recs in runs.groups().items():
        by_size.setdefault((fam, size), {})[seed] = recs
    fams, curves = [], []
    for (fam, size), seed_map in sorted(by_size.items()):
        grid, columns = _align_seed_grids(fam, size, seed_map)
        means, errs, counts = [], [], []
        for values in columns:
            vals = np.sort(np.asarray(values))
            if trim and vals.size > 2 * trim:
                vals = vals[trim : vals.size - trim]
            means.append(vals.mean())
            errs.append(vals.std(ddof=1) / math.sqrt(vals.size) if vals.size > 1 else 0.0)
            counts.append(vals.size)
        fams.append(fam)
        curves.append(LearningCurve(size, grid, means, errs, counts))
    return LearningCurveSet(
        tuple(fams),
        tuple(curves),
        metric_kind=runs.metric_kind,
        negated=runs.negated,
    )


def _align_seed_grids(fam, size, seed_map):
    # Reference grid: the seed with the most points. Other seeds join a
    # grid point when within half a local log-step; a seed landing twice
    # on one point, or off every point, cannot be aligned.
    ref_seed = max(seed_map, key=lambda s: (len(seed_map[s]), -s))
    ref = np.array([r.interactions for r in seed_map[ref_seed]])
    log_ref = np.log10(ref)
    if ref.size > 1:
        steps = np.diff(log_ref)
        half = np.r_[steps, steps[-1]] / 2.0
    else:
        half = np.array([np.inf])
    columns = [[] for _ in ref]
    for seed in sorted(seed_map):
        taken = set()
        for rec in seed_map[seed]:
            pos = int(np.argmin(np.abs(log_ref - math.log10(rec.interactions))))
            if abs(log_ref[pos] - math.log10(rec.interactions)) > half[pos] or pos in taken:
                raise GridAlignmentError(
                    f"family={fam} size={size:g}: seed {seed} has interactions="
                    f"{rec.interactions:g} that does not align with the seed grid"
                )
            taken.add(pos)
            columns[pos].append(rec.metric)
    keep = [i for i, col in enumerate(columns) if col]
    return ref[keep], [columns[i] for i in keep]


# -- windowing -----------------------------------------------------------


def exclude_early(curve_set: LearningCurveSet, threshold: float) -> LearningCurveSet:
    """Drop all points with interactions < threshold; empty curves are
    removed and recorded in ``dropped``."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    return curve_set.map_curves(lambda c: _window(c, threshold, math.inf))


def truncate_late(curve_set: LearningCurveSet, threshold: float) -> LearningCurveSet:
    """Companion of :func:`exclude_early`: drop points with interactions > threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    return curve_set.map_curves(lambda c: _window(c, 0.0, threshold))


def _window(curve, lo, hi):
    keep = (curve.interactions >= lo) & (curve.interactions <= hi)
    if not np.any(keep):
        return None
    return LearningCurve(
        curve.model_size,
        curve.interactions[keep],
        curve.mean[keep],
        curve.stderr[keep],
        curve.n_seeds[keep],
    )


# -- smoothing -----------------------------------------------------------


def smooth(curve: LearningCurve, cfg: SmoothingConfig = SmoothingConfig()) -> LearningCurve:
    """Gaussian kernel regression in log10(interactions).

    The output lies on a uniform log grid spanning exactly the input
    range (no extrapolation) at ``points_per_decade`` density. A single
    global bandwidth is chosen by bisection as the largest value keeping
    the RMS deviation from the raw means at or below
    ``target_residual_ratio`` times the median stderr, floored at
    ``min_bandwidth_decades``. Output stderr is propagated through the
    kernel weights.
    """
    if len(curve) < 4:
        raise CurveDataError("smoothing needs at least 4 points")
    x = np.log10(curve.interactions)
    y = curve.mean
    span = x[-1] - x[0]
    target = cfg.target_residual_ratio * float(np.median(curve.stderr))

    bw_lo = cfg.min_bandwidth_decades
    bw_hi = max(span, bw_lo * 2)
    if target > 0 and _smooth_rms(x, y, bw_hi) > target:
        lo, hi = bw_lo, bw_hi
        for _ in range(40):
            mid = math.sqrt(lo * hi)
            if _smooth_rms(x, y, mid) <= target:
                lo = mid
            else:
                hi = mid
        bandwidth = lo
    elif target > 0:
        bandwidth = bw_hi
    else:
        bandwidth = bw_lo

    n_out = max(int(math.ceil(span * cfg.points_per_decade)) + 1, 2)
    grid = np.linspace(x[0], x[-1], n_out)
    weights = _kernel_weights(grid, x, bandwidth)
    mean_out = weights @ y
    stderr_out = np.sqrt((weights**2) @ (curve.stderr**2))
    seeds_out = np.rint(weights @ curve.n_seeds).astype(int)
    return LearningCurve(
        curve.model_size, 10.0**grid, mean_out, stderr_out, np.maximum(seeds_out, 1)
    )


def smooth_set(curve_set: LearningCurveSet, cfg: SmoothingConfig) -> LearningCurveSet:
    return curve_set.map_curves(lambda c: smooth(c, cfg))


def _kernel_weights(grid, x, bandwidth):
    z = (grid[:, None] - x[None, :]) / bandwidth
    w = np.exp(-0.5 * z * z)
    return w / w.sum(axis=1, keepdims=True)


def _smooth_rms(x, y, bandwidth):
    fitted = _kernel_weights(x, x, bandwidth) @ y
    return float(np.sqrt(np.mean((fitted - y) ** 2)))
