"""Joint fit of the power-law constants and the metric-to-performance map.

An outer derivative-free search proposes (alpha_n, alpha_e, n_c); beta and
e_c follow from the frontier identities. For each proposal the per-point
target ``log I = -(1/beta) * log[(n_c/N)**alpha_n + (e_c/E)**alpha_e]`` is
fitted against the observed metric by an inner regression - monotone
(isotonic) by default, or one of the parametric natural-metric forms - and
the weighted squared error of that inner fit is the search loss. Data is
weighted in proportion to 1/E (normalized), giving equal mass per decade
of interactions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import pava, weighted_sse
from .curves import LearningCurveSet
from .isotonic import StepFunction
from .optimize import SearchConfig, minimize
from .powerlaw import PowerLawFit, derive_constants, intrinsic_range

METRIC_FORMS = (
    "isotonic",
    "fail_ratio",
    "exp_trueskill",
    "exp_trueskill_ceiling",
    "power_ceiling",
)

_BAD_LOSS = 1e30


class DegenerateFitError(RuntimeError):
    """The search made no progress and ended pinned to a bound, or the
    data cannot support a fit at all."""


@dataclass(frozen=True)
class FitConfig:
    exclude_before: float = 0.0
    exclude_after: float = math.inf
    metric_form: str = "isotonic"
    fail_ratio_cutoff: float = 0.5
    fail_ratio_max_return: float = 10.0
    alpha_bounds: tuple[float, float] = (0.01, 5.0)
    n_c_bounds: tuple[float, float] = (1e-12, 1e6)
    search: SearchConfig = field(default_factory=SearchConfig)

    def __post_init__(self):
        if not self.exclude_before < self.exclude_after:
            raise ValueError("exclude_before must be < exclude_after")
        if self.metric_form not in METRIC_FORMS:
            raise ValueError(f"metric_form must be one of {METRIC_FORMS}")
        if not self.fail_ratio_cutoff > 0:
            raise ValueError("fail_ratio_cutoff must be > 0")


@dataclass(frozen=True)
class IntrinsicMap:
    """Fitted map from metric to intrinsic performance.

    ``f`` stores the natural log of intrinsic performance against the
    metric as fitted (negated at ingestion for failure-like metrics, in
    which case callers still pass the original orientation here).
    """

    f: StepFunction
    metric_kind: str
    metric_min: float
    metric_max: float
    negated: bool = False

    def intrinsic(self, metric):
        m = -np.asarray(metric) if self.negated else np.asarray(metric)
        out = np.exp(self.f(m))
        return float(out) if np.ndim(metric) == 0 else out

    def in_range(self, metric):
        m = -np.asarray(metric) if self.negated else np.asarray(metric)
        ok = (m >= self.metric_min) & (m <= self.metric_max)
        return bool(ok) if np.ndim(metric) == 0 else ok


def intrinsic_performance(mapping: IntrinsicMap, metric):
    """Intrinsic performance for a metric value; monotone in the metric.
    Values outside the fitted metric window are extrapolations - check
    ``mapping.in_range``."""
    return mapping.intrinsic(metric)


@dataclass(frozen=True)
class NaturalFit:
    """Power law fitted through a parametric natural-metric form."""

    law: PowerLawFit
    form: str
    alpha_t: float | None = None
    t_c: float | None = None
    t_star: float | None = None
    f_c: float | None = None

    def __post_init__(self):
        need = {
            "fail_ratio": ("f_c",),
            "exp_trueskill": ("alpha_t", "t_c"),
            "exp_trueskill_ceiling": ("alpha_t", "t_c", "t_star"),
            "power_ceiling": ("alpha_t", "t_c", "t_star"),
        }[self.form]
        for name in need:
            value = getattr(self, name)
            if value is None:
                raise ValueError(f"form {self.form!r} requires {name}")
            if name != "t_star" and not value > 0:
                raise ValueError(f"{name} must be > 0")

    def intrinsic_from_metric(self, metric):
        """Closed-form I(metric) implied by the fitted form."""
        m = np.asarray(metric, dtype=np.float64)
        if self.form == "fail_ratio":
            log_y = np.log(m) - math.log(self.f_c)
        elif self.form == "exp_trueskill":
            log_y = math.log(self.t_c) - self.alpha_t * m
        elif self.form == "exp_trueskill_ceiling":
            log_y = math.log(self.t_c) + _log_exp_gap(m, self.alpha_t, self.t_star)
        else:
            log_y = math.log(self.t_c) + self.alpha_t * np.log(self.t_star - m)
        out = np.exp(-log_y / self.law.beta)
        return float(out) if np.ndim(metric) == 0 else out

    def relation_coefficient(self) -> float:
        """Leading coefficient of the I(metric) relation: the value of I at
        F = 1 (fail ratio) or the multiplier at T = 0 (TrueSkill forms)."""
        if self.form == "fail_ratio":
            return self.f_c ** (1.0 / self.law.beta)
        return self.t_c ** (-1.0 / self.law.beta)

    def relation_base(self) -> float:
        """Per-TrueSkill-point growth factor exp(alpha_t / beta) for the
        plain exponential form."""
        if self.form != "exp_trueskill":
            raise ValueError("relation_base is defined for the exp_trueskill form")
        return math.exp(self.alpha_t / self.law.beta)


@dataclass
class FitDiagnostics:
    loss: float
    evals: int
    converged: bool
    diverged: bool
    bounds_active: tuple[str, ...]
    n_points: int
    n_sizes: int
    per_size_rms: dict[float, float]
    e_window: tuple[float, float] = (0.0, 0.0)
    warnings: tuple[str, ...] = ()


# -- data preparation -----------------------------------------------------


@dataclass(frozen=True)
class _FitData:
    log_n: np.ndarray
    log_e: np.ndarray
    metric: np.ndarray
    weights: np.ndarray  # normalized to sum 1, duplicate locations share mass
    order: np.ndarray  # stable argsort of metric
    tie_starts: np.ndarray  # segment starts in sorted order
    tie_sizes: np.ndarray
    tie_weights: np.ndarray
    sizes: np.ndarray
    size_of_point: np.ndarray


def _prepare(data: LearningCurveSet, cfg: FitConfig):
    lo, hi = cfg.exclude_before, cfg.exclude_after
    filtered = data.map_curves(lambda c: _window_curve(c, lo, hi))
    n_list, e_list, m_list = [], [], []
    for curve in filtered:
        n_list.append(np.full(len(curve), curve.model_size))
        e_list.append(curve.interactions)
        m_list.append(curve.mean)
    if not n_list:
        raise DegenerateFitError("no data points remain after filtering")
    n = np.concatenate(n_list)
    e = np.concatenate(e_list)
    metric = np.concatenate(m_list)

    if cfg.metric_form == "fail_ratio":
        r = metric
        with np.errstate(divide="ignore", invalid="ignore"):
            metric = (cfg.fail_ratio_max_return - r) / r
        keep = np.isfinite(metric) & (metric > 0) & (metric <= cfg.fail_ratio_cutoff)
        if not np.any(keep):
            raise DegenerateFitError(
                "all data excluded by the fail-ratio cutoff "
                f"(keep rule: 0 < F <= {cfg.fail_ratio_cutoff:g})"
            )
        n, e, metric = n[keep], e[keep], metric[keep]

    raw = 1.0 / e
    loc = np.stack([n, e], axis=1)
    _, inverse, counts = np.unique(loc, axis=0, return_inverse=True, return_counts=True)
    raw = raw / counts[inverse]  # duplicate (N, E) rows share the location's mass
    weights = raw / raw.sum()

    order = np.argsort(metric, kind="stable")
    m_sorted = metric[order]
    w_sorted = weights[order]
    tie_starts = np.flatnonzero(np.r_[True, np.diff(m_sorted) != 0])
    tie_sizes = np.diff(np.r_[tie_starts, m_sorted.size])
    tie_weights = np.add.reduceat(w_sorted, tie_starts)

    sizes = np.unique(n)
    size_of_point = np.searchsorted(sizes, n)
    fd = _FitData(
        log_n=np.log(n),
        log_e=np.log(e),
        metric=metric,
        weights=weights,
        order=order,
        tie_starts=tie_starts,
        tie_sizes=tie_sizes,
        tie_weights=tie_weights,
        sizes=sizes,
        size_of_point=size_of_point,
    )
    return fd, filtered


def _window_curve(curve, lo, hi):
    keep = (curve.interactions >= lo) & (curve.interactions <= hi)
    if not np.any(keep):
        return None
    from .curves import LearningCurve

    return LearningCurve(
        curve.model_size,
        curve.interactions[keep],
        curve.mean[keep],
        curve.stderr[keep],
        curve.n_seeds[keep],
    )


# -- loss -----------------------------------------------------------------


def _lemma_log_ec(alpha_n, alpha_e, log_nc):
    return -log_nc - (
        math.log1p(alpha_n / alpha_e) / alpha_n + math.log1p(alpha_e / alpha_n) / alpha_e
    )


def _targets_log_i(alpha_n, alpha_e, log_nc, fd: _FitData):
    beta = 1.0 / (1.0 / alpha_n + 1.0 / alpha_e)
    log_ec = _lemma_log_ec(alpha_n, alpha_e, log_nc)
    with np.errstate(over="ignore"):
        y = np.exp(alpha_n * (log_nc - fd.log_n)) + np.exp(alpha_e * (log_ec - fd.log_e))
    return -np.log(y) / beta, beta


def _isotonic_inner(targets, fd: _FitData):
    t = np.ascontiguousarray(targets[fd.order])
    w = np.ascontiguousarray(fd.weights[fd.order])
    if fd.tie_starts.size == t.size:
        levels = pava(t, w)
        fitted = levels
    else:
        pooled = np.add.reduceat(w * t, fd.tie_starts) / fd.tie_weights
        levels = pava(np.ascontiguousarray(pooled), np.ascontiguousarray(fd.tie_weights))
        fitted = np.repeat(levels, fd.tie_sizes)
    return float(weighted_sse(fitted, t, w)), fitted


def _intercept_inner(targets, basis, fd: _FitData):
    # log f = basis + c; weighted-mean intercept.
    c = float(np.sum(fd.weights * (targets - basis)))
    fitted = basis + c
    resid = fitted - targets
    return float(np.sum(fd.weights * resid * resid)), c


def _wls_line(targets, x, w):
    xm = np.sum(w * x)
    ym = np.sum(w * targets)
    sxx = np.sum(w * (x - xm) ** 2)
    if sxx <= 0:
        return None
    slope = np.sum(w * (x - xm) * (targets - ym)) / sxx
    intercept = ym - slope * xm
    resid = intercept + slope * x - targets
    return float(np.sum(w * resid * resid)), float(intercept), float(slope)


def _log_exp_gap(t, alpha_t, t_star):
    # log(exp(-a*t) - exp(-a*t_star)) evaluated stably for t < t_star.
    return -alpha_t * np.asarray(t) + np.log1p(-np.exp(-alpha_t * (t_star - np.asarray(t))))


def _form_loss(params, fd: _FitData, cfg: FitConfig, with_fit=False):
    alpha_n, alpha_e, n_c = params
    targets, beta = _targets_log_i(alpha_n, alpha_e, math.log(n_c), fd)
    if not np.all(np.isfinite(targets)):
        return (_BAD_LOSS, None) if with_fit else _BAD_LOSS
    form = cfg.metric_form

    if form == "isotonic":
        loss, fitted = _isotonic_inner(targets, fd)
        result = ("isotonic", fitted)
    elif form == "fail_ratio":
        v = -np.log(fd.metric) / beta
        loss, c = _intercept_inner(targets, v, fd)
        f_c = math.exp(beta * c)
        result = ("fail_ratio", {"f_c": f_c})
    elif form == "exp_trueskill":
        out = _wls_line(targets, fd.metric, fd.weights)
        if out is None:
            return (_BAD_LOSS, None) if with_fit else _BAD_LOSS
        loss, intercept, slope = out
        alpha_t = beta * slope
        t_c = math.exp(-beta * intercept)
        if alpha_t <= 0:
            loss += _BAD_LOSS * 1e-12  # barrier: performance must rise with T
        result = ("exp_trueskill", {"alpha_t": alpha_t, "t_c": t_c})
    else:
        loss, consts = _ceiling_inner(targets, beta, fd, cfg, form)
        result = (form, consts)

    if with_fit:
        return loss, result
    return loss


def _ceiling_inner(targets, beta, fd: _FitData, cfg: FitConfig, form):
    t_max = float(fd.metric.max())
    seed = cfg.search.seed

    def fit_given(alpha_t, t_star):
        if form == "exp_trueskill_ceiling":
            basis = _log_exp_gap(fd.metric, alpha_t, t_star) / (-beta)
        else:
            basis = np.log(t_star - fd.metric) * (-alpha_t / beta)
        c = float(np.sum(fd.weights * (targets - basis)))
        resid = basis + c - targets
        return float(np.sum(fd.weights * resid * resid)), math.exp(-beta * c)

    if form == "exp_trueskill_ceiling":

        def obj(z):
            return fit_given(math.exp(z[0]), t_max + math.exp(z[1]))[0]

        inner_cfg = SearchConfig(max_evals=400, restarts=2, init_step=0.5, tol_loss=1e-14, seed=seed)
        res = minimize(obj, [math.log(0.05), math.log(max(t_max, 1.0))],
                       [(-8.0, 3.0), (-6.0, 12.0)], inner_cfg)
        alpha_t = math.exp(res.params[0])
        t_star = t_max + math.exp(res.params[1])
        loss, t_c = fit_given(alpha_t, t_star)
        return loss, {"alpha_t": alpha_t, "t_c": t_c, "t_star": t_star}

    # power_ceiling: for a given T*, alpha_t and T_c come from a WLS line.
    def fit_power(t_star):
        x = np.log(t_star - fd.metric)
        out = _wls_line(targets, x, fd.weights)
        if out is None:
            return _BAD_LOSS, None, None
        loss, intercept, slope = out
        alpha_t = -beta * slope
        t_c = math.exp(-beta * intercept)
        if alpha_t <= 0:
            loss += _BAD_LOSS * 1e-12
        return loss, alpha_t, t_c

    def obj(z):
        return fit_power(t_max + math.exp(z[0]))[0]

    inner_cfg = SearchConfig(max_evals=300, restarts=2, init_step=0.5, tol_loss=1e-14, seed=seed)
    res = minimize(obj, [math.log(max(t_max, 1.0))], [(-6.0, 12.0)], inner_cfg)
    t_star = t_max + math.exp(res.params[0])
    loss, alpha_t, t_c = fit_power(t_star)
    return loss, {"alpha_t": alpha_t, "t_c": t_c, "t_star": t_star}


def joint_loss(params, data: LearningCurveSet, cfg: FitConfig = FitConfig()) -> float:
    """Search loss at ``params = (alpha_n, alpha_e, n_c)`` for a curve set.

    beta and e_c are derived, the inner fit is performed per
    ``cfg.metric_form``, and the weighted squared error is returned.
    """
    alpha_n, alpha_e, n_c = params
    if not (alpha_n > 0 and alpha_e > 0 and n_c > 0):
        raise ValueError("alpha_n, alpha_e, n_c must be > 0")
    fd, _ = _prepare(data, cfg)
    if fd.sizes.size < 2:
        raise DegenerateFitError("need at least 2 distinct model sizes")
    return _form_loss((alpha_n, alpha_e, n_c), fd, cfg)


# -- fitting --------------------------------------------------------------


def _init_point(fd: _FitData):
    # alpha_n = alpha_e = 0.5; n_c such that (n_c / median N)**0.5 matches
    # the median scale of the law's left-hand side, proxied by (N*E)**-0.25.
    med_log_n = float(np.median(fd.log_n))
    proxy = float(np.median(-0.25 * (fd.log_n + fd.log_e)))
    log_nc = med_log_n + 2.0 * proxy
    return np.array([math.log(0.5), math.log(0.5), log_nc])


def _run_search(fd: _FitData, cfg: FitConfig):
    lo_a, hi_a = cfg.alpha_bounds
    lo_c, hi_c = cfg.n_c_bounds
    bounds = [
        (math.log(lo_a), math.log(hi_a)),
        (math.log(lo_a), math.log(hi_a)),
        (math.log(lo_c), math.log(hi_c)),
    ]
    z0 = _init_point(fd)
    z0 = np.clip(z0, [b[0] for b in bounds], [b[1] for b in bounds])

    def objective(z):
        return _form_loss(np.exp(z), fd, cfg)

    init_loss = objective(z0)
    res = minimize(objective, z0, bounds, cfg.search)
    params = np.exp(res.params)
    names = ("alpha_n", "alpha_e", "n_c")
    active = tuple(n for n, a in zip(names, res.bounds_active) if a)
    if active and init_loss - res.loss < cfg.search.tol_loss:
        raise DegenerateFitError(
            f"search made no progress and ended on bounds {active}; "
            "the data cannot identify the constants"
        )
    return params, res, active


def _diagnostics(fd, cfg, params, res, active, fitted_log_i):
    targets, _ = _targets_log_i(params[0], params[1], math.log(params[2]), fd)
    per_size = {}
    if fitted_log_i is not None:
        resid = np.empty_like(targets)
        resid[fd.order] = fitted_log_i - targets[fd.order]
        for k, size in enumerate(fd.sizes):
            mask = fd.size_of_point == k
            per_size[float(size)] = float(np.sqrt(np.mean(resid[mask] ** 2)))
    log_ec = _lemma_log_ec(params[0], params[1], math.log(params[2]))
    e_lo, e_hi = float(np.exp(fd.log_e.min())), float(np.exp(fd.log_e.max()))
    e_c = math.exp(log_ec)
    diverged = bool(active) or not (1e-3 * e_lo <= e_c <= 1e3 * e_hi)
    warnings = []
    if diverged:
        warnings.append(
            "fit flagged as diverged: "
            + (f"bounds active: {active}" if active else f"e_c={e_c:.3g} far outside the data window")
        )
    return FitDiagnostics(
        loss=res.loss,
        evals=res.evals,
        converged=res.converged,
        diverged=diverged,
        bounds_active=active,
        n_points=fd.metric.size,
        n_sizes=int(fd.sizes.size),
        per_size_rms=per_size,
        e_window=(e_lo, e_hi),
        warnings=tuple(warnings),
    )


def fit_intrinsic(data: LearningCurveSet, cfg: FitConfig = FitConfig()):
    """Fit the power law and the monotone metric map jointly.

    Returns ``(law, mapping, diagnostics)``. Requires at least two model
    sizes and eight points per size after windowing.
    """
    if cfg.metric_form != "isotonic":
        raise ValueError("fit_intrinsic uses the isotonic form; see fit_natural")
    fd, filtered = _prepare(data, cfg)
    _check_support(fd)
    params, res, active = _run_search(fd, cfg)
    loss, (_, fitted) = _form_loss(params, fd, cfg, with_fit=True)

    law = derive_constants(*params)
    i_lo, i_hi, n_lo, n_hi = intrinsic_range(law, filtered)
    law = law.with_ranges(i_lo, i_hi, n_lo, n_hi)

    m_sorted = fd.metric[fd.order]
    xs = m_sorted[fd.tie_starts]
    levels = fitted[fd.tie_starts]
    mono = np.maximum.accumulate(levels)  # guard exact ties in float comparisons
    mapping = IntrinsicMap(
        f=StepFunction(xs, mono, interpolation="linear_in_x"),
        metric_kind=data.metric_kind,
        metric_min=float(m_sorted[0]),
        metric_max=float(m_sorted[-1]),
        negated=data.negated,
    )
    diag = _diagnostics(fd, cfg, params, res, active, fitted)
    return law, mapping, diag


def fit_natural(data: LearningCurveSet, cfg: FitConfig):
    """Fit the power law through a parametric natural-metric form.

    Returns ``(natural_fit, diagnostics)``. The curve set's metric kind
    must match the form: ``fail_ratio`` expects ``fail_ratio_source``
    returns, the TrueSkill forms expect ``trueskill`` ratings.
    """
    if cfg.metric_form == "isotonic":
        raise ValueError("fit_natural needs a parametric metric_form")
    expected = "fail_ratio_source" if cfg.metric_form == "fail_ratio" else "trueskill"
    if data.metric_kind != expected:
        raise ValueError(
            f"form {cfg.metric_form!r} expects metric_kind {expected!r}, "
            f"got {data.metric_kind!r}"
        )
    fd, filtered = _prepare(data, cfg)
    _check_support(fd)
    params, res, active = _run_search(fd, cfg)
    loss, (_, consts) = _form_loss(params, fd, cfg, with_fit=True)

    law = derive_constants(*params)
    i_lo, i_hi, n_lo, n_hi = intrinsic_range(law, filtered)
    law = law.with_ranges(i_lo, i_hi, n_lo, n_hi)
    natural = NaturalFit(law=law, form=cfg.metric_form, **consts)
    diag = _diagnostics(fd, cfg, params, res, active, None)
    return natural, diag


def _check_support(fd: _FitData):
    if fd.sizes.size < 2:
        raise DegenerateFitError("need at least 2 distinct model sizes")
    counts = np.bincount(fd.size_of_point, minlength=fd.sizes.size)
    if np.any(counts < 8):
        thin = fd.sizes[counts < 8]
        raise DegenerateFitError(
            f"need >= 8 points per size after filtering; too few for sizes {thin}"
        )
