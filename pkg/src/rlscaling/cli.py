"""Command-line surface: ingest -> fit -> report, plus frontier queries,
horizon simulation and the bundled-constants consistency check.

Verbs: fit, fit-natural, optimal-size, cost, extrapolate,
simulate-horizon, validate-paper, plot-data. Configuration is a flat
key = value text file (see README for the grammar); every command is
deterministic given its inputs and seed, and exit codes follow the
contract 0 = ok, 1 = input/validation error, 2 = diverged fit.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import accounting, horizon, plots
from .curves import (
    CurveDataError,
    SmoothingConfig,
    aggregate_seeds,
    load_runs,
    smooth_set,
)
from .fitting import DegenerateFitError, FitConfig, fit_intrinsic, fit_natural
from .optimize import SearchConfig
from .powerlaw import PowerLawFit, derive_constants
from .report import (
    SCHEMA_VERSION,
    TOOL_VERSION,
    FitReport,
    file_sha256,
    optimal_equation,
)

_CONFIG_DEFAULTS = {
    "metric_kind": "return",
    "negate_metric": "false",
    "trim": "0",
    "family": "",
    "smoothing": "true",
    "points_per_decade": "12",
    "target_residual_ratio": "1.0",
    "min_bandwidth_decades": "0.05",
    "exclude_before": "0",
    "exclude_after": "inf",
    "metric_form": "isotonic",
    "fail_ratio_cutoff": "0.5",
    "fail_ratio_max_return": "10.0",
    "alpha_min": "0.01",
    "alpha_max": "5.0",
    "n_c_min": "1e-12",
    "n_c_max": "1e6",
    "max_evals": "4000",
    "restarts": "4",
    "init_step": "0.5",
    "tol_loss": "1e-12",
    "seed": "0",
    "fppi": "",
}


def parse_config(path) -> dict:
    """Flat key = value file; blank lines and # comments ignored."""
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise CurveDataError(f"{path}: line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _CONFIG_DEFAULTS:
            raise CurveDataError(f"{path}: line {lineno}: unknown key {key!r}")
        cfg[key] = value
    return cfg


def _effective_config(config_path, seed_override):
    cfg = dict(_CONFIG_DEFAULTS)
    if config_path:
        cfg.update(parse_config(config_path))
    if seed_override is not None:
        cfg["seed"] = str(seed_override)
    return cfg


def _bool(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes", "on")


def _fit_configs(cfg):
    smoothing = SmoothingConfig(
        points_per_decade=int(cfg["points_per_decade"]),
        target_residual_ratio=float(cfg["target_residual_ratio"]),
        min_bandwidth_decades=float(cfg["min_bandwidth_decades"]),
    )
    search = SearchConfig(
        max_evals=int(cfg["max_evals"]),
        restarts=int(cfg["restarts"]),
        init_step=float(cfg["init_step"]),
        tol_loss=float(cfg["tol_loss"]),
        seed=int(cfg["seed"]),
    )
    fit_cfg = FitConfig(
        exclude_before=float(cfg["exclude_before"]),
        exclude_after=float(cfg["exclude_after"]),
        metric_form=cfg["metric_form"],
        fail_ratio_cutoff=float(cfg["fail_ratio_cutoff"]),
        fail_ratio_max_return=float(cfg["fail_ratio_max_return"]),
        alpha_bounds=(float(cfg["alpha_min"]), float(cfg["alpha_max"])),
        n_c_bounds=(float(cfg["n_c_min"]), float(cfg["n_c_max"])),
        search=search,
    )
    return smoothing, fit_cfg


def _prepare_curves(args, cfg):
    runs = load_runs(
        args.input,
        format=args.input_format,
        metric_kind=cfg["metric_kind"],
        negate_metric=_bool(cfg["negate_metric"]),
    )
    curve_set = aggregate_seeds(runs, trim=int(cfg["trim"]))
    families = curve_set.families()
    if cfg["family"]:
        curve_set = curve_set.family(cfg["family"])
    elif len(families) > 1:
        raise CurveDataError(
            f"input has {len(families)} families {families}; pick one with 'family = ...'"
        )
    if _bool(cfg["smoothing"]):
        smoothing, _ = _fit_configs(cfg)
        curve_set = smooth_set(curve_set, smoothing)
    return curve_set


def _emit(text: str, output):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _assemble_report(law, cfg, diagnostics, args, mapping=None, natural=None):
    fppi_value = float(cfg["fppi"]) if cfg["fppi"] else None
    return FitReport(
        power_law=law,
        diagnostics=diagnostics,
        config={k: cfg[k] for k in sorted(cfg)},
        provenance={
            "input_path": Path(args.input).name,
            "input_sha256": file_sha256(args.input),
            "tool_version": TOOL_VERSION,
            "seed": int(cfg["seed"]),
        },
        intrinsic_map=mapping,
        natural=natural,
        optimal_equation=optimal_equation(law, fppi_value),
    )


def cmd_fit(args) -> int:
    cfg = _effective_config(args.config, args.seed)
    curve_set = _prepare_curves(args, cfg)
    _, fit_cfg = _fit_configs(cfg)
    try:
        law, mapping, diag = fit_intrinsic(curve_set, fit_cfg)
    except DegenerateFitError as exc:
        _emit(
            json.dumps(
                {"schema_version": SCHEMA_VERSION, "error": str(exc), "diverged": True},
                sort_keys=True,
                indent=2,
            )
            + "\n",
            args.output,
        )
        return 2
    report = _assemble_report(law, cfg, diag, args, mapping=mapping)
    _emit(report.to_json(), args.output)
    return 2 if diag.diverged else 0


def cmd_fit_natural(args) -> int:
    cfg = _effective_config(args.config, args.seed)
    if cfg["metric_form"] == "isotonic":
        raise CurveDataError("fit-natural needs a parametric metric_form in the config")
    curve_set = _prepare_curves(args, cfg)
    _, fit_cfg = _fit_configs(cfg)
    try:
        natural, diag = fit_natural(curve_set, fit_cfg)
    except DegenerateFitError as exc:
        _emit(
            json.dumps(
                {"schema_version": SCHEMA_VERSION, "error": str(exc), "diverged": True},
                sort_keys=True,
                indent=2,
            )
            + "\n",
            args.output,
        )
        return 2
    report = _assemble_report(natural.law, cfg, diag, args, natural=natural)
    _emit(report.to_json(), args.output)
    return 2 if diag.diverged else 0


# -- tables ----------------------------------------------------------------


def _load_law(args) -> PowerLawFit:
    if args.report:
        report = FitReport.from_json(Path(args.report).read_text())
        law = report.power_law
        if args.fppi is None and report.optimal_equation:
            args.fppi = report.optimal_equation.get("fppi")
        return law
    if args.alpha_n and args.alpha_e and args.n_c:
        return derive_constants(args.alpha_n, args.alpha_e, args.n_c)
    raise CurveDataError("provide --report or all of --alpha-n/--alpha-e/--n-c")


def _parse_values(spec: str) -> list[float]:
    if ":" in spec:
        lo, hi, num = spec.split(":")
        return list(np.logspace(math.log10(float(lo)), math.log10(float(hi)), int(num)))
    return [float(part) for part in spec.split(",") if part.strip()]


def _write_table(rows, header, args) -> int:
    if args.format == "json":
        text = json.dumps([dict(zip(header, row)) for row in rows], indent=2) + "\n"
    else:
        lines = [",".join(header)]
        lines += [",".join(_cell(value) for value in row) for row in rows]
        text = "\n".join(lines) + "\n"
    _emit(text, args.output)
    return 0


def _cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _cost_table(law, budgets_pfdays, fppi_value, n_env):
    rows = []
    for c_pf in budgets_pfdays:
        c = accounting.from_pfdays(c_pf, fppi_value)
        n = law.optimal_size_cost(c, n_env)
        e = c / (n + n_env)
        rows.append((c_pf, n, e, bool(law.size_in_range(n))))
    return rows


def cmd_optimal_size(args) -> int:
    law = _load_law(args)
    if args.fppi is None:
        raise CurveDataError("--fppi is required (or a report whose equation carries one)")
    rows = _cost_table(law, _parse_values(args.compute), args.fppi, 0.0)
    return _write_table(rows, ("c_pfdays", "n", "e", "in_range"), args)


def cmd_cost(args) -> int:
    law = _load_law(args)
    if args.fppi is None:
        raise CurveDataError("--fppi is required (or a report whose equation carries one)")
    if args.env_cost < 0:
        raise CurveDataError("--env-cost must be >= 0")
    rows = _cost_table(law, _parse_values(args.compute), args.fppi, args.env_cost)
    return _write_table(rows, ("c_pfdays", "n", "e", "in_range"), args)


def cmd_extrapolate(args) -> int:
    law = _load_law(args)
    which = args.limit.replace("-", "_")
    rows = []
    for at in _parse_values(args.at):
        value = law.limit_intrinsic(which, at)
        rows.append((at, value, bool(law.intrinsic_in_range(value))))
    return _write_table(rows, ("at", "intrinsic", "in_range"), args)


# -- simulation and validation ----------------------------------------------


def cmd_simulate_horizon(args) -> int:
    horizons = [float(h) for h in args.horizons.split(",") if h.strip()]
    sweep = horizon.HorizonSweep(
        horizons=tuple(horizons),
        rollout_length=args.rollout_length,
        n_rollouts=args.rollouts,
        seed=args.seed if args.seed is not None else 0,
    )
    mdp = horizon.default_mdp(
        n_contexts=args.contexts,
        n_actions=args.actions,
        reward_noise_sd=args.reward_noise_sd,
    )
    policy = horizon.uniform_policy(mdp)
    result = horizon.run_sweep(mdp, policy, sweep)

    lines = ["h,gamma,trace_estimate,stderr,n_rollouts"]
    lines += [
        f"{e.h!r},{e.gamma!r},{e.trace!r},{e.stderr!r},{e.n_rollouts}"
        for e in result.estimates
    ]
    csv_text = "\n".join(lines) + "\n"
    summary = {
        "x_definition": "h + 1/h - 2",
        "affine_fit": None
        if result.affine is None
        else {
            "intercept": result.affine.intercept,
            "slope": result.affine.slope,
            "r_squared": result.affine.r_squared,
        },
        "refused": result.affine_refused_reason,
        "seed": sweep.seed,
        "n_rollouts": sweep.n_rollouts,
        "rollout_length": sweep.rollout_length,
    }
    json_text = json.dumps(summary, sort_keys=True, indent=2) + "\n"
    if args.output:
        Path(str(args.output) + ".csv").write_text(csv_text)
        Path(str(args.output) + ".json").write_text(json_text)
    else:
        sys.stdout.write(csv_text)
        sys.stdout.write(json_text)
    return 0


def cmd_validate_paper(args) -> int:
    checks = accounting.validate_all_rows()
    if args.format == "json":
        payload = [
            {
                "row": check.row.label,
                "beta_rel": check.beta_rel,
                "e_c_rel": check.e_c_rel,
                "coeff_rel": check.coeff_rel,
                "exp_rel": check.exp_rel,
                "ok": check.ok,
            }
            for check in checks
        ]
        _emit(json.dumps(payload, indent=2) + "\n", args.output)
    else:
        lines = [
            f"{'row':44s} {'beta':>8s} {'e_c':>8s} {'coeff':>8s} {'exp':>8s} result"
        ]
        for check in checks:
            lines.append(
                f"{check.row.label:44s} "
                f"{check.beta_rel:8.4%} {check.e_c_rel:8.4%} "
                f"{check.coeff_rel:8.4%} {check.exp_rel:8.4%} "
                f"{'pass' if check.ok else 'FAIL'}"
            )
        passed = sum(check.ok for check in checks)
        lines.append(f"{passed}/{len(checks)} rows pass")
        _emit("\n".join(lines) + "\n", args.output)
    return 0 if all(check.ok for check in checks) else 1


def cmd_plot_data(args) -> int:
    report = FitReport.from_json(Path(args.report).read_text())
    curve_set = None
    if args.which == "learning_curves":
        if not args.input:
            raise CurveDataError("learning_curves view needs --input data")
        cfg = _effective_config(args.config, args.seed)
        curve_set = _prepare_curves(args, cfg)
    rows = plots.plot_series(report, args.which, curve_set)
    import io

    buf = io.StringIO()
    plots.write_series_csv(rows, buf)
    _emit(buf.getvalue(), args.output)
    if args.svg:
        axis_labels = {
            "learning_curves": ("total compute (param-interactions)", "intrinsic performance"),
            "frontier": ("model size (parameters)", "frontier interactions"),
            "optimal_size": ("compute (param-interactions)", "optimal model size"),
            "extrapolation": ("interactions", "intrinsic performance"),
        }[args.which]
        svg = plots.render_svg(rows, title=args.which, xlabel=axis_labels[0], ylabel=axis_labels[1])
        Path(args.svg).write_text(svg)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlscaling",
        description="Fit compute-scaling power laws to RL learning curves and query them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True, help="input CSV/JSON data file")
            p.add_argument("--input-format", choices=("csv", "json"), default=None)
        p.add_argument("--config", default=None, help="flat key = value config file")
        p.add_argument("--output", default=None, help="output path (default stdout)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_fit = sub.add_parser("fit", help="joint power-law + monotone-map fit")
    add_io(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_nat = sub.add_parser("fit-natural", help="fit through a parametric natural-metric form")
    add_io(p_nat)
    p_nat.set_defaults(func=cmd_fit_natural)

    def add_law_source(p):
        p.add_argument("--report", default=None, help="fit report JSON")
        p.add_argument("--alpha-n", type=float, default=None)
        p.add_argument("--alpha-e", type=float, default=None)
        p.add_argument("--n-c", type=float, default=None)
        p.add_argument("--fppi", type=float, default=None, help="FLOPs per param-interact")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--output", default=None)

    p_opt = sub.add_parser("optimal-size", help="optimal model size per compute budget")
    add_law_source(p_opt)
    p_opt.add_argument("--compute", required=True, help="PF-days: 'a,b,c' or 'lo:hi:n'")
    p_opt.set_defaults(func=cmd_optimal_size)

    p_cost = sub.add_parser("cost", help="cost frontier with per-interaction environment cost")
    add_law_source(p_cost)
    p_cost.add_argument("--compute", required=True, help="PF-days: 'a,b,c' or 'lo:hi:n'")
    p_cost.add_argument("--env-cost", type=float, required=True,
                        help="environment cost in equivalent parameters")
    p_cost.set_defaults(func=cmd_cost)

    p_ext = sub.add_parser("extrapolate", help="single-term limits of the law")
    add_law_source(p_ext)
    p_ext.add_argument("--limit", choices=("n-inf", "e-inf"), required=True)
    p_ext.add_argument("--at", required=True, help="'a,b,c' or 'lo:hi:n'")
    p_ext.set_defaults(func=cmd_extrapolate)

    p_sim = sub.add_parser("simulate-horizon", help="policy-gradient variance vs horizon sweep")
    p_sim.add_argument("--horizons", default="1,3,7,15,31")
    p_sim.add_argument("--rollouts", type=int, default=10_000)
    p_sim.add_argument("--rollout-length", type=int, default=64)
    p_sim.add_argument("--contexts", type=int, default=4)
    p_sim.add_argument("--actions", type=int, default=4)
    p_sim.add_argument("--reward-noise-sd", type=float, default=0.5)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--output", default=None, help="prefix for .csv and .json outputs")
    p_sim.set_defaults(func=cmd_simulate_horizon)

    p_val = sub.add_parser("validate-paper", help="consistency check of the bundled constants")
    p_val.add_argument("--format", choices=("table", "json"), default="table")
    p_val.add_argument("--output", default=None)
    p_val.set_defaults(func=cmd_validate_paper)

    p_plot = sub.add_parser("plot-data", help="long-format series (and optional SVG) for plots")
    p_plot.add_argument("--report", required=True)
    p_plot.add_argument("--which", choices=plots.PLOT_KINDS, required=True)
    p_plot.add_argument("--input", default=None)
    p_plot.add_argument("--input-format", choices=("csv", "json"), default=None)
    p_plot.add_argument("--config", default=None)
    p_plot.add_argument("--seed", type=int, default=None)
    p_plot.add_argument("--output", default=None)
    p_plot.add_argument("--svg", default=None)
    p_plot.set_defaults(func=cmd_plot_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CurveDataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
