"""Model-family cost accounting and the bundled reference-constants table.

Parameter and FLOPs-per-interaction polynomials are provided for the four
benchmark model families (Procgen CNNs scaled in width or depth, the Dota
1v1 LSTM, and the MNIST CNN), along with conversions between
parameters x interactions and PF-days. The shipped JSON table carries the
published fitted constants for these families; ``validate_constant_row``
re-derives the redundant columns and checks internal consistency.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .powerlaw import PFDAY_FLOPS, derive_constants

FAMILIES = ("procgen_width", "procgen_depth", "dota_lstm", "mnist_width")

#: Residual-block counts trained in the depth-scaling experiments; the
#: depth family's FLOPs-per-param-interact ratio varies with depth, so the
#: conversion uses the mean ratio over these sizes.
DEPTH_SCALES = (1, 2, 4, 8, 16, 32, 64)


@dataclass(frozen=True)
class FamilySpec:
    """One sized model: a family name plus its scale knob (width
    multiplier, residual blocks, or LSTM state size)."""

    family: str
    scale: float

    def __post_init__(self):
        if self.family not in FAMILIES and self.family != "custom":
            raise ValueError(f"unknown family {self.family!r}")
        if not self.scale > 0:
            raise ValueError("scale must be > 0")
        if self.family == "procgen_depth" and self.scale != int(self.scale):
            raise ValueError("procgen_depth scale must be a positive integer")


@dataclass(frozen=True)
class CustomFamily:
    """User-supplied family: callables mapping scale -> params / FLOPs."""

    params_fn: object
    flops_fn: object

    def params(self, scale):
        return float(self.params_fn(scale))

    def flops_per_interaction(self, scale):
        return float(self.flops_fn(scale))


def family_params(spec: FamilySpec) -> float:
    """Parameter count of the scaled part of the network.

    The depth family deliberately excludes the final dense layer (it is
    not part of what is being scaled); the published constants depend on
    this accounting, so it is reproduced as-is.
    """
    w = spec.scale
    if spec.family == "procgen_width":
        return 1242112.0 * w * w
    if spec.family == "procgen_depth":
        return 5184.0 * w + 1944.0
    if spec.family == "dota_lstm":
        return 8.0 * w * w
    if spec.family == "mnist_width":
        return 3948800.0 * w * w
    raise ValueError(f"no parameter formula for family {spec.family!r}")


def family_flops_per_interaction(spec: FamilySpec) -> float:
    """Training FLOPs per environment interaction (rollout + optimization,
    counting an add-multiply as 2 FLOPs)."""
    w = spec.scale
    if spec.family == "procgen_width":
        return 2652897280.0 * w * w
    if spec.family == "procgen_depth":
        return 61046784.0 * w + 81395712.0
    if spec.family == "dota_lstm":
        return 64.0 * w * w
    if spec.family == "mnist_width":
        return 95648000.0 * w * w
    raise ValueError(f"no FLOP formula for family {spec.family!r}")


def fppi(family: str, scales=None) -> float:
    """FLOPs per param-interact: converts parameters x interactions to FLOPs.

    Constant for the width-scaled and LSTM families (the ratio of the two
    polynomials); for ``procgen_depth`` the ratio varies with depth and
    the mean over the tested block counts is used.
    """
    if family in ("procgen_width", "dota_lstm", "mnist_width"):
        spec = FamilySpec(family, 1.0)
        return family_flops_per_interaction(spec) / family_params(spec)
    if family == "procgen_depth":
        if scales is None:
            scales = DEPTH_SCALES
        scales = list(scales)
        if not scales:
            raise ValueError("procgen_depth needs a non-empty scale list")
        ratios = [
            family_flops_per_interaction(FamilySpec(family, b))
            / family_params(FamilySpec(family, b))
            for b in scales
        ]
        return sum(ratios) / len(ratios)
    raise ValueError(f"unknown family {family!r}")


def to_pfdays(amount: float, fppi_value: float) -> float:
    """Convert parameters x interactions to PF-days."""
    if not (amount > 0 and fppi_value > 0):
        raise ValueError("amount and fppi must be > 0")
    return amount * fppi_value / PFDAY_FLOPS


def from_pfdays(c_pfdays: float, fppi_value: float) -> float:
    """Convert PF-days to parameters x interactions."""
    if not (c_pfdays > 0 and fppi_value > 0):
        raise ValueError("c_pfdays and fppi must be > 0")
    return c_pfdays * PFDAY_FLOPS / fppi_value


# -- bundled reference constants ------------------------------------------


@dataclass(frozen=True)
class PaperConstantRow:
    environment: str
    variant: str
    family: str
    fit_to: str
    core: bool
    horizon: float | None
    alpha_n: float
    alpha_e: float
    beta: float
    n_c: float
    e_c: float
    i_min: float
    i_max: float
    optimal_coeff: float
    optimal_exp: float
    n_min: float
    n_max: float
    alpha_t: float | None = None
    t_c: float | None = None
    t_star: float | None = None
    f_c: float | None = None
    i_relation_coeff: float | None = None
    i_relation_base: float | None = None

    @property
    def label(self) -> str:
        return f"{self.environment} ({self.variant}, {self.family})"


@lru_cache(maxsize=1)
def _dataset() -> dict:
    text = resources.files("rlscaling").joinpath("data/fitted_constants.json").read_text()
    return json.loads(text)


def paper_constants(include_natural: bool = False) -> list[PaperConstantRow]:
    """The bundled fitted-constants table, as printed.

    The core table has 26 rows (6 width + 6 depth environments, 4 Dota
    functional forms, 10 MNIST horizons). ``include_natural=True`` adds
    the two CoinRun fail-ratio fits.
    """
    rows = []
    for raw in _dataset()["rows"]:
        if not raw["core"] and not include_natural:
            continue
        natural = raw.get("natural") or {}
        rows.append(
            PaperConstantRow(
                environment=raw["environment"],
                variant=raw["variant"],
                family=raw["family"],
                fit_to=raw["fit_to"],
                core=raw["core"],
                horizon=raw["horizon"],
                alpha_n=raw["alpha_n"],
                alpha_e=raw["alpha_e"],
                beta=raw["beta"],
                n_c=raw["n_c"],
                e_c=raw["e_c"],
                i_min=raw["i_min"],
                i_max=raw["i_max"],
                optimal_coeff=raw["optimal_coeff"],
                optimal_exp=raw["optimal_exp"],
                n_min=raw["n_min"],
                n_max=raw["n_max"],
                alpha_t=natural.get("alpha_t"),
                t_c=natural.get("t_c"),
                t_star=natural.get("t_star"),
                f_c=natural.get("f_c"),
                i_relation_coeff=natural.get("i_relation_coeff"),
                i_relation_base=natural.get("i_relation_base"),
            )
        )
    return rows


def generative_reference() -> list[dict]:
    """Optimal-size lines for generative-modeling baselines, as published.
    Each entry satisfies N = (C / coeff_inv) ** exp with C in PF-days."""
    return [dict(entry) for entry in _dataset()["generative_reference"]]


@dataclass(frozen=True)
class RowCheck:
    row: PaperConstantRow
    beta_rel: float
    e_c_rel: float
    coeff_rel: float
    exp_rel: float
    beta_ok: bool
    e_c_ok: bool
    coeff_ok: bool
    exp_ok: bool

    @property
    def ok(self) -> bool:
        return self.beta_ok and self.e_c_ok and self.coeff_ok and self.exp_ok


#: Relative tolerances for re-deriving each printed column. The printed
#: inputs are 3-significant-figure roundings, which propagate.
ROW_TOLERANCES = {"beta": 0.01, "e_c": 0.02, "coeff": 0.05, "exp": 0.003}


def validate_constant_row(row: PaperConstantRow) -> RowCheck:
    """Re-derive the redundant columns of one table row from
    (alpha_n, alpha_e, n_c) and compare against the printed values."""
    fit = derive_constants(row.alpha_n, row.alpha_e, row.n_c)
    fppi_value = fppi(row.family)
    coeff = fit.optimal_size_pfdays(1.0, fppi_value)
    exp = 1.0 / (1.0 + row.alpha_n / row.alpha_e)
    beta_rel = abs(fit.beta - row.beta) / row.beta
    e_c_rel = abs(fit.e_c - row.e_c) / row.e_c
    coeff_rel = abs(coeff - row.optimal_coeff) / row.optimal_coeff
    exp_rel = abs(exp - row.optimal_exp) / row.optimal_exp
    return RowCheck(
        row=row,
        beta_rel=beta_rel,
        e_c_rel=e_c_rel,
        coeff_rel=coeff_rel,
        exp_rel=exp_rel,
        beta_ok=beta_rel <= ROW_TOLERANCES["beta"],
        e_c_ok=e_c_rel <= ROW_TOLERANCES["e_c"],
        coeff_ok=coeff_rel <= ROW_TOLERANCES["coeff"],
        exp_ok=exp_rel <= ROW_TOLERANCES["exp"],
    )


def validate_all_rows() -> list[RowCheck]:
    return [validate_constant_row(row) for row in paper_constants()]


def row_fppi(row: PaperConstantRow) -> float:
    return fppi(row.family)


def _self_check_depth_spread():
    # The depth family's fppi deviates from its mean by at most ~40%;
    # kept as a callable so tests document the accounting convention.
    mean = fppi("procgen_depth")
    devs = [
        abs(
            family_flops_per_interaction(FamilySpec("procgen_depth", b))
            / family_params(FamilySpec("procgen_depth", b))
            - mean
        )
        / mean
        for b in DEPTH_SCALES
    ]
    return max(devs)
