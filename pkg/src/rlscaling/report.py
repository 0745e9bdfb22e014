"""Fit-report serialization: a versioned, losslessly round-tripping JSON
document holding the fitted constants, the metric map, diagnostics, the
derived optimal-size equation, and provenance."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .fitting import FitDiagnostics, IntrinsicMap, NaturalFit
from .isotonic import StepFunction
from .powerlaw import PowerLawFit, derive_constants

SCHEMA_VERSION = 1
TOOL_VERSION = "0.1.0"


@dataclass(eq=False)
class FitReport:
    power_law: PowerLawFit
    diagnostics: FitDiagnostics
    config: dict
    provenance: dict
    intrinsic_map: IntrinsicMap | None = None
    natural: NaturalFit | None = None
    optimal_equation: dict | None = None
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        law = self.power_law
        doc = {
            "schema_version": self.schema_version,
            "config": self.config,
            "power_law": {
                "alpha_n": law.alpha_n,
                "alpha_e": law.alpha_e,
                "n_c": law.n_c,
                "beta": law.beta,
                "e_c": law.e_c,
                "i_min": law.i_min,
                "i_max": law.i_max,
                "n_min": law.n_min,
                "n_max": law.n_max,
            },
            "intrinsic_map": None,
            "natural": None,
            "diagnostics": {
                "loss": self.diagnostics.loss,
                "evals": self.diagnostics.evals,
                "converged": self.diagnostics.converged,
                "diverged": self.diagnostics.diverged,
                "bounds_active": list(self.diagnostics.bounds_active),
                "n_points": self.diagnostics.n_points,
                "n_sizes": self.diagnostics.n_sizes,
                "per_size_rms": [
                    [size, rms] for size, rms in sorted(self.diagnostics.per_size_rms.items())
                ],
                "e_window": list(self.diagnostics.e_window),
                "warnings": list(self.diagnostics.warnings),
            },
            "optimal_equation": self.optimal_equation,
            "provenance": self.provenance,
        }
        if self.intrinsic_map is not None:
            m = self.intrinsic_map
            doc["intrinsic_map"] = {
                "metric_kind": m.metric_kind,
                "negated": m.negated,
                "metric_min": m.metric_min,
                "metric_max": m.metric_max,
                "interpolation": m.f.interpolation,
                "breakpoints": [[float(x), float(v)] for x, v in zip(m.f.xs, m.f.levels)],
            }
        if self.natural is not None:
            n = self.natural
            doc["natural"] = {
                "form": n.form,
                "alpha_t": n.alpha_t,
                "t_c": n.t_c,
                "t_star": n.t_star,
                "f_c": n.f_c,
            }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "FitReport":
        law_doc = doc["power_law"]
        law = PowerLawFit(**law_doc)
        diag_doc = doc["diagnostics"]
        diagnostics = FitDiagnostics(
            loss=diag_doc["loss"],
            evals=diag_doc["evals"],
            converged=diag_doc["converged"],
            diverged=diag_doc["diverged"],
            bounds_active=tuple(diag_doc["bounds_active"]),
            n_points=diag_doc["n_points"],
            n_sizes=diag_doc["n_sizes"],
            per_size_rms={size: rms for size, rms in diag_doc["per_size_rms"]},
            e_window=tuple(diag_doc["e_window"]),
            warnings=tuple(diag_doc["warnings"]),
        )
        mapping = None
        if doc.get("intrinsic_map"):
            m = doc["intrinsic_map"]
            xs = [p[0] for p in m["breakpoints"]]
            levels = [p[1] for p in m["breakpoints"]]
            mapping = IntrinsicMap(
                f=StepFunction(xs, levels, interpolation=m["interpolation"]),
                metric_kind=m["metric_kind"],
                metric_min=m["metric_min"],
                metric_max=m["metric_max"],
                negated=m["negated"],
            )
        natural = None
        if doc.get("natural"):
            n = doc["natural"]
            natural = NaturalFit(
                law=law,
                form=n["form"],
                alpha_t=n.get("alpha_t"),
                t_c=n.get("t_c"),
                t_star=n.get("t_star"),
                f_c=n.get("f_c"),
            )
        return cls(
            power_law=law,
            diagnostics=diagnostics,
            config=doc["config"],
            provenance=doc["provenance"],
            intrinsic_map=mapping,
            natural=natural,
            optimal_equation=doc.get("optimal_equation"),
            schema_version=doc["schema_version"],
        )

    @classmethod
    def from_json(cls, text: str) -> "FitReport":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        return isinstance(other, FitReport) and self.to_dict() == other.to_dict()


def optimal_equation(law: PowerLawFit, fppi_value: float | None) -> dict:
    """Optimal-size law N = coefficient * C**exponent with its validity
    range; in PF-days when a FLOPs-per-param-interact value is known,
    otherwise in parameters x interactions."""
    exponent = 1.0 / (1.0 + law.alpha_n / law.alpha_e)
    if fppi_value is None:
        coefficient = law.optimal_size(1.0)
        units = "param_interactions"
    else:
        coefficient = law.optimal_size_pfdays(1.0, fppi_value)
        units = "pf_days"
    return {
        "coefficient": coefficient,
        "exponent": exponent,
        "n_min": law.n_min,
        "n_max": law.n_max,
        "units": units,
        "fppi": fppi_value,
    }


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def verify_lemma_identities(doc: dict, rtol: float = 1e-9) -> bool:
    """Check a deserialized report's constants against the derived
    beta/e_c identities."""
    law = doc["power_law"]
    derived = derive_constants(law["alpha_n"], law["alpha_e"], law["n_c"])
    return (
        abs(derived.beta - law["beta"]) <= rtol * law["beta"]
        and abs(derived.e_c - law["e_c"]) <= rtol * law["e_c"]
    )
