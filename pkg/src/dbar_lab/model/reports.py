from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

from typing_extensions import Self

from dbar_lab.internal.util.multiformat import MultiformatModelMixin, normalize

CSV_COLUMNS: tuple[str, ...] = (
    "experiment",
    "domain",
    "neighborhood",
    "h",
    "dofs",
    "lambda",
    "residual",
    "witness_bound",
    "alpha",
    "r_quotient",
    "pass",
)


@dataclass(frozen=True, slots=True, kw_only=True)
class LambdaReport(MultiformatModelMixin):
    """Smallest eigenvalue of Q restricted to one support, with metadata."""

    lambda_value: float
    residual: float
    solver: str
    h: float
    neighborhood: str
    dofs: int
    domain: str = ""

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "lambda": self.lambda_value,
            "residual": self.residual,
            "solver": self.solver,
            "h": self.h,
            "neighborhood": self.neighborhood,
            "dofs": self.dofs,
            "domain": self.domain,
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        return cls(
            lambda_value=float(mapping["lambda"]),
            residual=float(mapping["residual"]),
            solver=str(mapping["solver"]),
            h=float(mapping["h"]),
            neighborhood=str(mapping["neighborhood"]),
            dofs=int(mapping["dofs"]),
            domain=str(mapping.get("domain", "")),
        )


@dataclass(frozen=True, slots=True, kw_only=True)
class ProbeLedgerEntry(MultiformatModelMixin):
    label: str
    norm_sq: float
    q: float
    minus1_sq: float

    def slack(self, epsilon: float, d_min: float) -> float:
        """epsilon*Q + d_min*‖g‖²₋₁ - ‖g‖², nonnegative when the estimate holds."""
        return epsilon * self.q + d_min * self.minus1_sq - self.norm_sq

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {"label": self.label, "norm_sq": self.norm_sq, "q": self.q, "minus1_sq": self.minus1_sq}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        return cls(
            label=str(mapping["label"]),
            norm_sq=float(mapping["norm_sq"]),
            q=float(mapping["q"]),
            minus1_sq=float(mapping["minus1_sq"]),
        )


@dataclass(frozen=True, slots=True, kw_only=True)
class ProbeReport(MultiformatModelMixin):
    """Least D making ‖g‖² <= ε Q(g) + D ‖g‖²₋₁ hold on a family of forms."""

    epsilon: float
    d_min: float
    family_id: str
    ledger: tuple[ProbeLedgerEntry, ...] = ()

    def holds(self, slack: float = 1e-9) -> bool:
        return all(e.slack(self.epsilon, self.d_min) >= -slack for e in self.ledger)

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "epsilon": self.epsilon,
            "d_min": self.d_min,
            "family_id": self.family_id,
            "ledger": [e.to_mapping() for e in self.ledger],
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        return cls(
            epsilon=float(mapping["epsilon"]),
            d_min=float(mapping["d_min"]),
            family_id=str(mapping["family_id"]),
            ledger=tuple(ProbeLedgerEntry.from_mapping(e) for e in mapping.get("ledger", ())),
        )


@dataclass(frozen=True, slots=True, kw_only=True)
class WitnessCertificate(MultiformatModelMixin):
    """
    Certified shift α_j of the witness form, carried as log α.

    `lhs` and `rhs` are the two sides of the α-inequality at `log_alpha`,
    with their quadrature error estimates. `r_quotient` and `c_f` are filled
    in once the quotient has been evaluated.
    """

    j: int
    log_alpha: float
    lhs: float
    rhs: float
    lhs_error: float
    rhs_error: float
    margin: float
    quad_tol: float
    halvings: int
    a1: float
    a2: float
    r_quotient: float | None = None
    c_f: float | None = None

    @property
    def alpha(self) -> float:
        """exp(log_alpha); underflows to 0.0 for the large j values."""
        return math.exp(self.log_alpha)

    @property
    def bound(self) -> float | None:
        return None if self.c_f is None else 1.0 / self.j**2 + self.c_f

    @property
    def inequality_holds(self) -> bool:
        return self.rhs - self.rhs_error >= (1.0 + self.margin) * (self.lhs + self.lhs_error)

    @property
    def quotient_within_bound(self) -> bool:
        bound = self.bound
        return self.r_quotient is not None and bound is not None and self.r_quotient <= bound + 1e-3

    def alpha_text(self) -> str:
        value = self.alpha
        return repr(value) if value > 0.0 else f"exp({self.log_alpha:.6f})"

    def key(self) -> tuple[int, float, float, float]:
        return (self.j, self.quad_tol, self.a1, self.a2)

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "j": self.j,
            "log_alpha": self.log_alpha,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "lhs_error": self.lhs_error,
            "rhs_error": self.rhs_error,
            "margin": self.margin,
            "quad_tol": self.quad_tol,
            "halvings": self.halvings,
            "a1": self.a1,
            "a2": self.a2,
            "r_quotient": self.r_quotient,
            "c_f": self.c_f,
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        opt = mapping.get
        return cls(
            j=int(mapping["j"]),
            log_alpha=float(mapping["log_alpha"]),
            lhs=float(mapping["lhs"]),
            rhs=float(mapping["rhs"]),
            lhs_error=float(mapping["lhs_error"]),
            rhs_error=float(mapping["rhs_error"]),
            margin=float(mapping["margin"]),
            quad_tol=float(mapping["quad_tol"]),
            halvings=int(mapping["halvings"]),
            a1=float(mapping["a1"]),
            a2=float(mapping["a2"]),
            r_quotient=None if opt("r_quotient") is None else float(mapping["r_quotient"]),
            c_f=None if opt("c_f") is None else float(mapping["c_f"]),
        )


@dataclass(frozen=True, slots=True, kw_only=True)
class MkhReport(MultiformatModelMixin):
    weight: str
    lhs: float
    rhs: float
    slack: float
    norm_sq: float = 0.0

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.slack

    @property
    def violation(self) -> float:
        """Excess of lhs over rhs relative to ‖u‖² + rhs, zero when lhs <= rhs."""
        scale = self.norm_sq + self.rhs
        return max(0.0, self.lhs - self.rhs) / scale if scale > 0.0 else 0.0

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "weight": self.weight,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "norm_sq": self.norm_sq,
            "pass": self.passed,
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        return cls(
            weight=str(mapping["weight"]),
            lhs=float(mapping["lhs"]),
            rhs=float(mapping["rhs"]),
            slack=float(mapping["slack"]),
            norm_sq=float(mapping.get("norm_sq", 0.0)),
        )


@dataclass(frozen=True, slots=True, kw_only=True)
class ExperimentRow(MultiformatModelMixin):
    """One CSV row. Columns that do not apply to an experiment stay None."""

    experiment: str
    domain: str = ""
    neighborhood: str = ""
    h: float | None = None
    dofs: int | None = None
    lambda_value: float | None = None
    residual: float | None = None
    witness_bound: float | None = None
    alpha: str | None = None
    r_quotient: float | None = None
    passed: bool = True

    def csv_cells(self) -> list[str]:
        def cell(value: Any) -> str:
            if value is None:
                return ""
            if isinstance(value, bool):
                return "true" if value else "false"
            if isinstance(value, float):
                return repr(value)
            return str(value)

        mapping = self.to_mapping()
        return [cell(mapping[c]) for c in CSV_COLUMNS]

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "experiment": self.experiment,
            "domain": self.domain,
            "neighborhood": self.neighborhood,
            "h": self.h,
            "dofs": self.dofs,
            "lambda": self.lambda_value,
            "residual": self.residual,
            "witness_bound": self.witness_bound,
            "alpha": self.alpha,
            "r_quotient": self.r_quotient,
            "pass": self.passed,
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        def num(key: str) -> float | None:
            value = mapping.get(key)
            return None if value in (None, "") else float(value)

        dofs = mapping.get("dofs")
        passed = mapping.get("pass", True)
        return cls(
            experiment=str(mapping["experiment"]),
            domain=str(mapping.get("domain", "")),
            neighborhood=str(mapping.get("neighborhood", "")),
            h=num("h"),
            dofs=None if dofs in (None, "") else int(dofs),
            lambda_value=num("lambda"),
            residual=num("residual"),
            witness_bound=num("witness_bound"),
            alpha=mapping.get("alpha") or None,
            r_quotient=num("r_quotient"),
            passed=passed if isinstance(passed, bool) else str(passed).lower() == "true",
        )


@dataclass(frozen=True, slots=True, kw_only=True)
class ExperimentReport(MultiformatModelMixin):
    """Everything one experiment run produced; the JSON report payload."""

    kind: str
    config: Mapping[str, Any]
    rows: tuple[ExperimentRow, ...]
    ledger: Mapping[str, Any] = field(default_factory=dict)
    certificates: tuple[WitnessCertificate, ...] = ()
    versions: Mapping[str, str] = field(default_factory=dict)
    seed: int = 0
    timestamp: str = ""
    failures: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.failures and all(r.passed for r in self.rows)

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "kind": self.kind,
            "config": normalize(self.config),
            "rows": [r.to_mapping() for r in self.rows],
            "ledger": normalize(self.ledger),
            "certificates": [c.to_mapping() for c in self.certificates],
            "versions": dict(self.versions),
            "seed": self.seed,
            "timestamp": self.timestamp,
            "failures": list(self.failures),
            "passed": self.passed,
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        return cls(
            kind=str(mapping["kind"]),
            config=dict(mapping.get("config", {})),
            rows=tuple(ExperimentRow.from_mapping(r) for r in mapping.get("rows", ())),
            ledger=dict(mapping.get("ledger", {})),
            certificates=tuple(
                WitnessCertificate.from_mapping(c) for c in mapping.get("certificates", ())
            ),
            versions=dict(mapping.get("versions", {})),
            seed=int(mapping.get("seed", 0)),
            timestamp=str(mapping.get("timestamp", "")),
            failures=tuple(mapping.get("failures", ())),
        )
