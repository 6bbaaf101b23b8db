"""
Weighted Morey-Kohn-Hörmander check for (0,1)-forms on a lattice.

For a nonpositive weight b the continuum inequality reads

    Σ_jk ∫ e^b b_jk u_j conj(u_k) dV <= ‖∂̄u‖² + ‖∂̄*u‖²

with b_jk = ∂²b/∂z_j∂zbar_k. On the lattice it holds up to O(h), so every
check carries an explicit slack.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from dbar_lab.dbar import q_value
from dbar_lab.model.fields import FormField01, SeparableForm01
from dbar_lab.model.grid import GridDomain
from dbar_lab.model.reports import MkhReport

WeightFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
HessianFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]

HERMITIAN_TOL = 1e-12


class MkhError(RuntimeError):
    """Base error of the weighted inequality checker."""


class NonHermitianHessianError(MkhError):
    pass


class PositiveWeightError(MkhError):
    pass


@dataclass(frozen=True, slots=True, kw_only=True)
class WeightSpec:
    """
    A weight b(z1, z2) with its analytic complex Hessian.

    `value` maps complex arrays z1, z2 to real values; `hessian` maps them to
    an array of shape (..., 2, 2) holding ∂²b/∂z_j∂zbar_k.
    """

    name: str
    value: WeightFunction
    hessian: HessianFunction
    params: Mapping[str, float] = field(default_factory=dict)

    def describe(self) -> Mapping[str, Any]:
        return {"name": self.name, **self.params}


def _constant_hessian(scale: float) -> HessianFunction:
    def hessian(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
        shape = np.broadcast(z1, z2).shape
        return np.broadcast_to(scale * np.eye(2, dtype=complex), (*shape, 2, 2))

    return hessian


def zero_weight() -> WeightSpec:
    return WeightSpec(
        name="zero",
        value=lambda z1, z2: np.zeros(np.broadcast(z1, z2).shape),
        hessian=_constant_hessian(0.0),
    )


def quadratic_weight(radius_sq: float) -> WeightSpec:
    """b = |z|² - R²; nonpositive on the ball of radius R, Hessian the identity."""
    return WeightSpec(
        name="quadratic",
        value=lambda z1, z2: np.abs(z1) ** 2 + np.abs(z2) ** 2 - radius_sq,
        hessian=_constant_hessian(1.0),
        params={"radius_sq": radius_sq},
    )


def scaled_weight(radius_sq: float, delta: float) -> WeightSpec:
    """b = -δ(R² - |z|²), Hessian δ times the identity."""
    if not delta > 0.0:
        raise MkhError(f"delta must be positive, got {delta}")
    return WeightSpec(
        name="scaled",
        value=lambda z1, z2: -delta * (radius_sq - np.abs(z1) ** 2 - np.abs(z2) ** 2),
        hessian=_constant_hessian(delta),
        params={"radius_sq": radius_sq, "delta": delta},
    )


def builtin_weights(radius_sq: float, delta: float = 0.5) -> dict[str, WeightSpec]:
    return {
        "zero": zero_weight(),
        "quadratic": quadratic_weight(radius_sq),
        "scaled": scaled_weight(radius_sq, delta),
    }


def _hermitian_part(h: np.ndarray) -> np.ndarray:
    adjoint = np.conj(np.swapaxes(h, -1, -2))
    scale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    if np.max(np.abs(h - adjoint), initial=0.0) > HERMITIAN_TOL * scale:
        raise NonHermitianHessianError("complex Hessian of the weight is not Hermitian")
    return 0.5 * (h + adjoint)


def validate_weight(w: WeightSpec, z1: np.ndarray, z2: np.ndarray) -> None:
    """
    Raises:
        PositiveWeightError: If b > 0 at a sample.
        NonHermitianHessianError: If the Hessian is not Hermitian at a sample.
    """
    b = np.asarray(w.value(z1, z2), dtype=float)
    if np.any(b > 0.0):
        raise PositiveWeightError(f"weight {w.name!r} is positive at {int(np.sum(b > 0.0))} samples")
    _hermitian_part(np.asarray(w.hessian(z1, z2), dtype=complex))


def _support_data(u: FormField01, grid: GridDomain) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nodes = np.flatnonzero((np.abs(u.f1) + np.abs(u.f2)).reshape(-1) > 0.0)
    pts = grid.box_points.reshape(-1, 4)[nodes]
    z1 = pts[:, 0] + 1j * pts[:, 1]
    z2 = pts[:, 2] + 1j * pts[:, 3]
    comps = np.stack([u.f1.reshape(-1)[nodes], u.f2.reshape(-1)[nodes]], axis=-1)
    return z1, z2, comps


def _as_form(u: FormField01 | SeparableForm01) -> FormField01:
    return u.to_form() if isinstance(u, SeparableForm01) else u


# :: FeatureStart | name=mkh_lhs
def mkh_lhs(w: WeightSpec, u: FormField01 | SeparableForm01, grid: GridDomain | None = None) -> float:
    """
    Σ_jk Σ_nodes e^b b_jk u_j conj(u_k) h⁴.

    Raises:
        NonHermitianHessianError: If the weight's Hessian is not Hermitian.
    """
    form = _as_form(u)
    grid = grid or form.grid
    z1, z2, comps = _support_data(form, grid)
    if comps.shape[0] == 0:
        return 0.0
    hess = _hermitian_part(np.asarray(w.hessian(z1, z2), dtype=complex))
    weight = np.exp(np.asarray(w.value(z1, z2), dtype=float))
    density = np.einsum("n,njk,nj,nk->n", weight, hess, comps, np.conj(comps))
    total = complex(np.sum(density)) * grid.h**4
    magnitude = float(np.sum(np.abs(density))) * grid.h**4
    if abs(total.imag) > 1e-12 * max(1.0, magnitude):
        raise NonHermitianHessianError(f"weighted form has imaginary part {total.imag:.3g}")
    return total.real
# :: FeatureEnd | name=mkh_lhs | outcome=ok


def slack_allowance(constant: float, h: float, norm_sq: float, rhs: float) -> float:
    """The discretization slack c·h·(‖u‖² + rhs)."""
    return constant * h * (norm_sq + rhs)


# :: FeatureStart | name=mkh_check
def mkh_check(
    w: WeightSpec,
    u: FormField01 | SeparableForm01,
    grid: GridDomain | None = None,
    slack: float = 0.0,
    *,
    slack_constant: float | None = None,
) -> MkhReport:
    """
    Compares the weighted curvature term with Q(u, u).

    Args:
        slack (float): Fixed allowance added to the right-hand side.
        slack_constant (float | None): When given, the allowance is
            `slack_allowance(slack_constant, h, ‖u‖², Q(u, u))` instead.
    """
    rhs = q_value(u)
    norm = u.norm_sq()
    if slack_constant is not None:
        h = grid.h if grid is not None else (u.h if isinstance(u, SeparableForm01) else u.grid.h)
        slack = slack_allowance(slack_constant, h, norm, rhs)
    report = MkhReport(weight=w.name, lhs=mkh_lhs(w, u, grid), rhs=rhs, slack=slack, norm_sq=norm)
    if not report.passed:
        logging.debug(
            f"[mkh] {w.name}: lhs={report.lhs:.6g} exceeds rhs={report.rhs:.6g} + slack={slack:.3g}"
        )
    return report
# :: FeatureEnd | name=mkh_check | outcome=ok


def mkh_check_scaled(
    w: WeightSpec, u: FormField01 | SeparableForm01, grid: GridDomain, constant: float
) -> MkhReport:
    """mkh_check with the slack c·h·(‖u‖² + rhs)."""
    return mkh_check(w, u, grid, slack_constant=constant)


@dataclass(frozen=True, slots=True)
class RefinementLevel:
    h: float
    reports: tuple[MkhReport, ...]

    @property
    def failures(self) -> int:
        return sum(1 for r in self.reports if not r.passed)

    @property
    def max_violation(self) -> float:
        return max((r.violation for r in self.reports), default=0.0)


def violations_shrink(levels: Sequence[RefinementLevel]) -> bool:
    """
    True when the worst violation never grows as h decreases.

    Levels are ordered by decreasing h. A level with no violation counts as
    shrinking.
    """
    ordered = sorted(levels, key=lambda lv: -lv.h)
    worst = [lv.max_violation for lv in ordered]
    return all(b <= a or b == 0.0 for a, b in zip(worst, worst[1:]))


__all__ = [
    "MkhError",
    "NonHermitianHessianError",
    "PositiveWeightError",
    "RefinementLevel",
    "WeightSpec",
    "builtin_weights",
    "mkh_check",
    "mkh_check_scaled",
    "mkh_lhs",
    "quadratic_weight",
    "scaled_weight",
    "slack_allowance",
    "validate_weight",
    "violations_shrink",
    "zero_weight",
]
