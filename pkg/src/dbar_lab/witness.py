"""
The witness forms phi_j = f(z1) g_j(z2) dzbar1 of the analytic-disc model.

g_j(z) = chi_j(|z|^2) / (z - i alpha_j) on the lower half plane. The shift
alpha_j is chosen so that the cutoff derivative integral over W2 is dominated
by the cutoff integral over W1; that choice keeps the Rayleigh quotients of
phi_j bounded in j. alpha_j shrinks like exp(-c j^4), so it is carried as its
logarithm throughout and never materialized as a float where it would
underflow.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Any

import numpy as np
from scipy.integrate import quad
from scipy.special import expit
from typing_extensions import Self

from dbar_lab.geometry import DEFAULT_CONSTANTS, witness_neighborhood
from dbar_lab.internal.util.multiformat import MultiformatModelMixin
from dbar_lab.internal.util.toml import dump_toml_to_file, load_toml_file
from dbar_lab.model.fields import FormField01, SeparableForm01, SeparableSlot
from dbar_lab.model.grid import GridDomain, Support
from dbar_lab.model.regions import ModelConstants, PlanarRegion
from dbar_lab.model.reports import WitnessCertificate
from dbar_lab.quadrature import QuadResult, QuadRule, integrate

MARGIN = 0.05
MAX_HALVINGS = 2**20
# below this alpha/r0 the shift cannot change |z - i alpha| off the plateau in double precision
NEGLIGIBLE_SHIFT = 1e-17
BUMP_RADIUS = 2.0 / 3.0


class WitnessError(RuntimeError):
    """Base error of the witness construction."""


class AlphaSearchError(WitnessError):
    """The α search ran out of halvings without satisfying the inequality."""


class CertificateError(WitnessError):
    """A stored certificate no longer satisfies the α-inequality."""


# --------------------------------------------------------------------------- #
# Cutoff and bump profiles
# --------------------------------------------------------------------------- #


def smooth_step(x: np.ndarray | float) -> np.ndarray:
    """
    C-infinity step psi(x) / (psi(x) + psi(1 - x)) with psi(x) = exp(-1/x).

    Zero for x <= 0 and one for x >= 1. Evaluated as a logistic function of
    1/(1-x) - 1/x so that neither exponential overflows.
    """
    x = np.asarray(x, dtype=float)
    inner = (x > 0.0) & (x < 1.0)
    xs = np.where(inner, x, 0.5)
    value = expit(1.0 / (1.0 - xs) - 1.0 / xs)
    return np.where(inner, value, np.where(x >= 1.0, 1.0, 0.0))


def smooth_step_prime(x: np.ndarray | float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inner = (x > 0.0) & (x < 1.0)
    xs = np.where(inner, x, 0.5)
    s = expit(1.0 / (1.0 - xs) - 1.0 / xs)
    slope = s * (1.0 - s) * (1.0 / (1.0 - xs) ** 2 + 1.0 / xs**2)
    return np.where(inner, slope, 0.0)


@dataclass(frozen=True, slots=True, kw_only=True)
class CutoffSpec(MultiformatModelMixin):
    """
    chi_j: equal to one on |t| <= 1/(4j^2), zero on |t| >= 1/j^2, even.
    """

    j: int
    profile: str = "smooth-step"

    def __post_init__(self) -> None:
        if self.j < 1:
            raise WitnessError(f"cutoff index must be positive, got {self.j}")
        if self.profile != "smooth-step":
            raise WitnessError(f"unknown cutoff profile {self.profile!r}")

    @property
    def t0(self) -> float:
        return 1.0 / (4.0 * self.j**2)

    @property
    def t1(self) -> float:
        return 1.0 / self.j**2

    @property
    def plateau_radius(self) -> float:
        """Radius in the z2 plane where chi_j(|z|^2) stops being one."""
        return 1.0 / (2.0 * self.j)

    @property
    def support_radius(self) -> float:
        return 1.0 / self.j

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {"j": self.j, "profile": self.profile}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        return cls(j=int(mapping["j"]), profile=str(mapping.get("profile", "smooth-step")))


# :: UtilityOperation | type=cutoff
def chi(spec: CutoffSpec, t: np.ndarray | float) -> np.ndarray:
    x = (np.abs(np.asarray(t, dtype=float)) - spec.t0) / (spec.t1 - spec.t0)
    return 1.0 - smooth_step(x)


def chi_prime(spec: CutoffSpec, t: np.ndarray | float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    width = spec.t1 - spec.t0
    x = (np.abs(t) - spec.t0) / width
    return -np.sign(t) * smooth_step_prime(x) / width


@dataclass(frozen=True, slots=True, kw_only=True)
class BumpProfile(MultiformatModelMixin):
    """Radial bump exp(1 - 1/(1 - s^2)), s = |z| / radius, supported in the disc."""

    radius: float = BUMP_RADIUS

    def __post_init__(self) -> None:
        if not 0.0 < self.radius <= BUMP_RADIUS:
            raise WitnessError(f"bump radius must lie in (0, 2/3], got {self.radius}")

    def value(self, z: np.ndarray | complex) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        s2 = np.abs(z) ** 2 / self.radius**2
        inside = s2 < 1.0
        safe = np.where(inside, s2, 0.0)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)

    def dz(self, z: np.ndarray | complex) -> np.ndarray:
        """∂f/∂z = -f zbar / (radius^2 (1 - s^2)^2)."""
        z = np.asarray(z, dtype=complex)
        s2 = np.abs(z) ** 2 / self.radius**2
        inside = s2 < 1.0
        safe = np.where(inside, s2, 0.0)
        f = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)
        return np.where(inside, -f * np.conj(z) / (self.radius**2 * (1.0 - safe) ** 2), 0.0)

    def region(self) -> PlanarRegion:
        return PlanarRegion.disc(self.radius)

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {"radius": self.radius}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        return cls(radius=float(mapping.get("radius", BUMP_RADIUS)))


def default_bump() -> BumpProfile:
    return BumpProfile()


@lru_cache(maxsize=32)
def _bump_norms(radius: float, tol: float) -> tuple[float, float]:
    bump = BumpProfile(radius=radius)
    region = bump.region()
    top = integrate(region, lambda z: np.abs(bump.dz(z)) ** 2, tol).real
    bottom = integrate(region, lambda z: np.abs(bump.value(z)) ** 2, tol).real
    return top, bottom


def bump_constant(bump: BumpProfile | None = None, tol: float = 1e-10) -> float:
    """C_f = ‖∂f/∂z‖² / ‖f‖² over the bump's disc, cached per (radius, tol)."""
    bump = bump or default_bump()
    top, bottom = _bump_norms(bump.radius, tol)
    return top / bottom


# --------------------------------------------------------------------------- #
# The witness itself
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, slots=True, kw_only=True)
class WitnessSpec(MultiformatModelMixin):
    j: int
    log_alpha: float
    cutoff: CutoffSpec
    bump: BumpProfile

    def __post_init__(self) -> None:
        if self.cutoff.j != self.j:
            raise WitnessError("cutoff index does not match the witness index")
        if not math.isfinite(self.log_alpha):
            raise WitnessError("log_alpha must be finite")

    @classmethod
    def build(
        cls, j: int, *, alpha: float | None = None, log_alpha: float | None = None, bump: BumpProfile | None = None
    ) -> WitnessSpec:
        return cls(
            j=j,
            log_alpha=_resolve_log_alpha(alpha, log_alpha),
            cutoff=CutoffSpec(j=j),
            bump=bump or default_bump(),
        )

    @classmethod
    def from_certificate(cls, cert: WitnessCertificate, bump: BumpProfile | None = None) -> WitnessSpec:
        return cls.build(cert.j, log_alpha=cert.log_alpha, bump=bump)

    @property
    def alpha(self) -> float:
        """exp(log_alpha), possibly 0.0 after underflow."""
        return math.exp(self.log_alpha)

    def g(self, z2: np.ndarray | complex) -> np.ndarray:
        z2 = np.asarray(z2, dtype=complex)
        shifted = z2 - 1j * self.alpha
        weight = chi(self.cutoff, np.abs(z2) ** 2)
        out = np.zeros(np.broadcast(z2).shape, dtype=complex)
        return np.divide(weight, shifted, out=out, where=(weight != 0.0) & (shifted != 0.0))

    def g_dzbar(self, z2: np.ndarray | complex) -> np.ndarray:
        """∂g/∂zbar = chi'(|z|^2) z / (z - i alpha); zero on the plateau."""
        z2 = np.asarray(z2, dtype=complex)
        shifted = z2 - 1j * self.alpha
        weight = chi_prime(self.cutoff, np.abs(z2) ** 2) * z2
        out = np.zeros(np.broadcast(z2).shape, dtype=complex)
        return np.divide(weight, shifted, out=out, where=(weight != 0.0) & (shifted != 0.0))

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "j": self.j,
            "log_alpha": self.log_alpha,
            "cutoff": self.cutoff.to_mapping(),
            "bump": self.bump.to_mapping(),
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        j = int(mapping["j"])
        return cls(
            j=j,
            log_alpha=float(mapping["log_alpha"]),
            cutoff=CutoffSpec.from_mapping(mapping.get("cutoff", {"j": j})),
            bump=BumpProfile.from_mapping(mapping.get("bump", {})),
        )


def _resolve_log_alpha(alpha: float | None, log_alpha: float | None) -> float:
    if (alpha is None) == (log_alpha is None):
        raise WitnessError("pass exactly one of alpha and log_alpha")
    if log_alpha is not None:
        return float(log_alpha)
    assert alpha is not None
    if not alpha > 0.0:
        raise WitnessError(f"alpha must be positive, got {alpha}")
    return math.log(alpha)


# :: FeatureStart | name=witness_eval
def witness_eval(
    spec: WitnessSpec, z1: np.ndarray | complex, z2: np.ndarray | complex
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Pointwise data of phi_j on the model domain.

    Returns:
        tuple: The dzbar1 coefficient f g, the dzbar1^dzbar2 coefficient
        -f ∂g/∂zbar2 of ∂̄phi, and ∂̄*phi = -g ∂f/∂z1.
    """
    f = spec.bump.value(z1)
    g = spec.g(z2)
    return f * g, -f * spec.g_dzbar(z2), -g * spec.bump.dz(z1)
# :: FeatureEnd | name=witness_eval | outcome=ok


# --------------------------------------------------------------------------- #
# The two sides of the alpha inequality
# --------------------------------------------------------------------------- #


def _plateau_integral(
    theta_min: float, theta_max: float, radius: float, log_alpha: float, tol: float
) -> tuple[float, float]:
    """
    ∫∫ r dr dθ / |r e^{iθ} - iα|² over r < radius, θ in a lower-half-plane range.

    The radial integral has a closed form; only the angular one is numerical.
    """
    if not -math.pi - 1e-12 <= theta_min < theta_max <= 1e-12:
        raise WitnessError("plateau sector must lie in the closed lower half plane")
    ln_r = math.log(radius)
    eps = math.exp(log_alpha - ln_r)

    def radial(theta: float) -> float:
        s, c = math.sin(theta), abs(math.cos(theta))
        gap = eps - s
        if c > 1e-6:
            twist = s * math.atan2(c, gap) / c
        else:
            x = c / gap
            twist = (s / gap) * (1.0 - x * x / 3.0)
        return 0.5 * math.log1p(eps * eps - 2.0 * eps * s) + twist

    extra, err = quad(radial, theta_min, theta_max, epsabs=0.0, epsrel=tol * 0.1, limit=200)
    return (theta_max - theta_min) * (ln_r - log_alpha) + extra, err


@lru_cache(maxsize=1024)
def _annulus_integral(
    kind: str,
    j: int,
    alpha: float,
    theta_min: float,
    theta_max: float,
    r_in: float,
    r_out: float,
    tol: float,
    max_cells: int,
) -> QuadResult:
    cutoff = CutoffSpec(j=j)
    shift = 1j * alpha

    def integrand(z: np.ndarray) -> np.ndarray:
        t = np.abs(z) ** 2
        denominator = np.abs(z - shift) ** 2
        match kind:
            case "cutoff":
                return chi(cutoff, t) ** 2 / denominator
            case "slope":
                return chi_prime(cutoff, t) ** 2 / denominator
            case "dbar":
                return chi_prime(cutoff, t) ** 2 * t / denominator
        raise WitnessError(f"unknown annulus integrand {kind!r}")

    region = PlanarRegion.sector(r_out, theta_min, theta_max, inner_radius=r_in)
    hot = (shift,) if alpha > 0.0 else ()
    return integrate(region, integrand, tol, hot_points=hot, max_cells=max_cells)


def _effective_alpha(j: int, log_alpha: float) -> float:
    r0 = CutoffSpec(j=j).plateau_radius
    if log_alpha - math.log(r0) < math.log(NEGLIGIBLE_SHIFT):
        return 0.0
    return math.exp(log_alpha)


def _outer(
    kind: str, j: int, log_alpha: float, theta: tuple[float, float], r_out: float, tol: float, max_cells: int
) -> QuadResult:
    r0 = CutoffSpec(j=j).plateau_radius
    if r_out <= r0:
        return QuadResult(value=0j, error_estimate=0.0, cells_used=0)
    return _annulus_integral(
        kind, j, _effective_alpha(j, log_alpha), theta[0], theta[1], r0, r_out, tol, max_cells
    )


def _combine(plateau: tuple[float, float], outer: QuadResult) -> QuadResult:
    value, err = plateau
    return QuadResult(
        value=complex(value + outer.real),
        error_estimate=err + outer.error_estimate,
        cells_used=outer.cells_used,
    )


W1_ANGLES = (-2.0 * math.pi / 3.0, -math.pi / 3.0)
W2_ANGLES = (-4.0 * math.pi / 3.0, math.pi / 3.0)
LOWER_ANGLES = (-math.pi, 0.0)


def alpha_lhs(
    j: int,
    alpha: float | None = None,
    *,
    log_alpha: float | None = None,
    tol: float = 1e-8,
    constants: ModelConstants = DEFAULT_CONSTANTS,
    max_cells: int = 20_000,
) -> QuadResult:
    """
    ∫ |chi_j'(|z|²)|² / |z - iα|² over W2 ∩ B(0, 1/j).

    chi_j' vanishes on the plateau, so only the annulus past 1/(2j) contributes.
    """
    la = _resolve_log_alpha(alpha, log_alpha)
    r_out = min(constants.a2, CutoffSpec(j=j).support_radius)
    return _outer("slope", j, la, W2_ANGLES, r_out, tol, max_cells)


def alpha_rhs(
    j: int,
    alpha: float | None = None,
    *,
    log_alpha: float | None = None,
    tol: float = 1e-8,
    constants: ModelConstants = DEFAULT_CONSTANTS,
    max_cells: int = 20_000,
) -> QuadResult:
    """∫ chi_j(|z|²)² / |z - iα|² over W1 ∩ B(0, 1/j); grows like log(1/α)."""
    la = _resolve_log_alpha(alpha, log_alpha)
    cutoff = CutoffSpec(j=j)
    r_out = min(constants.a1, cutoff.support_radius)
    plateau = _plateau_integral(*W1_ANGLES, min(r_out, cutoff.plateau_radius), la, tol)
    return _combine(plateau, _outer("cutoff", j, la, W1_ANGLES, r_out, tol, max_cells))


def _satisfied(lhs: QuadResult, rhs: QuadResult, margin: float) -> bool:
    return rhs.real - rhs.error_estimate >= (1.0 + margin) * (lhs.real + lhs.error_estimate)


# :: FeatureStart | name=alpha_bisect
def alpha_bisect(
    j: int,
    tol: float = 1e-8,
    *,
    constants: ModelConstants = DEFAULT_CONSTANTS,
    margin: float = MARGIN,
    max_halvings: int = MAX_HALVINGS,
    max_cells: int = 20_000,
) -> WitnessCertificate:
    """
    Largest alpha = alpha0 * 2^-n (alpha0 = 1/(4j²)) satisfying the α-inequality.

    The number of halvings n grows in galloping blocks until the inequality
    holds with `margin` beyond the combined quadrature errors, then the last
    block is bisected.

    Raises:
        WitnessError: If j < 2.
        AlphaSearchError: If `max_halvings` halvings do not suffice.
    """
    if j < 2:
        raise WitnessError(f"witness index must be at least 2, got {j}")
    log_alpha0 = math.log(1.0 / (4.0 * j * j))
    evaluated: dict[int, tuple[QuadResult, QuadResult, bool]] = {}

    def probe(n: int) -> bool:
        if n not in evaluated:
            la = log_alpha0 - n * math.log(2.0)
            lhs = alpha_lhs(j, log_alpha=la, tol=tol, constants=constants, max_cells=max_cells)
            rhs = alpha_rhs(j, log_alpha=la, tol=tol, constants=constants, max_cells=max_cells)
            evaluated[n] = (lhs, rhs, _satisfied(lhs, rhs, margin))
        return evaluated[n][2]

    lo, hi = -1, 0
    step = 1
    while not probe(hi):
        lo, hi = hi, hi + step
        step *= 2
        if hi > max_halvings:
            raise AlphaSearchError(
                f"alpha inequality for j={j} still fails after {max_halvings} halvings"
            )
        logging.debug(f"[witness] j={j} galloping to {hi} halvings")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if probe(mid):
            hi = mid
        else:
            lo = mid
    lhs, rhs, _ = evaluated[hi]
    log_alpha = log_alpha0 - hi * math.log(2.0)
    logging.debug(
        f"[witness] j={j} certified after {hi} halvings: log_alpha={log_alpha:.6f} "
        f"lhs={lhs.real:.6g} rhs={rhs.real:.6g}"
    )
    return WitnessCertificate(
        j=j,
        log_alpha=log_alpha,
        lhs=lhs.real,
        rhs=rhs.real,
        lhs_error=lhs.error_estimate,
        rhs_error=rhs.error_estimate,
        margin=margin,
        quad_tol=tol,
        halvings=hi,
        a1=constants.a1,
        a2=constants.a2,
    )
# :: FeatureEnd | name=alpha_bisect | outcome=ok


# --------------------------------------------------------------------------- #
# Quotients
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, slots=True)
class QuotientTerms:
    """The factor norms behind R_j, with their quadrature errors."""

    g_norm_sq: float
    dbar_g_norm_sq: float
    c_f: float
    error_estimate: float

    @property
    def total(self) -> float:
        return self.dbar_g_norm_sq / self.g_norm_sq + self.c_f


def quotient_terms(spec: WitnessSpec, tol: float = 1e-8, *, max_cells: int = 20_000) -> QuotientTerms:
    cutoff = spec.cutoff
    r0, r1 = cutoff.plateau_radius, cutoff.support_radius
    plateau = _plateau_integral(*LOWER_ANGLES, r0, spec.log_alpha, tol)
    g_sq = _combine(plateau, _outer("cutoff", spec.j, spec.log_alpha, LOWER_ANGLES, r1, tol, max_cells))
    dg_sq = _outer("dbar", spec.j, spec.log_alpha, LOWER_ANGLES, r1, tol, max_cells)
    return QuotientTerms(
        g_norm_sq=g_sq.real,
        dbar_g_norm_sq=dg_sq.real,
        c_f=bump_constant(spec.bump, tol),
        error_estimate=g_sq.error_estimate + dg_sq.error_estimate,
    )


# :: FeatureStart | name=witness_quotient
def witness_quotient(spec: WitnessSpec, tol: float = 1e-8, *, max_cells: int = 20_000) -> float:
    """
    R_j = ‖∂g/∂zbar‖²/‖g‖² over H_j plus ‖∂f/∂z‖²/‖f‖² over D1.

    H_j is the lower half of the disc |z| < 1/j. The product structure of
    phi_j splits the 4-D quotient exactly into these two planar ones.
    """
    return quotient_terms(spec, tol, max_cells=max_cells).total
# :: FeatureEnd | name=witness_quotient | outcome=ok


def witness_bound(j: int, bump: BumpProfile | None = None, tol: float = 1e-10) -> float:
    return 1.0 / j**2 + bump_constant(bump, tol)


def witness_quotient_direct(spec: WitnessSpec, tol: float = 1e-6, *, max_cells: int = 20_000) -> float:
    """
    4-D quotient (∫|f|²|∂g|² + ∫|f'|²|g|²) / ∫|f|²|g|² on a tensor rule.

    The planar rules are the converged cubatures of the two factor norms;
    every pair of nodes is evaluated through `witness_eval`.

    Raises:
        WitnessError: If alpha is too small for the z2 rule to resolve.
    """
    r0 = spec.cutoff.plateau_radius
    if spec.log_alpha < math.log(1e-8 * r0):
        raise WitnessError("direct quotient needs alpha >= 1e-8 * 1/(2j)")
    alpha = spec.alpha
    bump = spec.bump
    rule1 = integrate(
        bump.region(),
        lambda z: np.abs(bump.value(z)) ** 2 + np.abs(bump.dz(z)) ** 2,
        tol,
        max_cells=max_cells,
        keep_rule=True,
    ).rule
    half_disc = PlanarRegion.sector(spec.cutoff.support_radius, *LOWER_ANGLES)
    rule2 = integrate(
        half_disc,
        lambda z: np.abs(spec.g(z)) ** 2 + np.abs(spec.g_dzbar(z)) ** 2,
        tol,
        hot_points=(1j * alpha,),
        max_cells=max_cells,
        keep_rule=True,
    ).rule
    assert rule1 is not None and rule2 is not None
    return _tensor_quotient(spec, rule1, rule2)


def _tensor_quotient(spec: WitnessSpec, rule1: QuadRule, rule2: QuadRule, chunk: int = 256) -> float:
    top = 0.0
    bottom = 0.0
    z2 = rule2.points[None, :]
    w2 = rule2.weights[None, :]
    for start in range(0, len(rule1), chunk):
        z1 = rule1.points[start : start + chunk, None]
        w = rule1.weights[start : start + chunk, None] * w2
        value, dbar_value, dbar_star = witness_eval(spec, z1, z2)
        top += float(np.sum(w * (np.abs(dbar_value) ** 2 + np.abs(dbar_star) ** 2)))
        bottom += float(np.sum(w * np.abs(value) ** 2))
    if bottom == 0.0:
        raise WitnessError("witness form vanishes on the cubature nodes")
    return top / bottom


# --------------------------------------------------------------------------- #
# Certificates
# --------------------------------------------------------------------------- #


def certify(
    j: int,
    tol: float = 1e-8,
    *,
    constants: ModelConstants = DEFAULT_CONSTANTS,
    bump: BumpProfile | None = None,
    margin: float = MARGIN,
    max_cells: int = 20_000,
) -> WitnessCertificate:
    """α search followed by the quotient, in one certificate."""
    cert = alpha_bisect(j, tol, constants=constants, margin=margin, max_cells=max_cells)
    terms = quotient_terms(WitnessSpec.from_certificate(cert, bump), tol, max_cells=max_cells)
    return replace(cert, r_quotient=terms.total, c_f=terms.c_f)


def revalidate(cert: WitnessCertificate, *, tol: float | None = None, max_cells: int = 20_000) -> WitnessCertificate:
    """
    Recomputes both sides of the α-inequality at the stored log_alpha.

    Raises:
        CertificateError: If the inequality no longer holds with the margin.
    """
    tol = tol or cert.quad_tol
    constants = ModelConstants(a1=cert.a1, a2=cert.a2)
    lhs = alpha_lhs(cert.j, log_alpha=cert.log_alpha, tol=tol, constants=constants, max_cells=max_cells)
    rhs = alpha_rhs(cert.j, log_alpha=cert.log_alpha, tol=tol, constants=constants, max_cells=max_cells)
    if not _satisfied(lhs, rhs, cert.margin):
        raise CertificateError(
            f"certificate for j={cert.j} fails: lhs={lhs.real:.6g} rhs={rhs.real:.6g}"
        )
    return replace(
        cert,
        lhs=lhs.real,
        rhs=rhs.real,
        lhs_error=lhs.error_estimate,
        rhs_error=rhs.error_estimate,
    )


class CertificateStore:
    """
    Certificates persisted in a TOML (or JSON) file, keyed by (j, tol, a1, a2).

    Entries are revalidated as they are loaded; failing entries are dropped
    with a warning and recomputed on demand.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = None if path is None else Path(path)
        self._entries: dict[tuple[int, float, float, float], WitnessCertificate] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def load(self) -> CertificateStore:
        if self.path is None or not self.path.exists():
            return self
        if self.path.suffix.lower() == ".json":
            raw = json.loads(self.path.read_text(encoding="utf-8"))
        else:
            raw = load_toml_file(self.path)
        for item in raw.get("certificates", ()):
            cert = WitnessCertificate.from_mapping(item)
            try:
                self._entries[cert.key()] = revalidate(cert)
            except CertificateError as e:
                logging.warning(f"[witness] dropping stored certificate: {e}")
        return self

    def save(self) -> None:
        if self.path is None:
            return
        ordered = sorted(self._entries.values(), key=lambda c: c.key())
        entries = [_without_none(c.to_mapping()) for c in ordered]
        if self.path.suffix.lower() == ".json":
            self.path.parent.mkdir(parents=True, exist_ok=True)
            text = json.dumps({"certificates": entries}, indent=2, sort_keys=True)
            self.path.write_text(text, encoding="utf-8")
        else:
            dump_toml_to_file({"certificates": entries}, self.path)
        logging.info(f"[witness] wrote {len(entries)} certificates to {self.path}")

    def get(self, j: int, tol: float, constants: ModelConstants = DEFAULT_CONSTANTS) -> WitnessCertificate | None:
        return self._entries.get((j, tol, constants.a1, constants.a2))

    def put(self, cert: WitnessCertificate) -> None:
        self._entries[cert.key()] = cert

    def certificate(
        self,
        j: int,
        tol: float = 1e-8,
        *,
        constants: ModelConstants = DEFAULT_CONSTANTS,
        bump: BumpProfile | None = None,
        max_cells: int = 20_000,
    ) -> WitnessCertificate:
        """Stored certificate with its quotient, computing and storing it if missing."""
        cert = self.get(j, tol, constants)
        if cert is None or cert.r_quotient is None:
            cert = certify(j, tol, constants=constants, bump=bump, max_cells=max_cells)
            self.put(cert)
        return cert


def _without_none(mapping: Mapping[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in mapping.items() if v is not None}


# --------------------------------------------------------------------------- #
# Grid witness
# --------------------------------------------------------------------------- #


def grid_witness_spec(j: int, alpha_scale: float, bump: BumpProfile | None = None) -> WitnessSpec:
    """
    Witness with alpha = alpha_scale / j for sampling on a lattice.

    The pole then sits at a fixed fraction of the z2-scale 1/j, so a lattice
    with h proportional to 1/j resolves it equally well for every j. Certified
    shifts are far below any lattice spacing and are never sampled.
    """
    if not alpha_scale > 0.0:
        raise WitnessError(f"alpha_scale must be positive, got {alpha_scale}")
    return WitnessSpec.build(j, alpha=alpha_scale / j, bump=bump)


def witness_support(grid: GridDomain, j: int) -> Support:
    return grid.support_in(witness_neighborhood(j), label=f"V_{j}")


def sample_witness(spec: WitnessSpec, support: Support) -> SeparableForm01 | FormField01:
    """
    phi_j sampled at the nodes of `support`, zero elsewhere.

    Product supports give the separable form f ⊗ g; other supports a dense
    dzbar1 component.
    """
    grid = support.grid
    if support.planes is not None and grid.planes is not None:
        p1, p2 = grid.planes
        m1, m2 = support.planes
        a = np.where(m1, spec.bump.value(p1.points), 0.0).astype(complex)
        b = np.where(m2, spec.g(p2.points), 0.0).astype(complex)
        return SeparableForm01(support, SeparableSlot.DZBAR1, a, b)
    pts = grid.box_points
    z1 = pts[..., 0] + 1j * pts[..., 1]
    z2 = pts[..., 2] + 1j * pts[..., 3]
    values = np.zeros(grid.shape, dtype=complex)
    inside = support.mask
    values[inside] = witness_eval(spec, z1[inside], z2[inside])[0]
    return FormField01(grid, values, np.zeros(grid.shape, dtype=complex))


__all__ = [
    "AlphaSearchError",
    "BumpProfile",
    "CertificateError",
    "CertificateStore",
    "CutoffSpec",
    "QuotientTerms",
    "WitnessError",
    "WitnessSpec",
    "alpha_bisect",
    "alpha_lhs",
    "alpha_rhs",
    "bump_constant",
    "certify",
    "chi",
    "chi_prime",
    "default_bump",
    "grid_witness_spec",
    "quotient_terms",
    "revalidate",
    "sample_witness",
    "smooth_step",
    "witness_bound",
    "witness_eval",
    "witness_quotient",
    "witness_quotient_direct",
    "witness_support",
]
