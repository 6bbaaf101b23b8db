"""
Planar regions, domains in C^2, lattice masks and the neighborhood family of
the analytic-disc model.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from dbar_lab.model.grid import (
    NODE_MARGIN,
    GridDomain,
    GridError,
    PlaneLattice,
    TracePolicy,
    index_range,
    lattice_coords,
)
from dbar_lab.model.regions import (
    DomainLike,
    EmptyMaskError,
    FlatPiece,
    GeometryError,
    HalfPlaneSide,
    ModelConstants,
    NeighborhoodFamily,
    PlanarRegion,
    ProductDomain,
    RegionKind,
    StrictlyPseudoconvexModel,
    UnboundedRegionError,
    sample_region,
)

DEFAULT_CONSTANTS = ModelConstants()

# U_j as written: {|z1| < 1/2 + 1/j} x {|z2| < j^-2}
LITERAL_FAMILY = NeighborhoodFamily(z1_base=0.5, z2_exponent=2, label="U")
# Family wide enough to hold the witness support |z2| < 1/j.
WITNESS_FAMILY = NeighborhoodFamily(z1_base=0.5, z2_exponent=1, label="V")

# Flat piece of the product model: the plane Im z2 = 0 bounding H from above.
MODEL_FLAT_PIECE = FlatPiece(axis=3, level=0.0, direction=1)


# :: UtilityOperation | type=validation
def region_contains(region: PlanarRegion, point: complex) -> bool:
    return bool(region.contains(complex(point)))


def region_area(region: PlanarRegion, *, tol: float = 1e-4) -> float:
    """
    Lebesgue area of a bounded region.

    Primitive kinds use their closed form. Intersections integrate the
    constant one with the adaptive quadrature at relative tolerance `tol`.

    Raises:
        UnboundedRegionError: If the region is unbounded.
    """
    if not region.is_bounded():
        raise UnboundedRegionError(f"region of kind {region.kind.value} is unbounded")
    exact = region.exact_area()
    if exact is not None:
        return exact
    from dbar_lab.quadrature import integrate

    result = integrate(region, lambda z: np.ones(z.shape), tol, max_cells=200_000)
    return float(result.value.real)


# --------------------------------------------------------------------------- #
# The analytic-disc model
# --------------------------------------------------------------------------- #


def d1() -> PlanarRegion:
    return PlanarRegion.disc(2.0 / 3.0)


def d2() -> PlanarRegion:
    return PlanarRegion.disc(2.0)


def w1(a1: float = DEFAULT_CONSTANTS.a1) -> PlanarRegion:
    return PlanarRegion.sector(a1, -2.0 * math.pi / 3.0, -math.pi / 3.0)


def w2(a2: float = DEFAULT_CONSTANTS.a2) -> PlanarRegion:
    return PlanarRegion.sector(a2, -4.0 * math.pi / 3.0, math.pi / 3.0)


def w(a3: float = DEFAULT_CONSTANTS.a3) -> PlanarRegion:
    return PlanarRegion.half_disc(a3, HalfPlaneSide.LOWER)


def model_domain() -> ProductDomain:
    """Ω = {|z1| < 2} x {Im z2 < 0, |z2| < 1} with the flat piece Im z2 = 0."""
    return ProductDomain(
        factor1=d2(),
        factor2=PlanarRegion.half_disc(1.0, HalfPlaneSide.LOWER),
        flat_pieces=(MODEL_FLAT_PIECE,),
        name="product-model",
    )


def siegel_model(half_width: float = 1.0) -> StrictlyPseudoconvexModel:
    return StrictlyPseudoconvexModel(half_width=half_width)


def neighborhood(j: int) -> ProductDomain:
    return LITERAL_FAMILY.member(j)


def witness_neighborhood(j: int) -> ProductDomain:
    """
    {|z1| < 1/2 + 1/j} x {|z2| < 1/j}.

    Contains the support of the witness form for 2 <= j <= 6.
    """
    return WITNESS_FAMILY.member(j)


def polydisc(radius: float, *, name: str = "") -> ProductDomain:
    return ProductDomain(
        factor1=PlanarRegion.disc(radius),
        factor2=PlanarRegion.disc(radius),
        name=name or f"P({radius:g})",
    )


def limit_set_contains(points: np.ndarray) -> np.ndarray:
    """Membership in K = {|z1| <= 1/2, z2 = 0} for real points of shape (..., 4)."""
    return LITERAL_FAMILY.limit_set_contains(points)


def builtin_domains() -> Mapping[str, DomainLike]:
    model = model_domain()
    siegel = siegel_model()
    return {model.name: model, siegel.name: siegel}


# --------------------------------------------------------------------------- #
# Lattices
# --------------------------------------------------------------------------- #


def _clip(bounds: tuple[float, float], window: tuple[float, float] | None) -> tuple[float, float]:
    if window is None:
        return bounds
    return max(bounds[0], window[0]), min(bounds[1], window[1])


# :: MechanicalOperation | type=grid-construction
def build_grid(
    domain: DomainLike,
    h: float,
    *,
    window: DomainLike | None = None,
    policy: TracePolicy | None = None,
) -> GridDomain:
    """
    Builds the masked lattice hZ^4 over a domain.

    Args:
        domain (DomainLike): A product domain or the strictly pseudoconvex
            model.
        h (float): Lattice spacing.
        window (DomainLike | None): Optional region whose bounding box clips
            the lattice box. The mask still follows `domain` only.
        policy (TracePolicy | None): Trace policy on flat pieces; defaults to
            free scalar and dz̄1 components and dirichlet dz̄2.

    Returns:
        GridDomain: The lattice; product domains keep their plane lattices.

    Raises:
        GridError: If h is not positive.
        UnboundedRegionError: If the (clipped) box is unbounded.
        EmptyMaskError: If no lattice node lies strictly inside the domain.
    """
    if not (h > 0.0 and math.isfinite(h)):
        raise GridError("h must be positive")
    policy = policy or TracePolicy.default()
    box = domain.bounding_box()
    if window is not None:
        wbox = window.bounding_box()
        box = tuple(_clip(box[a], wbox[a]) for a in range(4))
    if not all(math.isfinite(v) for pair in box for v in pair):
        raise UnboundedRegionError("cannot build a lattice over an unbounded domain")
    if any(lo >= hi for lo, hi in box):
        raise EmptyMaskError("window does not meet the domain")

    ranges = [index_range(lo, hi, h) for lo, hi in box]
    index_lo = tuple(first for first, _ in ranges)
    shape = tuple(count for _, count in ranges)
    margin = NODE_MARGIN * h

    factors = domain.product_factors()
    if factors is not None:
        planes = []
        for k, region in enumerate(factors):
            lo = (index_lo[2 * k], index_lo[2 * k + 1])
            sh = (shape[2 * k], shape[2 * k + 1])
            pieces = tuple(
                FlatPiece(axis=p.axis - 2 * k, level=p.level, direction=p.direction)
                for p in domain.flat_pieces
                if p.axis // 2 == k
            )
            x = lattice_coords(lo[0], sh[0], h)
            y = lattice_coords(lo[1], sh[1], h)
            mask = region.contains(x[:, None] + 1j * y[None, :], margin)
            planes.append(PlaneLattice(h=h, index_lo=lo, shape=sh, mask=mask, pieces=pieces))
        grid = GridDomain(
            h=h,
            index_lo=index_lo,  # type: ignore[arg-type]
            shape=shape,  # type: ignore[arg-type]
            domain=domain,
            policy=policy,
            planes=(planes[0], planes[1]),
        )
        counts = (int(planes[0].mask.sum()), int(planes[1].mask.sum()))
        if 0 in counts:
            raise EmptyMaskError(f"no lattice node strictly inside {domain.name or 'domain'} at h={h}")
        logging.debug(f"[geometry] product grid h={h} planes={counts} box={shape}")
        return grid

    axes = [lattice_coords(first, count, h) for first, count in ranges]
    points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    mask = domain.contains(points, margin)
    grid = GridDomain(
        h=h,
        index_lo=index_lo,  # type: ignore[arg-type]
        shape=shape,  # type: ignore[arg-type]
        domain=domain,
        policy=policy,
        explicit_mask=mask,
    )
    if not mask.any():
        raise EmptyMaskError(f"no lattice node strictly inside the domain at h={h}")
    logging.debug(f"[geometry] grid h={h} nodes={int(mask.sum())} box={shape}")
    return grid


# --------------------------------------------------------------------------- #
# Sampling checks
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, slots=True)
class ContainmentCheck:
    name: str
    samples: int
    violations: int

    @property
    def holds(self) -> bool:
        return self.violations == 0


def _sample_product(domain: ProductDomain, count: int, rng: np.random.Generator) -> np.ndarray:
    z1 = sample_region(domain.factor1, count, rng)
    z2 = sample_region(domain.factor2, count, rng)
    return np.stack([z1.real, z1.imag, z2.real, z2.imag], axis=-1)


def check_nesting(
    family: NeighborhoodFamily, j: int, *, samples: int = 10_000, seed: int = 0
) -> ContainmentCheck:
    """Spot-checks U_{j+1} ⊂ U_j on seeded samples of U_{j+1}."""
    rng = np.random.default_rng(seed)
    inner, outer = family.member(j + 1), family.member(j)
    pts = _sample_product(inner, samples, rng)
    violations = int(np.count_nonzero(~outer.contains(pts)))
    return ContainmentCheck(f"{inner.name} in {outer.name}", samples, violations)


def verify_model_containments(
    constants: ModelConstants = DEFAULT_CONSTANTS, *, samples: int = 10_000, seed: int = 0
) -> tuple[ContainmentCheck, ...]:
    """
    Spot-checks D1 x W1 ⊂ Ω ∩ B ⊂ D2 x W2 and D1 x W ⊂ Ω by seeded sampling.

    B is the open unit ball of C^2.
    """
    rng = np.random.default_rng(seed)
    omega = model_domain()
    checks: list[ContainmentCheck] = []

    inner = ProductDomain(factor1=d1(), factor2=w1(constants.a1))
    pts = _sample_product(inner, samples, rng)
    in_ball = np.sum(pts**2, axis=-1) < 1.0
    checks.append(
        ContainmentCheck("D1xW1 in Ω∩B", samples, int(np.count_nonzero(~(omega.contains(pts) & in_ball))))
    )

    pts = _sample_product(omega, 4 * samples, rng)
    pts = pts[np.sum(pts**2, axis=-1) < 1.0][:samples]
    outer = ProductDomain(factor1=d2(), factor2=w2(constants.a2))
    checks.append(
        ContainmentCheck("Ω∩B in D2xW2", len(pts), int(np.count_nonzero(~outer.contains(pts))))
    )

    side = ProductDomain(factor1=d1(), factor2=w(constants.a3))
    pts = _sample_product(side, samples, rng)
    checks.append(ContainmentCheck("D1xW in Ω", samples, int(np.count_nonzero(~omega.contains(pts)))))

    for check in checks:
        logging.debug(f"[geometry] containment {check.name}: {check.violations}/{check.samples}")
    return tuple(checks)


__all__ = [
    "ContainmentCheck",
    "EmptyMaskError",
    "GeometryError",
    "GridError",
    "LITERAL_FAMILY",
    "MODEL_FLAT_PIECE",
    "RegionKind",
    "UnboundedRegionError",
    "WITNESS_FAMILY",
    "build_grid",
    "builtin_domains",
    "check_nesting",
    "d1",
    "d2",
    "limit_set_contains",
    "model_domain",
    "neighborhood",
    "polydisc",
    "region_area",
    "region_contains",
    "siegel_model",
    "verify_model_containments",
    "w",
    "w1",
    "w2",
    "witness_neighborhood",
]
