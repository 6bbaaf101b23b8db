import math

import numpy as np
import pytest

from dbar_lab.model.regions import (
    FlatPiece,
    HalfPlaneSide,
    ModelConstants,
    NeighborhoodFamily,
    PlanarRegion,
    ProductDomain,
    RegionKind,
    RegionSpecError,
    StrictlyPseudoconvexModel,
    UnboundedRegionError,
    sample_region,
)

# --------------------------------------------------------------------------
# PlanarRegion.contains
# --------------------------------------------------------------------------


@pytest.mark.parametrize(
    "region, point, expected",
    [
        (PlanarRegion.disc(1.0), 0.5 + 0.5j, True),
        (PlanarRegion.disc(1.0), 1.0 + 0.0j, False),
        (PlanarRegion.disc(0.5, center=1j), 1.2j, True),
        (PlanarRegion.half_disc(1.0), -0.5j, True),
        (PlanarRegion.half_disc(1.0), 0.5j, False),
        (PlanarRegion.half_disc(1.0), 0.3 + 0.0j, False),
        (PlanarRegion.half_disc(1.0, HalfPlaneSide.UPPER), 0.5j, True),
        (PlanarRegion.sector(1.0, -2 * math.pi / 3, -math.pi / 3), -0.5j, True),
        (PlanarRegion.sector(1.0, -2 * math.pi / 3, -math.pi / 3), 0.5 - 0.1j, False),
        (PlanarRegion.sector(1.0, -4 * math.pi / 3, math.pi / 3), 0.5j, False),
        (PlanarRegion.sector(1.0, -4 * math.pi / 3, math.pi / 3), 0.5 + 0.0j, True),
        (PlanarRegion.box((0.0, 1.0), (0.0, 2.0)), 0.5 + 1.5j, True),
        (PlanarRegion.box((0.0, 1.0), (0.0, 2.0)), 1.5 + 1.5j, False),
    ],
)
def test_contains(region, point, expected):
    assert bool(region.contains(point)) is expected


def test_contains_is_vectorized():
    pts = np.array([[0.0, 2.0], [0.5j, -0.5j]])
    out = PlanarRegion.disc(1.0).contains(pts)
    assert out.shape == (2, 2)
    assert out.tolist() == [[True, False], [True, True]]


def test_contains_margin_excludes_near_boundary():
    disc = PlanarRegion.disc(1.0)
    assert disc.contains(0.9999)
    assert not disc.contains(0.9999, margin=1e-3)


def test_intersection_contains_all_members():
    region = PlanarRegion.intersection(PlanarRegion.disc(1.0), PlanarRegion.half_disc(2.0))
    assert region.contains(-0.5j)
    assert not region.contains(0.5j)
    assert not region.contains(-1.5j)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


@pytest.mark.parametrize(
    "build, key",
    [
        (lambda: PlanarRegion.disc(0.0), "radius"),
        (lambda: PlanarRegion.sector(1.0, 1.0, 0.5), "theta_min"),
        (lambda: PlanarRegion.sector(1.0, 0.0, 7.0), "theta_max"),
        (lambda: PlanarRegion.sector(1.0, 0.0, 1.0, inner_radius=1.5), "inner_radius"),
        (lambda: PlanarRegion.box((1.0, 0.0), (0.0, 1.0)), "x"),
        (lambda: PlanarRegion.intersection(), "members"),
    ],
)
def test_invalid_regions(build, key):
    with pytest.raises(RegionSpecError) as exc:
        build()
    assert exc.value.key == key


# --------------------------------------------------------------------------
# areas and boxes
# --------------------------------------------------------------------------


@pytest.mark.parametrize(
    "region, area",
    [
        (PlanarRegion.disc(2.0), 4.0 * math.pi),
        (PlanarRegion.half_disc(1.0), 0.5 * math.pi),
        (PlanarRegion.sector(1.0, -2 * math.pi / 3, -math.pi / 3), math.pi / 6),
        (PlanarRegion.box((0.0, 2.0), (0.0, 3.0)), 6.0),
    ],
)
def test_exact_area(region, area):
    assert region.exact_area() == pytest.approx(area, rel=1e-14)


def test_exact_area_intersection_is_none():
    assert PlanarRegion.intersection(PlanarRegion.disc(1.0)).exact_area() is None


def test_half_disc_bounding_box():
    assert PlanarRegion.half_disc(1.0).bounding_box() == (-1.0, 1.0, -1.0, 0.0)


def test_unbounded_box():
    region = PlanarRegion.box((0.0, math.inf), (0.0, 1.0))
    assert not region.is_bounded()
    with pytest.raises(UnboundedRegionError):
        sample_region(region, 10, np.random.default_rng(0))


def test_sample_region_lands_inside():
    region = PlanarRegion.sector(1.0, -2 * math.pi / 3, -math.pi / 3)
    pts = sample_region(region, 500, np.random.default_rng(3))
    assert pts.shape == (500,)
    assert region.contains(pts).all()


# --------------------------------------------------------------------------
# mapping round trips
# --------------------------------------------------------------------------


def test_region_from_mapping_with_named_members():
    disc = PlanarRegion.disc(1.0)
    region = PlanarRegion.from_mapping(
        {"kind": "intersection", "members": ["d", {"kind": "half_disc", "radius": 2.0}]},
        named={"d": disc},
    )
    assert region.kind is RegionKind.INTERSECTION
    assert region.members[0] == disc


def test_region_mapping_roundtrip():
    region = PlanarRegion.sector(0.5, -1.0, 1.0, inner_radius=0.1)
    assert PlanarRegion.from_mapping(region.to_mapping()) == region


def test_product_domain_requires_factors():
    with pytest.raises(RegionSpecError) as exc:
        ProductDomain.from_mapping({"factor1": {"kind": "disc", "radius": 1.0}})
    assert exc.value.key == "factor2"


# --------------------------------------------------------------------------
# domains
# --------------------------------------------------------------------------


def test_product_domain_membership_and_volume():
    omega = ProductDomain(factor1=PlanarRegion.disc(1.0), factor2=PlanarRegion.half_disc(1.0))
    pts = np.array([[0.1, 0.0, 0.0, -0.5], [0.1, 0.0, 0.0, 0.5]])
    assert omega.contains(pts).tolist() == [True, False]
    assert omega.volume() == pytest.approx(math.pi * 0.5 * math.pi)


def test_strictly_pseudoconvex_model():
    model = StrictlyPseudoconvexModel(half_width=1.0)
    pts = np.array([[0.0, 0.0, 0.0, -0.1], [0.5, 0.0, 0.0, -0.1], [0.0, 0.0, 0.0, 0.1]])
    assert model.contains(pts).tolist() == [True, False, False]
    assert model.product_factors() is None


def test_model_constants_validation():
    with pytest.raises(RegionSpecError):
        ModelConstants(a1=1.0, a2=0.5)
    with pytest.raises(RegionSpecError):
        ModelConstants(a3=0.0)


def test_flat_piece_defaults_to_y2():
    piece = FlatPiece()
    assert piece.axis == 3
    assert piece.level == 0.0


# --------------------------------------------------------------------------
# neighborhood family
# --------------------------------------------------------------------------


@pytest.mark.parametrize("j", [2, 3, 5, 8])
def test_family_members(j):
    member = NeighborhoodFamily().member(j)
    assert member.factor1.radius == pytest.approx(0.5 + 1.0 / j)
    assert member.factor2.radius == pytest.approx(j**-2.0)
    assert member.name == f"U_{j}"


def test_family_limit_set_samples_inside():
    family = NeighborhoodFamily()
    pts = family.sample_limit_set(100, np.random.default_rng(1))
    assert family.limit_set_contains(pts).all()
    assert family.member(10).contains(pts).all()
