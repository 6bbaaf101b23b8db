import math

import numpy as np
import pytest

from dbar_lab.geometry import (
    LITERAL_FAMILY,
    WITNESS_FAMILY,
    EmptyMaskError,
    GridError,
    UnboundedRegionError,
    build_grid,
    builtin_domains,
    check_nesting,
    limit_set_contains,
    model_domain,
    neighborhood,
    polydisc,
    region_area,
    region_contains,
    siegel_model,
    verify_model_containments,
    w,
    w1,
    w2,
    witness_neighborhood,
)
from dbar_lab.model.grid import FieldComponent, index_range
from dbar_lab.model.regions import HalfPlaneSide, ModelConstants, PlanarRegion, ProductDomain

# --------------------------------------------------------------------------
# regions
# --------------------------------------------------------------------------


@pytest.mark.parametrize(
    "point, expected",
    [
        (0.1 - 0.3j, True),
        (0.0 - 0.49j, True),
        (0.3 + 0.01j, False),
        (0.0 - 0.5j, False),
    ],
)
def test_w1_membership(point, expected):
    assert region_contains(w1(), point) is expected


def test_sector_areas():
    assert region_area(w1()) == pytest.approx(math.pi / 24)
    assert region_area(w2()) == pytest.approx(5 * math.pi / 6)
    assert region_area(w()) == pytest.approx(math.pi / 8)


def test_intersection_area_by_quadrature():
    region = PlanarRegion.intersection(PlanarRegion.disc(1.0), PlanarRegion.half_disc(2.0))
    assert region_area(region) == pytest.approx(0.5 * math.pi, rel=1e-3)


def test_unbounded_area_raises():
    with pytest.raises(UnboundedRegionError):
        region_area(PlanarRegion.box((0.0, 1.0), (-math.inf, 0.0)))


def test_model_containments_hold():
    checks = verify_model_containments(samples=4000, seed=3)
    assert len(checks) == 3
    for check in checks:
        assert check.samples > 0
        assert check.holds, check.name


def test_containment_fails_for_wide_sector():
    # D1 x W1 leaves the unit ball once a1 is large
    checks = verify_model_containments(ModelConstants(a1=0.9, a2=2.0, a3=0.5), samples=4000, seed=3)
    assert not checks[0].holds


@pytest.mark.parametrize("j", [1, 2, 5, 9])
def test_neighborhoods_nested(j):
    assert check_nesting(LITERAL_FAMILY, j, samples=2000, seed=j).holds
    assert check_nesting(WITNESS_FAMILY, j, samples=2000, seed=j).holds


def test_neighborhood_radii():
    u = neighborhood(4)
    assert u.factor1.radius == pytest.approx(0.75)
    assert u.factor2.radius == pytest.approx(1.0 / 16.0)
    v = witness_neighborhood(4)
    assert v.factor2.radius == pytest.approx(0.25)
    assert u.name == "U_4"
    assert v.name == "V_4"


def test_limit_set_membership():
    pts = np.array(
        [
            [0.5, 0.0, 0.0, 0.0],
            [0.3, -0.2, 0.0, 0.0],
            [0.51, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, -1e-3],
        ]
    )
    assert limit_set_contains(pts).tolist() == [True, True, False, False]


def test_builtin_domains():
    domains = builtin_domains()
    assert set(domains) == {"product-model", "siegel-model"}
    assert domains["product-model"].flat_pieces[0].axis == 3


def test_polydisc_names():
    assert polydisc(0.5).name == "P(0.5)"
    assert polydisc(0.5, name="ball").name == "ball"


# --------------------------------------------------------------------------
# lattices
# --------------------------------------------------------------------------


@pytest.mark.parametrize("h", [0.0, -0.1, math.inf, math.nan])
def test_grid_rejects_bad_spacing(h):
    with pytest.raises(GridError, match="h must be positive"):
        build_grid(model_domain(), h)


def test_grid_without_interior_nodes():
    face = PlanarRegion.box((0.1, 0.2), (0.1, 0.2))
    with pytest.raises(EmptyMaskError):
        build_grid(ProductDomain(factor1=face, factor2=face), 1.0)


def test_grid_window_outside_domain():
    far = PlanarRegion.box((5.0, 6.0), (5.0, 6.0))
    with pytest.raises(EmptyMaskError):
        build_grid(model_domain(), 0.25, window=ProductDomain(factor1=far, factor2=far))


def test_windowed_product_grid():
    grid = build_grid(model_domain(), 0.25, window=witness_neighborhood(4))
    assert grid.is_product
    assert grid.shape[:3] == (9, 9, 5)
    assert grid.shape[3] == index_range(-0.25, 0.0, 0.25)[1]
    pts = grid.box_points[grid.mask]
    assert np.all(np.abs(pts[:, 0] + 1j * pts[:, 1]) < 2.0)
    assert np.all(pts[:, 3] < 0.0)


def test_lattice_anchored_at_origin():
    a = build_grid(model_domain(), 0.25, window=witness_neighborhood(2))
    b = build_grid(model_domain(), 0.25, window=witness_neighborhood(4))
    # every node of the smaller window is a node of the larger one
    assert set(np.round(b.axis_coords(0) / 0.25).astype(int)) <= set(
        np.round(a.axis_coords(0) / 0.25).astype(int)
    )
    assert np.allclose(a.axis_coords(2) / 0.25, np.round(a.axis_coords(2) / 0.25))


def test_siegel_grid_is_explicit():
    grid = build_grid(siegel_model(0.5), 0.125)
    assert not grid.is_product
    pts = grid.box_points[grid.mask]
    assert pts.shape[0] == grid.node_count > 0
    assert np.all(pts[:, 3] < -(pts[:, 0] ** 2 + pts[:, 1] ** 2))
    rows = grid.free_rows(FieldComponent.SCALAR, 3)
    assert rows is not None and rows.any()
    assert grid.free_rows(FieldComponent.DZBAR2, 3) is None


def _disc_times_half_disc() -> ProductDomain:
    return ProductDomain(
        factor1=PlanarRegion.disc(1.0),
        factor2=PlanarRegion.half_disc(1.0, HalfPlaneSide.LOWER),
        name="disc-x-half-disc",
    )


def test_disc_times_half_disc_node_count_matches_brute_force():
    n = 8
    grid = build_grid(_disc_times_half_disc(), 1.0 / n)
    k = np.arange(-n, n + 1)
    a, b = np.meshgrid(k, k, indexing="ij")
    in_disc = a**2 + b**2 < n**2
    in_half = in_disc & (b < 0)
    assert grid.node_count == int(in_disc.sum()) * int(in_half.sum())
    assert int(grid.mask.sum()) == grid.node_count


def test_disc_times_half_disc_mask_has_no_holes():
    h = 1.0 / 8.0
    grid = build_grid(_disc_times_half_disc(), h)
    pts = grid.box_points
    r1 = np.hypot(pts[..., 0], pts[..., 1])
    r2 = np.hypot(pts[..., 2], pts[..., 3])
    # distance to the boundary of the product, taken factor by factor
    depth = np.minimum(1.0 - r1, np.minimum(1.0 - r2, -pts[..., 3]))
    assert np.all(grid.mask[depth > 2.0 * h])
    assert np.all(depth[grid.mask] > 0.0)


def test_node_volume_converges_to_product_area():
    exact = math.pi * math.pi / 2.0
    errors = [
        abs(build_grid(_disc_times_half_disc(), h).node_count * h**4 - exact)
        for h in (1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0)
    ]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 0.5 * errors[0]
    assert errors[2] < 0.3
