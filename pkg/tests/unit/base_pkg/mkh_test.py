import numpy as np
import pytest

from dbar_lab.dbar import q_value
from dbar_lab.internal.sampling import random_interior_forms
from dbar_lab.mkh import (
    MkhError,
    NonHermitianHessianError,
    PositiveWeightError,
    RefinementLevel,
    WeightSpec,
    builtin_weights,
    mkh_check,
    mkh_check_scaled,
    mkh_lhs,
    quadratic_weight,
    scaled_weight,
    slack_allowance,
    validate_weight,
    violations_shrink,
    zero_weight,
)
from dbar_lab.model.reports import MkhReport
from unit.helpers.lab_helper import cube_grid, random_form


def _steep(scale: float) -> WeightSpec:
    return WeightSpec(
        name="steep",
        value=lambda z1, z2: np.zeros(np.broadcast(z1, z2).shape),
        hessian=lambda z1, z2: np.broadcast_to(
            scale * np.eye(2, dtype=complex), (*np.broadcast(z1, z2).shape, 2, 2)
        ),
    )


def _points(grid):
    pts = grid.box_points[grid.mask]
    return pts[:, 0] + 1j * pts[:, 1], pts[:, 2] + 1j * pts[:, 3]


def test_builtin_weights_are_valid_on_cube():
    grid = cube_grid()
    z1, z2 = _points(grid)
    weights = builtin_weights(5.0)
    assert set(weights) == {"zero", "quadratic", "scaled"}
    for w in weights.values():
        validate_weight(w, z1, z2)
    assert weights["scaled"].describe() == {"name": "scaled", "radius_sq": 5.0, "delta": 0.5}


def test_positive_weight_rejected():
    z1, z2 = _points(cube_grid())
    with pytest.raises(PositiveWeightError):
        validate_weight(quadratic_weight(0.5), z1, z2)


def test_non_hermitian_hessian_rejected():
    w = WeightSpec(
        name="skew",
        value=lambda z1, z2: -np.ones(np.broadcast(z1, z2).shape),
        hessian=lambda z1, z2: np.broadcast_to(
            np.array([[1.0, 1.0], [0.0, 1.0]], dtype=complex), (*np.broadcast(z1, z2).shape, 2, 2)
        ),
    )
    z1, z2 = _points(cube_grid())
    with pytest.raises(NonHermitianHessianError):
        validate_weight(w, z1, z2)
    with pytest.raises(NonHermitianHessianError):
        mkh_lhs(w, random_form(cube_grid(), seed=0))


def test_scaled_weight_needs_positive_delta():
    with pytest.raises(MkhError):
        scaled_weight(5.0, 0.0)


def test_zero_weight_has_zero_lhs():
    u = random_form(cube_grid(), seed=1)
    report = mkh_check(zero_weight(), u)
    assert report.lhs == 0.0
    assert report.passed
    assert report.violation == 0.0


def test_quadratic_lhs_by_hand():
    grid = cube_grid()
    u = random_form(grid, seed=2)
    pts = grid.box_points
    b = np.sum(pts**2, axis=-1) - 5.0
    expected = grid.h**4 * np.sum(np.exp(b) * (np.abs(u.f1) ** 2 + np.abs(u.f2) ** 2))
    assert mkh_lhs(quadratic_weight(5.0), u) == pytest.approx(expected, rel=1e-12)
    # identity Hessian and b <= 0 bound the lhs by the norm
    assert mkh_lhs(quadratic_weight(5.0), u) <= u.norm_sq()


def test_scaled_lhs_is_delta_times_weighted_norm():
    grid = cube_grid()
    u = random_form(grid, seed=3)
    pts = grid.box_points
    b = -0.25 * (5.0 - np.sum(pts**2, axis=-1))
    expected = 0.25 * grid.h**4 * np.sum(np.exp(b) * (np.abs(u.f1) ** 2 + np.abs(u.f2) ** 2))
    assert mkh_lhs(scaled_weight(5.0, 0.25), u) == pytest.approx(expected, rel=1e-12)


def test_steep_weight_fails_with_violation():
    u = random_form(cube_grid(), seed=4)
    report = mkh_check(_steep(1e6), u)
    assert not report.passed
    assert report.violation > 0.0
    assert report.rhs == pytest.approx(q_value(u))
    assert report.to_mapping()["pass"] is False


def test_interior_forms_pass_with_slack():
    grid = cube_grid(h=0.125)
    forms = random_interior_forms(grid.support_in(None), 5, np.random.default_rng([7, 0]))
    for u in forms:
        report = mkh_check_scaled(quadratic_weight(5.0), u, grid, 1.0)
        assert report.passed
        assert report.slack == pytest.approx(slack_allowance(1.0, 0.125, u.norm_sq(), report.rhs))


def test_scaled_check_matches_explicit_slack():
    grid = cube_grid(h=0.125)
    u = random_form(grid, seed=9)
    weight = _steep(1e6)
    scaled = mkh_check_scaled(weight, u, grid, 3.0)
    explicit = mkh_check(weight, u, grid, slack_allowance(3.0, grid.h, u.norm_sq(), q_value(u)))
    assert scaled == explicit
    assert mkh_check(weight, u, grid, slack_constant=3.0) == explicit


def test_slack_allowance():
    assert slack_allowance(2.0, 0.5, 3.0, 1.0) == pytest.approx(4.0)


@pytest.mark.parametrize(
    "worst, expected",
    [
        ([0.3, 0.2, 0.1], True),
        ([0.3, 0.0, 0.0], True),
        ([0.1, 0.2, 0.05], False),
        ([0.0, 0.0, 0.0], True),
    ],
)
def test_violations_shrink(worst, expected):
    levels = []
    for h, v in zip((0.25, 0.125, 0.0625), worst):
        lhs = 1.0 + v * 2.0
        levels.append(RefinementLevel(h, (MkhReport(weight="w", lhs=lhs, rhs=1.0, slack=0.0, norm_sq=1.0),)))
    # order of the input does not matter
    assert violations_shrink(list(reversed(levels))) is expected
