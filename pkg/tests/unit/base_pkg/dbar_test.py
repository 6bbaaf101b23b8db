import numpy as np
import pytest
import scipy.sparse as sp
from scipy import ndimage

from dbar_lab.dbar import (
    AssembledQOperator,
    DbarOperator,
    ProductQOperator,
    adjoint_apply,
    assemble_q,
    axis_difference,
    dbar0,
    dbar1,
    dbar_matrix,
    forward_difference,
    q_apply,
    q_value,
    separable_quotient,
    sobolev_minus1,
)
from dbar_lab.geometry import build_grid
from dbar_lab.model.fields import (
    FieldShapeError,
    FormField01,
    FormField02,
    ScalarField,
    SeparableForm01,
    SeparableSlot,
    lattice_inner,
)
from dbar_lab.model.grid import TraceKind, TracePolicy
from dbar_lab.model.regions import FlatPiece, PlanarRegion, ProductDomain
from unit.helpers.lab_helper import cube_grid, model_grid, random_form, random_scalar

POLICIES = [
    TracePolicy.default(),
    TracePolicy.all_dirichlet(),
    TracePolicy(scalar=TraceKind.FREE, dzbar1=TraceKind.DIRICHLET, dzbar2=TraceKind.FREE),
]


def test_forward_difference_stencil():
    d = forward_difference(4, 0.5).toarray()
    assert d[0].tolist() == [-2.0, 2.0, 0.0, 0.0]
    # zero extension past the last node
    assert d[3].tolist() == [0.0, 0.0, 0.0, -2.0]


def test_axis_difference_is_c_ordered():
    shape = (3, 4)
    x = np.arange(12, dtype=float)
    dy = axis_difference(shape, 1, 1.0) @ x
    assert dy.reshape(shape)[0, :3].tolist() == [1.0, 1.0, 1.0]
    dx = axis_difference(shape, 0, 1.0) @ x
    assert dx.reshape(shape)[0, 0] == 4.0


# --------------------------------------------------------------------------
# complex identities
# --------------------------------------------------------------------------


@pytest.mark.parametrize("policy", POLICIES)
def test_dbar0_adjoint_identity(policy):
    grid = model_grid(0.2, policy)
    for seed in range(100):
        u = random_scalar(grid, seed=2 * seed)
        f = random_form(grid, seed=2 * seed + 1)
        lhs = dbar0(u).inner(f)
        rhs = lattice_inner(grid.h, u.values, adjoint_apply(DbarOperator.DBAR0, f).values)
        assert abs(lhs - rhs) <= 1e-12 * np.sqrt(dbar0(u).norm_sq() * f.norm_sq())


@pytest.mark.parametrize("policy", POLICIES)
def test_dbar1_adjoint_identity(policy):
    grid = model_grid(0.2, policy)
    for seed in range(100):
        f = random_form(grid, seed=seed)
        rng = np.random.default_rng([seed, 1])
        g = FormField02(grid, (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * grid.mask)
        lhs = lattice_inner(grid.h, dbar1(f).f12, g.f12)
        rhs = f.inner(adjoint_apply(DbarOperator.DBAR1, g))
        assert abs(lhs - rhs) <= 1e-12 * np.sqrt(dbar1(f).norm_sq() * g.norm_sq())


@pytest.mark.parametrize("grid_factory", [cube_grid, model_grid])
def test_dbar_squared_vanishes(grid_factory):
    grid = grid_factory()
    u = random_scalar(grid, seed=5)
    f12 = dbar1(dbar0(u)).f12
    scale = np.abs(u.values).max() / grid.h**2
    assert np.abs(f12).max() <= 1e-12 * scale


def test_dbar_squared_vanishes_as_matrices():
    grid = model_grid()
    product = dbar_matrix(grid, DbarOperator.DBAR1) @ dbar_matrix(grid, DbarOperator.DBAR0)
    assert abs(product).max() <= 1e-10 / grid.h**2


def test_adjoint_rejects_wrong_grade():
    grid = cube_grid()
    with pytest.raises(FieldShapeError):
        adjoint_apply(DbarOperator.DBAR1, random_form(grid, seed=0))


# --------------------------------------------------------------------------
# worked examples
# --------------------------------------------------------------------------


def _coordinates(grid):
    pts = grid.box_points
    return pts[..., 0] + 1j * pts[..., 1], pts[..., 2] + 1j * pts[..., 3]


def _deep(grid):
    """Nodes whose forward neighbours along every axis are also grid nodes."""
    return ndimage.binary_erosion(grid.mask, iterations=2)


def test_dbar0_of_conjugate_z1_is_the_first_basis_form():
    grid = cube_grid(h=0.125)
    z1, _ = _coordinates(grid)
    f = dbar0(ScalarField(grid, np.conj(z1) * grid.mask))
    deep = _deep(grid)
    assert np.allclose(f.f1[deep], 1.0, atol=1e-12)
    assert np.allclose(f.f2[deep], 0.0, atol=1e-12)


def test_dbar0_annihilates_holomorphic_polynomial():
    grid = cube_grid(h=0.125)
    z1, z2 = _coordinates(grid)
    f = dbar0(ScalarField(grid, z1 * z2 * grid.mask))
    deep = _deep(grid)
    assert np.abs(f.f1[deep]).max() <= 1e-12
    assert np.abs(f.f2[deep]).max() <= 1e-12


def test_dbar0_of_impulse_is_the_forward_stencil():
    grid = cube_grid(h=0.125)
    h = grid.h
    p = (5, 5, 5, 5)
    values = np.zeros(grid.shape, dtype=complex)
    values[p] = 1.0
    f = dbar0(ScalarField(grid, values))
    for component, (ax, ay) in ((f.f1, (0, 1)), (f.f2, (2, 3))):
        expected = np.zeros(grid.shape, dtype=complex)
        expected[p] = -(1.0 + 1.0j) / (2.0 * h)
        behind_x, behind_y = list(p), list(p)
        behind_x[ax] -= 1
        behind_y[ay] -= 1
        expected[tuple(behind_x)] = 1.0 / (2.0 * h)
        expected[tuple(behind_y)] = 1.0j / (2.0 * h)
        assert np.allclose(component, expected, atol=1e-12)


def test_dbar1_of_conjugate_z2_in_the_first_slot():
    grid = cube_grid(h=0.125)
    _, z2 = _coordinates(grid)
    f = FormField01(grid, np.conj(z2) * grid.mask, np.zeros(grid.shape, dtype=complex))
    f12 = dbar1(f).f12
    assert np.allclose(f12[_deep(grid)], -1.0, atol=1e-12)


def _forward(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """(v[x + h e_axis] - v[x]) / h with zero past the end of the box."""
    ahead = np.zeros_like(values)
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    src[axis] = slice(1, None)
    dst[axis] = slice(None, -1)
    ahead[tuple(dst)] = values[tuple(src)]
    return (ahead - values) / h


@pytest.mark.parametrize(
    "grid_factory",
    [lambda: cube_grid(h=0.2), lambda: model_grid(0.2, TracePolicy.all_dirichlet())],
    ids=["cube", "model-dirichlet"],
)
def test_dbar1_matches_stencil_by_stencil(grid_factory):
    grid = grid_factory()
    h = grid.h
    f = random_form(grid, seed=12)
    dbar2_f1 = 0.5 * (_forward(f.f1, 2, h) + 1j * _forward(f.f1, 3, h))
    dbar1_f2 = 0.5 * (_forward(f.f2, 0, h) + 1j * _forward(f.f2, 1, h))
    assert np.allclose(dbar1(f).f12, dbar1_f2 - dbar2_f1, rtol=0.0, atol=1e-12 / h)


# --------------------------------------------------------------------------
# trace policy on a flat face
# --------------------------------------------------------------------------


def _slab() -> ProductDomain:
    return ProductDomain(
        factor1=PlanarRegion.box((0.0, 1.0), (0.0, 1.0)),
        factor2=PlanarRegion.box((0.0, 1.0), (-1.0, 0.0)),
        flat_pieces=(FlatPiece(axis=3, level=0.0, direction=1),),
        name="slab",
    )


def _slab_q(h: float, policy: TracePolicy) -> float:
    """Q of a real form in the first slot that is nonzero up to the flat face Im z2 = 0."""
    grid = build_grid(_slab(), h, policy=policy)
    pts = grid.box_points
    s = np.sin(np.pi * pts[..., :3]) ** 2
    f1 = s[..., 0] * s[..., 1] * s[..., 2] * np.cos(0.5 * np.pi * pts[..., 3]) ** 2 * grid.mask
    return q_value(FormField01(grid, f1.astype(complex), np.zeros(grid.shape, dtype=complex)))


def test_free_face_keeps_q_bounded_and_dirichlet_face_grows():
    dirichlet = TracePolicy(scalar=TraceKind.FREE, dzbar1=TraceKind.DIRICHLET, dzbar2=TraceKind.DIRICHLET)
    free = {h: _slab_q(h, TracePolicy.default()) for h in (1.0 / 8.0, 1.0 / 16.0)}
    fixed = {h: _slab_q(h, dirichlet) for h in (1.0 / 8.0, 1.0 / 16.0)}
    assert free[1.0 / 16.0] / free[1.0 / 8.0] == pytest.approx(1.0, abs=0.2)
    # the Dirichlet face adds |f1|^2 / (4h^2) on the slice below it; sin^4 sums to 3/8 per axis
    for h in free:
        jump = (3.0 / 8.0) ** 3 * np.cos(0.5 * np.pi * h) ** 4 / (4.0 * h)
        assert fixed[h] - free[h] == pytest.approx(jump, rel=1e-9)
    growth = (fixed[1.0 / 16.0] - free[1.0 / 16.0]) / (fixed[1.0 / 8.0] - free[1.0 / 8.0])
    assert 1.9 <= growth <= 2.3


# --------------------------------------------------------------------------
# the quadratic form
# --------------------------------------------------------------------------


def test_q_value_matches_operator():
    grid = model_grid()
    f = random_form(grid, seed=6)
    q = q_value(f)
    assert q > 0.0
    assert q == pytest.approx(f.inner(q_apply(f)).real, rel=1e-10)


def test_assembled_quadratic_form_matches_q_value():
    grid = model_grid()
    support = grid.support_in(None)
    op = assemble_q(support, factorize=False)
    assert isinstance(op, AssembledQOperator)
    f = random_form(grid, seed=7)
    x = f.to_support_vector(support)
    assert grid.h**4 * np.vdot(x, op.matvec(x)).real == pytest.approx(q_value(f), rel=1e-10)


@pytest.mark.parametrize("grid_factory", [cube_grid, model_grid])
def test_product_factorization_matches_assembly(grid_factory):
    grid = grid_factory()
    support = grid.support_in(None)
    product = assemble_q(support)
    assembled = assemble_q(support, factorize=False)
    assert isinstance(product, ProductQOperator)
    assert product.dof_count == assembled.dof_count == support.dof_count
    diff = product.to_sparse() - assembled.to_sparse()
    assert abs(diff).max() <= 1e-10 * abs(assembled.to_sparse()).max()
    assert np.allclose(product.diagonal(), assembled.diagonal())
    x = np.random.default_rng(8).standard_normal(support.dof_count)
    assert np.allclose(product.matvec(x), assembled.matvec(x))


def test_incompatible_policy_is_not_factorized():
    grid = model_grid(0.2, POLICIES[2])
    assert isinstance(assemble_q(grid.support_in(None)), AssembledQOperator)


def test_assembled_operator_is_hermitian():
    op = assemble_q(model_grid().support_in(None), factorize=False)
    m = op.to_sparse()
    assert abs(m - m.conj().T).max() <= 1e-12 * abs(m).max()
    assert sp.issparse(m)


def test_separable_form_through_planes():
    grid = model_grid()
    support = grid.support_in(None)
    p1, p2 = grid.planes
    rng = np.random.default_rng(9)
    a = rng.standard_normal(p1.shape) * p1.mask
    b = (rng.standard_normal(p2.shape) + 1j * rng.standard_normal(p2.shape)) * p2.mask
    for slot in SeparableSlot:
        f = SeparableForm01(support, slot, a, b)
        full = f.to_form()
        assert f.norm_sq() == pytest.approx(full.norm_sq(), rel=1e-12)
        assert q_value(f) == pytest.approx(q_value(full), rel=1e-10)
        assert separable_quotient(f) == pytest.approx(q_value(full) / full.norm_sq(), rel=1e-10)


# --------------------------------------------------------------------------
# Sobolev -1 norm
# --------------------------------------------------------------------------


def test_sobolev_minus1_is_weaker_than_l2():
    grid = cube_grid()
    f = random_form(grid, seed=10)
    weak = sobolev_minus1(f)
    assert 0.0 < weak < f.norm_sq()


def test_sobolev_minus1_of_scalar():
    grid = cube_grid()
    u = random_scalar(grid, seed=11)
    assert 0.0 < sobolev_minus1(u) < u.norm_sq()
    assert sobolev_minus1(ScalarField.zeros(grid)) == 0.0


def test_sobolev_minus1_rejects_field_off_mask():
    grid = cube_grid()
    values = np.ones(grid.shape, dtype=complex)
    with pytest.raises(FieldShapeError):
        sobolev_minus1(FormField01(grid, values, values))
