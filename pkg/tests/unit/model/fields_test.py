import numpy as np
import pytest

from dbar_lab.model.fields import (
    FieldShapeError,
    FormField01,
    FormField02,
    ScalarField,
    SeparableForm01,
    SeparableSlot,
    lattice_inner,
    lattice_norm_sq,
)
from dbar_lab.model.grid import FieldComponent
from unit.helpers.lab_helper import cube_grid, random_form


def test_lattice_inner_is_h4_weighted():
    u = np.ones((2, 2))
    assert lattice_inner(0.5, u, u) == pytest.approx(4 * 0.5**4)
    assert lattice_norm_sq(0.5, 2 * u) == pytest.approx(16 * 0.5**4)


def test_shape_mismatch_raises():
    grid = cube_grid(0.5)
    with pytest.raises(FieldShapeError):
        ScalarField(grid, np.zeros((2, 2)))
    with pytest.raises(FieldShapeError):
        FormField02(grid, np.zeros(3))


def test_support_vector_roundtrip():
    grid = cube_grid(0.25)
    support = grid.support_in(None)
    form = random_form(grid, seed=4)
    vec = form.to_support_vector(support)
    back = FormField01.from_support_vector(support, vec)
    assert np.array_equal(back.f1, form.f1)
    assert np.array_equal(back.f2, form.f2)
    assert back.is_supported_in(support)


def test_from_support_vector_length_checked():
    support = cube_grid(0.25).support_in(None)
    with pytest.raises(FieldShapeError):
        FormField01.from_support_vector(support, np.zeros(3))


def test_form_algebra():
    grid = cube_grid(0.5)
    u = random_form(grid, 1)
    v = random_form(grid, 2)
    assert (u + v - v).norm_sq() == pytest.approx(u.norm_sq())
    assert u.scaled(2.0).norm_sq() == pytest.approx(4.0 * u.norm_sq())
    assert u.inner(u).real == pytest.approx(u.norm_sq())
    assert u.inner(v) == pytest.approx(np.conj(v.inner(u)))
    assert u.component(FieldComponent.DZBAR2) is u.f2
    with pytest.raises(FieldShapeError):
        u.component(FieldComponent.SCALAR)


def test_separable_form_matches_dense():
    grid = cube_grid(0.25)
    support = grid.support_in(None)
    rng = np.random.default_rng(0)
    m1, m2 = support.planes
    a = rng.standard_normal(m1.shape) * m1
    b = (rng.standard_normal(m2.shape) + 1j * rng.standard_normal(m2.shape)) * m2
    sep = SeparableForm01(support, SeparableSlot.DZBAR2, a, b)
    dense = sep.to_form()
    assert not dense.f1.any()
    assert sep.norm_sq() == pytest.approx(dense.norm_sq(), rel=1e-12)
    assert np.allclose(sep.to_support_vector(), dense.to_support_vector(support))


def test_separable_form_factor_shapes_checked():
    grid = cube_grid(0.25)
    support = grid.support_in(None)
    with pytest.raises(FieldShapeError):
        SeparableForm01(support, SeparableSlot.DZBAR1, np.zeros(3), np.zeros(3))
