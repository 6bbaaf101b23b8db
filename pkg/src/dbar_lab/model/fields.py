from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from dbar_lab.model.grid import FieldComponent, GridDomain, GridError, Support


class FieldShapeError(GridError):
    pass


def lattice_inner(h: float, u: np.ndarray, v: np.ndarray) -> complex:
    """<u, v> = h^4 * sum(u * conj(v)) over the lattice box."""
    return complex(h**4 * np.vdot(v.reshape(-1), u.reshape(-1)))


def lattice_norm_sq(h: float, u: np.ndarray) -> float:
    flat = u.reshape(-1)
    return float(h**4 * np.real(np.vdot(flat, flat)))


def _check_shape(grid: GridDomain, *arrays: np.ndarray) -> None:
    for arr in arrays:
        if arr.shape != grid.shape:
            raise FieldShapeError(f"field of shape {arr.shape} does not match lattice box {grid.shape}")


@dataclass(frozen=True, eq=False, slots=True)
class ScalarField:
    grid: GridDomain
    values: np.ndarray

    def __post_init__(self) -> None:
        _check_shape(self.grid, self.values)

    @classmethod
    def zeros(cls, grid: GridDomain) -> ScalarField:
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    def norm_sq(self) -> float:
        return lattice_norm_sq(self.grid.h, self.values)


@dataclass(frozen=True, eq=False, slots=True)
class FormField01:
    """A (0,1)-form f1 dz̄1 + f2 dz̄2 stored over the lattice box."""

    grid: GridDomain
    f1: np.ndarray
    f2: np.ndarray

    def __post_init__(self) -> None:
        _check_shape(self.grid, self.f1, self.f2)

    @classmethod
    def zeros(cls, grid: GridDomain) -> FormField01:
        return cls(grid, np.zeros(grid.shape, dtype=complex), np.zeros(grid.shape, dtype=complex))

    @classmethod
    def from_support_vector(cls, support: Support, vector: np.ndarray) -> FormField01:
        """Inverse of `to_support_vector`: [f1 on support; f2 on support]."""
        n = support.node_count
        if vector.shape != (2 * n,):
            raise FieldShapeError(f"expected a vector of length {2 * n}, got {vector.shape}")
        grid = support.grid
        f1 = np.zeros(grid.box_size, dtype=complex)
        f2 = np.zeros(grid.box_size, dtype=complex)
        f1[support.indices] = vector[:n]
        f2[support.indices] = vector[n:]
        return cls(grid, f1.reshape(grid.shape), f2.reshape(grid.shape))

    def to_support_vector(self, support: Support) -> np.ndarray:
        idx = support.indices
        return np.concatenate([self.f1.reshape(-1)[idx], self.f2.reshape(-1)[idx]])

    def component(self, which: FieldComponent) -> np.ndarray:
        match which:
            case FieldComponent.DZBAR1:
                return self.f1
            case FieldComponent.DZBAR2:
                return self.f2
        raise FieldShapeError(f"(0,1)-forms have no {which.value} component")

    def is_supported_in(self, support: Support) -> bool:
        outside = ~support.mask
        return not (np.any(self.f1[outside]) or np.any(self.f2[outside]))

    def norm_sq(self) -> float:
        h = self.grid.h
        return lattice_norm_sq(h, self.f1) + lattice_norm_sq(h, self.f2)

    def inner(self, other: FormField01) -> complex:
        h = self.grid.h
        return lattice_inner(h, self.f1, other.f1) + lattice_inner(h, self.f2, other.f2)

    def scaled(self, factor: complex) -> FormField01:
        return FormField01(self.grid, factor * self.f1, factor * self.f2)

    def __add__(self, other: FormField01) -> FormField01:
        return FormField01(self.grid, self.f1 + other.f1, self.f2 + other.f2)

    def __sub__(self, other: FormField01) -> FormField01:
        return FormField01(self.grid, self.f1 - other.f1, self.f2 - other.f2)


@dataclass(frozen=True, eq=False, slots=True)
class FormField02:
    """A (0,2)-form f12 dz̄1 ∧ dz̄2."""

    grid: GridDomain
    f12: np.ndarray

    def __post_init__(self) -> None:
        _check_shape(self.grid, self.f12)

    def norm_sq(self) -> float:
        return lattice_norm_sq(self.grid.h, self.f12)


class SeparableSlot(Enum):
    DZBAR1 = "dzbar1"
    DZBAR2 = "dzbar2"


@dataclass(frozen=True, eq=False, slots=True)
class SeparableForm01:
    """
    A (0,1)-form with a single component a(z1) b(z2).

    `a` lives on the first plane box and `b` on the second; both vanish off
    the plane supports of `support`.
    """

    support: Support
    slot: SeparableSlot
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        if self.support.planes is None:
            raise FieldShapeError("separable forms need a product support")
        m1, m2 = self.support.planes
        if self.a.shape != m1.shape or self.b.shape != m2.shape:
            raise FieldShapeError("separable factors do not match the plane lattices")

    @property
    def h(self) -> float:
        return self.support.grid.h

    def plane_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Factors restricted to the plane supports."""
        i1, i2 = self.support.plane_indices
        return self.a.reshape(-1)[i1], self.b.reshape(-1)[i2]

    def norm_sq(self) -> float:
        a, b = self.plane_vectors()
        h2 = self.h**2
        return float(h2 * np.vdot(a, a).real * h2 * np.vdot(b, b).real)

    def to_support_vector(self) -> np.ndarray:
        a, b = self.plane_vectors()
        block = np.kron(a, b)
        zero = np.zeros_like(block)
        if self.slot is SeparableSlot.DZBAR1:
            return np.concatenate([block, zero])
        return np.concatenate([zero, block])

    def to_form(self) -> FormField01:
        grid = self.support.grid
        product = np.multiply.outer(self.a, self.b)
        zero = np.zeros(grid.shape, dtype=complex)
        if self.slot is SeparableSlot.DZBAR1:
            return FormField01(grid, product.astype(complex), zero)
        return FormField01(grid, zero, product.astype(complex))
