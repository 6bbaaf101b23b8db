"""
Discrete ∂̄-complex on a lattice.

Forward differences D_a = (shift - identity)/h along each real axis are lifted
to the lattice box by Kronecker products, and the Wirtinger operators are
∂̄_k = (D_{x_k} + i D_{y_k}) / 2. Components with a free trace policy drop the
difference rows that cross a flat piece. Adjoints are exact conjugate
transposes, which is also the adjoint for the h^4-weighted inner product.

    A0 = [∂̄_1; ∂̄_2]            scalar -> (0,1)
    A1 = [-∂̄_2, ∂̄_1]           (0,1) -> (0,2), f12 = ∂̄_1 f2 - ∂̄_2 f1
    Q  = A1^H A1 + A0 A0^H      restricted to a support
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from typing import Protocol

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from dbar_lab.model.fields import (
    FieldShapeError,
    FormField01,
    FormField02,
    ScalarField,
    SeparableForm01,
    SeparableSlot,
    lattice_norm_sq,
)
from dbar_lab.model.grid import (
    FieldComponent,
    GridDomain,
    PlaneLattice,
    Support,
    TraceKind,
)

SOBOLEV_RTOL = 1e-10


class DbarError(RuntimeError):
    pass


class SobolevSolveError(DbarError):
    def __init__(self, message: str, *, info: int):
        super().__init__(message)
        self.info = info


class DbarOperator(Enum):
    DBAR0 = "dbar0"
    DBAR1 = "dbar1"


# --------------------------------------------------------------------------- #
# Sparse building blocks
# --------------------------------------------------------------------------- #


def forward_difference(n: int, h: float) -> sp.csr_matrix:
    """1-D forward difference with zero extension past the last node."""
    return ((sp.eye(n, k=1) - sp.eye(n)) / h).tocsr()


def axis_difference(shape: tuple[int, ...], axis: int, h: float) -> sp.csr_matrix:
    factors = [sp.identity(n, format="csr") for n in shape]
    factors[axis] = forward_difference(shape[axis], h)
    op = factors[0]
    for f in factors[1:]:
        op = sp.kron(op, f, format="csr")
    return op


def _drop_rows(op: sp.csr_matrix, dropped: np.ndarray | None) -> sp.csr_matrix:
    if dropped is None or not dropped.any():
        return op
    keep = (~dropped.reshape(-1)).astype(float)
    return (sp.diags(keep) @ op).tocsr()


def _wirtinger(dx: sp.csr_matrix, dy: sp.csr_matrix) -> sp.csr_matrix:
    return (0.5 * (dx + 1j * dy)).tocsr()


# --------------------------------------------------------------------------- #
# Operators on the full lattice box
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class BoxOperators:
    """Wirtinger operators of one grid, each acting on box-shaped vectors."""

    grid: GridDomain

    def dbar(self, component: FieldComponent, k: int) -> sp.csr_matrix:
        """∂̄_k acting on fields of the given component (k = 1 or 2)."""
        return self._dbar_cache[(component, k)]

    @cached_property
    def _dbar_cache(self) -> dict[tuple[FieldComponent, int], sp.csr_matrix]:
        g = self.grid
        out: dict[tuple[FieldComponent, int], sp.csr_matrix] = {}
        for component in FieldComponent:
            for k in (1, 2):
                ax, ay = 2 * (k - 1), 2 * (k - 1) + 1
                dx = _drop_rows(axis_difference(g.shape, ax, g.h), g.free_rows(component, ax))
                dy = _drop_rows(axis_difference(g.shape, ay, g.h), g.free_rows(component, ay))
                out[(component, k)] = _wirtinger(dx, dy)
        return out

    @cached_property
    def a0(self) -> sp.csr_matrix:
        s = FieldComponent.SCALAR
        return sp.vstack([self.dbar(s, 1), self.dbar(s, 2)], format="csr")

    @cached_property
    def a1(self) -> sp.csr_matrix:
        return sp.hstack(
            [-self.dbar(FieldComponent.DZBAR1, 2), self.dbar(FieldComponent.DZBAR2, 1)], format="csr"
        )

    @cached_property
    def q_full(self) -> sp.csr_matrix:
        a0, a1 = self.a0, self.a1
        return (a1.conj().T @ a1 + a0 @ a0.conj().T).tocsr()


@lru_cache(maxsize=16)
def box_operators(grid: GridDomain) -> BoxOperators:
    logging.debug(f"[dbar] assembling box operators for box {grid.shape} h={grid.h}")
    return BoxOperators(grid)


def dbar_matrix(grid: GridDomain, operator: DbarOperator) -> sp.csr_matrix:
    ops = box_operators(grid)
    match operator:
        case DbarOperator.DBAR0:
            return ops.a0
        case DbarOperator.DBAR1:
            return ops.a1
    raise DbarError(f"unknown operator {operator!r}")


# :: MechanicalOperation | type=differential
def dbar0(u: ScalarField) -> FormField01:
    ops = box_operators(u.grid)
    flat = u.values.reshape(-1)
    f1 = ops.dbar(FieldComponent.SCALAR, 1) @ flat
    f2 = ops.dbar(FieldComponent.SCALAR, 2) @ flat
    return FormField01(u.grid, f1.reshape(u.grid.shape), f2.reshape(u.grid.shape))


# :: MechanicalOperation | type=differential
def dbar1(f: FormField01) -> FormField02:
    ops = box_operators(f.grid)
    f12 = ops.dbar(FieldComponent.DZBAR2, 1) @ f.f2.reshape(-1) - ops.dbar(
        FieldComponent.DZBAR1, 2
    ) @ f.f1.reshape(-1)
    return FormField02(f.grid, f12.reshape(f.grid.shape))


def adjoint_apply(
    operator: DbarOperator, w: FormField01 | FormField02
) -> ScalarField | FormField01:
    """
    Applies the exact adjoint of dbar0 or dbar1.

    Args:
        operator (DbarOperator): Which operator to take the adjoint of.
        w (FormField01 | FormField02): A field of the operator's output grade.

    Returns:
        ScalarField | FormField01: A field of the operator's input grade.
    """
    ops = box_operators(w.grid)
    shape = w.grid.shape
    match operator, w:
        case DbarOperator.DBAR0, FormField01():
            d1 = ops.dbar(FieldComponent.SCALAR, 1)
            d2 = ops.dbar(FieldComponent.SCALAR, 2)
            values = d1.conj().T @ w.f1.reshape(-1) + d2.conj().T @ w.f2.reshape(-1)
            return ScalarField(w.grid, values.reshape(shape))
        case DbarOperator.DBAR1, FormField02():
            flat = w.f12.reshape(-1)
            f1 = -(ops.dbar(FieldComponent.DZBAR1, 2).conj().T @ flat)
            f2 = ops.dbar(FieldComponent.DZBAR2, 1).conj().T @ flat
            return FormField01(w.grid, f1.reshape(shape), f2.reshape(shape))
    raise FieldShapeError(f"{operator.value} adjoint does not accept {type(w).__name__}")


# --------------------------------------------------------------------------- #
# The quadratic form
# --------------------------------------------------------------------------- #


class QOperator(Protocol):
    support: Support

    @property
    def dof_count(self) -> int: ...

    def matvec(self, x: np.ndarray) -> np.ndarray: ...

    def to_sparse(self) -> sp.csr_matrix: ...

    def diagonal(self) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class AssembledQOperator:
    """Q restricted to the support, as one sparse Hermitian matrix."""

    support: Support
    matrix: sp.csr_matrix

    @property
    def dof_count(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def to_sparse(self) -> sp.csr_matrix:
        return self.matrix

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()


@dataclass(frozen=True, eq=False)
class KroneckerBlock:
    """One component block A ⊗ I + I ⊗ B of a factorized Q."""

    slot: SeparableSlot
    a: sp.csr_matrix
    b: sp.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.shape[0], self.b.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n1, n2 = self.shape
        xm = x.reshape(n1, n2)
        return (self.a @ xm + (self.b @ xm.T).T).reshape(-1)

    def to_sparse(self) -> sp.csr_matrix:
        n1, n2 = self.shape
        return (sp.kron(self.a, sp.identity(n2)) + sp.kron(sp.identity(n1), self.b)).tocsr()


@dataclass(frozen=True, eq=False)
class ProductQOperator:
    """Q on a product support: a direct sum of two Kronecker sums."""

    support: Support
    blocks: tuple[KroneckerBlock, KroneckerBlock]

    @property
    def dof_count(self) -> int:
        return sum(b.shape[0] * b.shape[1] for b in self.blocks)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n = self.blocks[0].shape[0] * self.blocks[0].shape[1]
        return np.concatenate([self.blocks[0].matvec(x[:n]), self.blocks[1].matvec(x[n:])])

    def to_sparse(self) -> sp.csr_matrix:
        return sp.block_diag([b.to_sparse() for b in self.blocks], format="csr")

    def diagonal(self) -> np.ndarray:
        out = []
        for block in self.blocks:
            da, db = block.a.diagonal(), block.b.diagonal()
            out.append(np.add.outer(da, db).reshape(-1))
        return np.concatenate(out)


def _plane_dbar(plane: PlaneLattice, policy: TraceKind) -> sp.csr_matrix:
    dx = axis_difference(plane.shape, 0, plane.h)
    dy = axis_difference(plane.shape, 1, plane.h)
    if policy is TraceKind.FREE:
        dx = _drop_rows(dx, plane.free_rows(0))
        dy = _drop_rows(dy, plane.free_rows(1))
    return _wirtinger(dx, dy)


def _restrict(matrix: sp.csr_matrix, idx: np.ndarray) -> sp.csr_matrix:
    return matrix[idx][:, idx].tocsr()


def _product_q(support: Support) -> ProductQOperator:
    grid = support.grid
    assert grid.planes is not None
    p1, p2 = grid.planes
    i1, i2 = support.plane_indices
    policy = grid.policy
    d1 = {c: _plane_dbar(p1, policy.kind_for(c)) for c in FieldComponent}
    d2 = {c: _plane_dbar(p2, policy.kind_for(c)) for c in FieldComponent}
    s, c1, c2 = FieldComponent.SCALAR, FieldComponent.DZBAR1, FieldComponent.DZBAR2
    block1 = KroneckerBlock(
        SeparableSlot.DZBAR1,
        _restrict(d1[s] @ d1[s].conj().T, i1),
        _restrict(d2[c1].conj().T @ d2[c1], i2),
    )
    block2 = KroneckerBlock(
        SeparableSlot.DZBAR2,
        _restrict(d1[c2].conj().T @ d1[c2], i1),
        _restrict(d2[s] @ d2[s].conj().T, i2),
    )
    return ProductQOperator(support, (block1, block2))


# :: MechanicalOperation | type=assembly
def assemble_q(support: Support, *, factorize: bool = True) -> AssembledQOperator | ProductQOperator:
    """
    Q restricted to fields supported on `support`.

    Product supports with a product-compatible trace policy come back as a
    ProductQOperator unless `factorize` is False.
    """
    if factorize and support.is_product:
        op = _product_q(support)
        logging.debug(f"[dbar] product Q on {support.label!r}: planes={[b.shape for b in op.blocks]}")
        return op
    full = box_operators(support.grid).q_full
    idx = support.indices
    dofs = np.concatenate([idx, support.grid.box_size + idx])
    matrix = _restrict(full, dofs)
    logging.debug(f"[dbar] assembled Q on {support.label!r}: dofs={matrix.shape[0]} nnz={matrix.nnz}")
    return AssembledQOperator(support, matrix)


def q_apply(f: FormField01, support: Support | None = None) -> FormField01:
    """The Hermitian operator of q_value; restricted to `support` when given."""
    full = box_operators(f.grid).q_full
    n = f.grid.box_size
    out = full @ np.concatenate([f.f1.reshape(-1), f.f2.reshape(-1)])
    g1, g2 = out[:n], out[n:]
    if support is not None:
        keep = support.mask.reshape(-1)
        g1 = np.where(keep, g1, 0.0)
        g2 = np.where(keep, g2, 0.0)
    return FormField01(f.grid, g1.reshape(f.grid.shape), g2.reshape(f.grid.shape))


# :: MechanicalOperation | type=quadratic-form
def q_value(f: FormField01 | SeparableForm01, operator: ProductQOperator | None = None) -> float:
    """
    ‖∂̄f‖² + ‖∂̄*f‖² with the h^4-weighted norms.

    Separable forms on product grids are evaluated through the plane
    operators without materializing the 4-D field.
    """
    if isinstance(f, SeparableForm01):
        return _separable_q_value(f, operator or _product_q(f.support))
    dbar_part = dbar1(f).norm_sq()
    adjoint = adjoint_apply(DbarOperator.DBAR0, f)
    return dbar_part + adjoint.norm_sq()  # type: ignore[union-attr]


def _separable_q_value(f: SeparableForm01, operator: ProductQOperator) -> float:
    a, b = f.plane_vectors()
    block = operator.blocks[0] if f.slot is SeparableSlot.DZBAR1 else operator.blocks[1]
    h2 = f.h**2
    aa = np.vdot(a, a).real
    bb = np.vdot(b, b).real
    qa = np.vdot(a, block.a @ a).real
    qb = np.vdot(b, block.b @ b).real
    return float(h2 * h2 * (qa * bb + aa * qb))


def separable_quotient(f: SeparableForm01, operator: ProductQOperator | None = None) -> float:
    return _separable_q_value(f, operator or _product_q(f.support)) / f.norm_sq()


# --------------------------------------------------------------------------- #
# Sobolev -1 norm
# --------------------------------------------------------------------------- #


def dirichlet_laplacian(grid: GridDomain, mask: np.ndarray | None = None) -> sp.csr_matrix:
    """Second-order Dirichlet Laplacian on the nodes of `mask` (default: grid mask)."""
    mask = grid.mask if mask is None else mask
    h2 = grid.h**2
    lap = None
    for axis in range(4):
        factors = [sp.identity(n, format="csr") for n in grid.shape]
        n = grid.shape[axis]
        factors[axis] = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format="csr") / h2
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        lap = term if lap is None else lap + term
    idx = np.flatnonzero(mask.reshape(-1))
    return _restrict(lap.tocsr(), idx)  # type: ignore[union-attr]


# :: MechanicalOperation | type=sobolev-norm
def sobolev_minus1(field: ScalarField | FormField01, support: Support | None = None) -> float:
    """
    ‖u‖²₋₁ = <(I - Δ_h)⁻¹ u, u>, summed over the components of a form.

    Raises:
        FieldShapeError: If the field is nonzero off the mask.
        SobolevSolveError: If conjugate gradients do not converge.
    """
    grid = field.grid
    mask = grid.mask if support is None else support.mask
    parts = [field.values] if isinstance(field, ScalarField) else [field.f1, field.f2]
    if any(np.any(p[~mask]) for p in parts):
        raise FieldShapeError("field is nonzero outside its mask")
    idx = np.flatnonzero(mask.reshape(-1))
    operator = (sp.identity(idx.size, format="csr") - dirichlet_laplacian(grid, mask)).tocsr()
    total = 0.0
    for part in parts:
        rhs = part.reshape(-1)[idx]
        if not np.any(rhs):
            continue
        x, info = cg(operator, rhs, rtol=SOBOLEV_RTOL, atol=0.0, maxiter=10 * idx.size)
        if info != 0:
            raise SobolevSolveError(f"(I - Δ_h) solve did not converge (info={info})", info=info)
        total += grid.h**4 * float(np.vdot(rhs, x).real)
    return total


def norm_sq(field: ScalarField | FormField01 | FormField02) -> float:
    if isinstance(field, ScalarField):
        return lattice_norm_sq(field.grid.h, field.values)
    return field.norm_sq()
