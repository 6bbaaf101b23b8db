from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any

import numpy as np
from typing_extensions import Self

from dbar_lab.internal.util.multiformat import MultiformatModelMixin
from dbar_lab.model.regions import (
    DomainLike,
    EmptyMaskError,
    FlatPiece,
    GeometryError,
    ProductDomain,
)

# Relative slack used for strict-interior tests of lattice nodes.
NODE_MARGIN = 1e-9


class GridError(GeometryError):
    pass


class FieldComponent(Enum):
    SCALAR = "scalar"
    DZBAR1 = "dzbar1"
    DZBAR2 = "dzbar2"


class TraceKind(Enum):
    DIRICHLET = "dirichlet"
    FREE = "free"


@dataclass(frozen=True, slots=True, kw_only=True)
class TracePolicy(MultiformatModelMixin):
    """
    Boundary behaviour on flat pieces, per field component.

    A FREE component has the forward-difference rows that cross a flat piece
    removed from every difference operator applied to it. Every other
    boundary face is Dirichlet.
    """

    scalar: TraceKind = TraceKind.FREE
    dzbar1: TraceKind = TraceKind.FREE
    dzbar2: TraceKind = TraceKind.DIRICHLET

    @classmethod
    def default(cls) -> TracePolicy:
        return cls()

    @classmethod
    def all_dirichlet(cls) -> TracePolicy:
        return cls(
            scalar=TraceKind.DIRICHLET, dzbar1=TraceKind.DIRICHLET, dzbar2=TraceKind.DIRICHLET
        )

    def kind_for(self, component: FieldComponent) -> TraceKind:
        match component:
            case FieldComponent.SCALAR:
                return self.scalar
            case FieldComponent.DZBAR1:
                return self.dzbar1
            case FieldComponent.DZBAR2:
                return self.dzbar2
        raise GridError(f"unknown field component {component!r}")

    def is_product_compatible(self, flat_pieces: tuple[FlatPiece, ...]) -> bool:
        """
        Whether the mixed blocks of Q cancel on a product lattice.

        Pieces normal to a z1 axis need the scalar and dz̄2 policies to
        agree; pieces normal to a z2 axis need the scalar and dz̄1 policies
        to agree.
        """
        for piece in flat_pieces:
            partner = self.dzbar2 if piece.axis < 2 else self.dzbar1
            if partner is not self.scalar:
                return False
        return True

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {"scalar": self.scalar.value, "dzbar1": self.dzbar1.value, "dzbar2": self.dzbar2.value}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        try:
            return cls(**{k: TraceKind(v) for k, v in mapping.items()})
        except (TypeError, ValueError) as e:
            raise GridError(f"malformed trace policy: {e}")


# --------------------------------------------------------------------------- #
# Lattice helpers
# --------------------------------------------------------------------------- #


def index_range(lo: float, hi: float, h: float) -> tuple[int, int]:
    """Global node indices covering [lo, hi] plus one padding node each side."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise GridError("cannot build a lattice over an unbounded interval")
    first = math.floor(lo / h) - 1
    last = math.ceil(hi / h) + 1
    return first, last - first + 1


def lattice_coords(first: int, count: int, h: float) -> np.ndarray:
    return (first + np.arange(count)) * h


def free_row_mask(
    *,
    shape: tuple[int, ...],
    index_lo: tuple[int, ...],
    h: float,
    domain_mask: np.ndarray,
    pieces: tuple[FlatPiece, ...],
    axis: int,
) -> np.ndarray | None:
    """
    Forward-difference rows along `axis` removed by free flat pieces.

    Planar pieces remove a whole lattice slice, so differences along other
    axes commute with the removal. Curved pieces (level None) remove the rows
    of domain nodes whose neighbour in `direction` leaves the domain.

    Args:
        shape (tuple[int, ...]): Lattice box shape.
        index_lo (tuple[int, ...]): Global index of the first node per axis.
        h (float): Lattice spacing.
        domain_mask (np.ndarray): Domain membership over the box.
        pieces (tuple[FlatPiece, ...]): Pieces, axes local to this lattice.
        axis (int): Local difference axis.

    Returns:
        np.ndarray | None: Boolean mask of dropped rows, or None if no piece
        is normal to `axis`.
    """
    dropped: np.ndarray | None = None
    for piece in pieces:
        if piece.axis != axis:
            continue
        if dropped is None:
            dropped = np.zeros(shape, dtype=bool)
        if piece.level is not None:
            ratio = piece.level / h
            if piece.direction > 0:
                k = math.ceil(ratio - NODE_MARGIN) - 1
            else:
                k = math.floor(ratio + NODE_MARGIN)
            local = k - index_lo[axis]
            if 0 <= local < shape[axis]:
                index: list[Any] = [slice(None)] * len(shape)
                index[axis] = local
                dropped[tuple(index)] = True
        else:
            # rows at node x whose difference reaches x + h e_axis
            nxt = np.zeros(shape, dtype=bool)
            src: list[Any] = [slice(None)] * len(shape)
            dst: list[Any] = [slice(None)] * len(shape)
            src[axis] = slice(1, None)
            dst[axis] = slice(None, -1)
            nxt[tuple(dst)] = domain_mask[tuple(src)]
            if piece.direction > 0:
                dropped |= domain_mask & ~nxt
            else:
                dropped |= ~domain_mask & nxt
    return dropped


@dataclass(frozen=True, eq=False, kw_only=True)
class PlaneLattice:
    """Uniform lattice of one complex coordinate plane."""

    h: float
    index_lo: tuple[int, int]
    shape: tuple[int, int]
    mask: np.ndarray
    # flat pieces with axes local to this plane (0 = real part, 1 = imaginary part)
    pieces: tuple[FlatPiece, ...] = ()

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            lattice_coords(self.index_lo[0], self.shape[0], self.h),
            lattice_coords(self.index_lo[1], self.shape[1], self.h),
        )

    @cached_property
    def points(self) -> np.ndarray:
        """Complex coordinate of every box node, shaped like the box."""
        x, y = self.coords
        return x[:, None] + 1j * y[None, :]

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    def free_rows(self, axis: int) -> np.ndarray | None:
        return free_row_mask(
            shape=self.shape,
            index_lo=self.index_lo,
            h=self.h,
            domain_mask=self.mask,
            pieces=self.pieces,
            axis=axis,
        )


@dataclass(frozen=True, eq=False, kw_only=True)
class GridDomain:
    """
    Globally anchored lattice hZ^4 over the bounding box of a domain.

    Node (i0, i1, i2, i3) sits at h * (index_lo + i). Fields are stored over
    the whole box; `mask` marks the strictly interior nodes. Product domains
    keep their two plane lattices so that operators can factorize.
    """

    h: float
    index_lo: tuple[int, int, int, int]
    shape: tuple[int, int, int, int]
    domain: DomainLike
    policy: TracePolicy
    planes: tuple[PlaneLattice, PlaneLattice] | None = None
    explicit_mask: np.ndarray | None = None

    @property
    def is_product(self) -> bool:
        return self.planes is not None

    @property
    def box_size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def mask(self) -> np.ndarray:
        if self.planes is not None:
            m1, m2 = self.planes[0].mask, self.planes[1].mask
            return np.logical_and.outer(m1, m2)
        assert self.explicit_mask is not None
        return self.explicit_mask

    @cached_property
    def node_count(self) -> int:
        if self.planes is not None:
            return int(self.planes[0].mask.sum()) * int(self.planes[1].mask.sum())
        return int(self.mask.sum())

    def axis_coords(self, axis: int) -> np.ndarray:
        return lattice_coords(self.index_lo[axis], self.shape[axis], self.h)

    @cached_property
    def box_points(self) -> np.ndarray:
        """Real coordinates of every box node, shape (*shape, 4)."""
        axes = [self.axis_coords(a) for a in range(4)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def free_rows(self, component: FieldComponent, axis: int) -> np.ndarray | None:
        """Dropped forward-difference rows along `axis` for a component."""
        if self.policy.kind_for(component) is TraceKind.DIRICHLET:
            return None
        return free_row_mask(
            shape=self.shape,
            index_lo=self.index_lo,
            h=self.h,
            domain_mask=self.mask,
            pieces=tuple(self.domain.flat_pieces),
            axis=axis,
        )

    def product_policy_ok(self) -> bool:
        return self.is_product and self.policy.is_product_compatible(
            tuple(self.domain.flat_pieces)
        )

    # :: UtilityOperation | type=support-selection
    def support_in(self, region: Any | None = None, *, label: str = "") -> Support:
        """
        Nodes of the grid that also lie strictly inside `region`.

        Args:
            region (Any | None): A ProductDomain, or any object with a
                `contains(points, margin)` method over real 4-vectors. None
                selects the whole grid.
            label (str): Name recorded on the support.

        Returns:
            Support: The selected nodes; product grids intersected with product
            regions keep their plane factorization.

        Raises:
            EmptyMaskError: If no node is selected.
        """
        margin = NODE_MARGIN * self.h
        if region is None:
            if self.planes is None:
                support = Support(grid=self, node_mask=self.mask, label=label or "grid")
            else:
                support = Support(
                    grid=self, planes=(self.planes[0].mask, self.planes[1].mask), label=label or "grid"
                )
        elif self.planes is not None and isinstance(region, ProductDomain):
            p1, p2 = self.planes
            m1 = p1.mask & region.factor1.contains(p1.points, margin)
            m2 = p2.mask & region.factor2.contains(p2.points, margin)
            support = Support(grid=self, planes=(m1, m2), label=label or region.name)
        else:
            inside = region.contains(self.box_points, margin)
            support = Support(
                grid=self,
                node_mask=self.mask & inside,
                label=label or str(getattr(region, "name", "")),
            )
        if support.node_count == 0:
            raise EmptyMaskError(f"support {support.label!r} contains no lattice node at h={self.h}")
        return support


@dataclass(frozen=True, eq=False, kw_only=True)
class Support:
    """
    A set of lattice nodes on which forms may be nonzero.

    Product supports are given by their plane masks; the 4-D `mask` is only
    built when something asks for it.
    """

    grid: GridDomain
    planes: tuple[np.ndarray, np.ndarray] | None = None
    node_mask: np.ndarray | None = None
    label: str = ""

    def __post_init__(self) -> None:
        if (self.planes is None) == (self.node_mask is None):
            raise GridError("a support takes exactly one of planes and node_mask")

    @property
    def is_product(self) -> bool:
        return self.planes is not None and self.grid.product_policy_ok()

    @cached_property
    def mask(self) -> np.ndarray:
        if self.node_mask is not None:
            return self.node_mask
        assert self.planes is not None
        return np.logical_and.outer(*self.planes)

    @cached_property
    def indices(self) -> np.ndarray:
        """Flat box indices of the support nodes, ascending."""
        return np.flatnonzero(self.mask.reshape(-1))

    @cached_property
    def plane_indices(self) -> tuple[np.ndarray, np.ndarray]:
        if self.planes is None:
            raise GridError("support is not a product of plane supports")
        return np.flatnonzero(self.planes[0].reshape(-1)), np.flatnonzero(self.planes[1].reshape(-1))

    @cached_property
    def node_count(self) -> int:
        if self.planes is not None:
            return int(self.planes[0].sum()) * int(self.planes[1].sum())
        return int(self.mask.sum())

    @property
    def dof_count(self) -> int:
        return 2 * self.node_count

    def points(self) -> np.ndarray:
        """Real coordinates of the support nodes, shape (node_count, 4)."""
        return self.grid.box_points.reshape(-1, 4)[self.indices]
