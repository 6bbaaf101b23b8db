from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from enum import Enum
from typing import Any, Protocol, runtime_checkable

import numpy as np
from typing_extensions import Self

from dbar_lab.internal.util.multiformat import MultiformatModelMixin

TWO_PI = 2.0 * math.pi

# Lattice axis numbering used everywhere: (x1, y1, x2, y2).
AXIS_NAMES: tuple[str, str, str, str] = ("x1", "y1", "x2", "y2")


class GeometryError(RuntimeError):
    pass


class RegionSpecError(GeometryError):
    """Raised when a region or domain description is malformed."""

    def __init__(self, message: str, *, key: str | None = None):
        super().__init__(message)
        self.key = key


class UnboundedRegionError(GeometryError):
    pass


class EmptyMaskError(GeometryError):
    pass


class RegionKind(Enum):
    DISC = "disc"
    SECTOR = "sector"
    HALF_DISC = "half_disc"
    BOX = "box"
    INTERSECTION = "intersection"


class HalfPlaneSide(Enum):
    LOWER = "lower"
    UPPER = "upper"


BoundingBox = tuple[float, float, float, float]


@dataclass(frozen=True, slots=True, kw_only=True)
class PlanarRegion(MultiformatModelMixin):
    """
    Analytic description of an open region of the complex plane.

    Only the fields relevant to `kind` are meaningful:

    - disc: `center`, `radius`
    - sector: `radius`, `theta_min`, `theta_max`, optional `inner_radius`
      (apex at the origin, angles in radians, span at most 2π)
    - half_disc: `radius`, `side` (centered at the origin)
    - box: `x_interval`, `y_interval` (infinite ends allowed)
    - intersection: `members`

    Membership is strict: points on the boundary are outside.
    """

    kind: RegionKind
    center: complex = 0j
    radius: float = 0.0
    inner_radius: float = 0.0
    theta_min: float = 0.0
    theta_max: float = 0.0
    side: HalfPlaneSide = HalfPlaneSide.LOWER
    x_interval: tuple[float, float] = (-math.inf, math.inf)
    y_interval: tuple[float, float] = (-math.inf, math.inf)
    members: tuple[PlanarRegion, ...] = ()

    def __post_init__(self) -> None:
        match self.kind:
            case RegionKind.DISC | RegionKind.HALF_DISC:
                if not self.radius > 0.0:
                    raise RegionSpecError("radius must be positive", key="radius")
            case RegionKind.SECTOR:
                if not self.radius > 0.0:
                    raise RegionSpecError("radius must be positive", key="radius")
                if not 0.0 <= self.inner_radius < self.radius:
                    raise RegionSpecError(
                        "inner_radius must lie in [0, radius)", key="inner_radius"
                    )
                if not self.theta_min < self.theta_max:
                    raise RegionSpecError("theta_min must be below theta_max", key="theta_min")
                if self.theta_max - self.theta_min > TWO_PI + 1e-12:
                    raise RegionSpecError("sector span exceeds 2π", key="theta_max")
            case RegionKind.BOX:
                for key, (lo, hi) in (("x", self.x_interval), ("y", self.y_interval)):
                    if not lo < hi:
                        raise RegionSpecError(f"{key} interval is empty", key=key)
            case RegionKind.INTERSECTION:
                if not self.members:
                    raise RegionSpecError("intersection needs members", key="members")

    # -------------------------
    # constructors
    # -------------------------

    @classmethod
    def disc(cls, radius: float, center: complex = 0j) -> PlanarRegion:
        return cls(kind=RegionKind.DISC, radius=float(radius), center=complex(center))

    @classmethod
    def sector(
        cls, radius: float, theta_min: float, theta_max: float, inner_radius: float = 0.0
    ) -> PlanarRegion:
        return cls(
            kind=RegionKind.SECTOR,
            radius=float(radius),
            theta_min=float(theta_min),
            theta_max=float(theta_max),
            inner_radius=float(inner_radius),
        )

    @classmethod
    def half_disc(cls, radius: float, side: HalfPlaneSide = HalfPlaneSide.LOWER) -> PlanarRegion:
        return cls(kind=RegionKind.HALF_DISC, radius=float(radius), side=side)

    @classmethod
    def box(cls, x: tuple[float, float], y: tuple[float, float]) -> PlanarRegion:
        return cls(
            kind=RegionKind.BOX,
            x_interval=(float(x[0]), float(x[1])),
            y_interval=(float(y[0]), float(y[1])),
        )

    @classmethod
    def intersection(cls, *members: PlanarRegion) -> PlanarRegion:
        return cls(kind=RegionKind.INTERSECTION, members=tuple(members))

    # -------------------------
    # geometry
    # -------------------------

    # :: UtilityOperation | type=validation
    def contains(self, points: np.ndarray | complex, margin: float = 0.0) -> np.ndarray:
        """
        Vectorized strict membership test.

        Args:
            points (np.ndarray | complex): Complex points of any shape.
            margin (float): Points must satisfy every defining inequality with
                at least this much room (in length units). Zero gives the plain
                open-region test.

        Returns:
            np.ndarray: Boolean array shaped like `points`.
        """
        z = np.asarray(points, dtype=complex)
        match self.kind:
            case RegionKind.DISC:
                return np.abs(z - self.center) < self.radius - margin
            case RegionKind.HALF_DISC:
                inside = np.abs(z) < self.radius - margin
                if self.side is HalfPlaneSide.LOWER:
                    return inside & (z.imag < -margin)
                return inside & (z.imag > margin)
            case RegionKind.SECTOR:
                r = np.abs(z)
                span = self.theta_max - self.theta_min
                offset = np.mod(np.angle(z) - self.theta_min, TWO_PI)
                with np.errstate(divide="ignore", invalid="ignore"):
                    slack = np.where(r > 0.0, margin / np.maximum(r, 1e-300), np.inf)
                in_angle = (offset > slack) & (offset < span - slack)
                if span >= TWO_PI - 1e-12 and margin == 0.0:
                    in_angle = np.ones_like(r, dtype=bool)
                return (r < self.radius - margin) & (r > self.inner_radius + margin) & in_angle
            case RegionKind.BOX:
                (xlo, xhi), (ylo, yhi) = self.x_interval, self.y_interval
                return (
                    (z.real > xlo + margin)
                    & (z.real < xhi - margin)
                    & (z.imag > ylo + margin)
                    & (z.imag < yhi - margin)
                )
            case RegionKind.INTERSECTION:
                result = np.ones(z.shape, dtype=bool)
                for member in self.members:
                    result &= member.contains(z, margin)
                return result
        raise GeometryError(f"unknown region kind {self.kind!r}")

    def bounding_box(self) -> BoundingBox:
        """Axis-aligned box (xlo, xhi, ylo, yhi) containing the region."""
        match self.kind:
            case RegionKind.DISC:
                c, r = self.center, self.radius
                return (c.real - r, c.real + r, c.imag - r, c.imag + r)
            case RegionKind.HALF_DISC:
                r = self.radius
                if self.side is HalfPlaneSide.LOWER:
                    return (-r, r, -r, 0.0)
                return (-r, r, 0.0, r)
            case RegionKind.SECTOR:
                return _sector_bounding_box(self)
            case RegionKind.BOX:
                return (*self.x_interval, *self.y_interval)
            case RegionKind.INTERSECTION:
                boxes = [m.bounding_box() for m in self.members]
                return (
                    max(b[0] for b in boxes),
                    min(b[1] for b in boxes),
                    max(b[2] for b in boxes),
                    min(b[3] for b in boxes),
                )
        raise GeometryError(f"unknown region kind {self.kind!r}")

    def is_bounded(self) -> bool:
        return all(math.isfinite(v) for v in self.bounding_box())

    def exact_area(self) -> float | None:
        """Closed-form area for primitive kinds; None for intersections."""
        match self.kind:
            case RegionKind.DISC:
                return math.pi * self.radius**2
            case RegionKind.HALF_DISC:
                return 0.5 * math.pi * self.radius**2
            case RegionKind.SECTOR:
                span = self.theta_max - self.theta_min
                return 0.5 * span * (self.radius**2 - self.inner_radius**2)
            case RegionKind.BOX:
                (xlo, xhi), (ylo, yhi) = self.x_interval, self.y_interval
                return (xhi - xlo) * (yhi - ylo)
            case _:
                return None

    # -------------------------
    # serialization
    # -------------------------

    # :: MechanicalOperation | type=serialization
    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        match self.kind:
            case RegionKind.DISC:
                out |= {"radius": self.radius, "center": [self.center.real, self.center.imag]}
            case RegionKind.HALF_DISC:
                out |= {"radius": self.radius, "side": self.side.value}
            case RegionKind.SECTOR:
                out |= {
                    "radius": self.radius,
                    "inner_radius": self.inner_radius,
                    "theta_min": self.theta_min,
                    "theta_max": self.theta_max,
                }
            case RegionKind.BOX:
                out |= {"x": list(self.x_interval), "y": list(self.y_interval)}
            case RegionKind.INTERSECTION:
                out |= {"members": [m.to_mapping() for m in self.members]}
        return out

    # :: MechanicalOperation | type=deserialization
    @classmethod
    def from_mapping(
        cls,
        mapping: Mapping[str, Any],
        *,
        named: Mapping[str, PlanarRegion] | None = None,
        **_: Any,
    ) -> Self:
        """
        Builds a region from a config section.

        Args:
            mapping (Mapping[str, Any]): Keys `kind`, `radius`, `center`,
                `theta_min`, `theta_max`, `inner_radius`, `side`, `x`, `y`,
                `members`.
            named (Mapping[str, PlanarRegion] | None): Already-parsed regions
                that intersection members may reference by name.

        Returns:
            PlanarRegion: The parsed region.

        Raises:
            RegionSpecError: If the kind is unknown or a key is malformed.
        """
        try:
            kind = RegionKind(mapping["kind"])
        except KeyError:
            raise RegionSpecError("region needs a kind", key="kind")
        except ValueError:
            raise RegionSpecError(f"unknown region kind {mapping['kind']!r}", key="kind")

        try:
            match kind:
                case RegionKind.DISC:
                    re, im = mapping.get("center", (0.0, 0.0))
                    return cls(
                        kind=kind, radius=float(mapping["radius"]), center=complex(re, im)
                    )
                case RegionKind.HALF_DISC:
                    return cls(
                        kind=kind,
                        radius=float(mapping["radius"]),
                        side=HalfPlaneSide(mapping.get("side", "lower")),
                    )
                case RegionKind.SECTOR:
                    return cls(
                        kind=kind,
                        radius=float(mapping["radius"]),
                        inner_radius=float(mapping.get("inner_radius", 0.0)),
                        theta_min=float(mapping["theta_min"]),
                        theta_max=float(mapping["theta_max"]),
                    )
                case RegionKind.BOX:
                    x = mapping.get("x", (-math.inf, math.inf))
                    y = mapping.get("y", (-math.inf, math.inf))
                    return cls(
                        kind=kind,
                        x_interval=(float(x[0]), float(x[1])),
                        y_interval=(float(y[0]), float(y[1])),
                    )
                case RegionKind.INTERSECTION:
                    members = tuple(
                        _resolve_member(m, named) for m in mapping.get("members", ())
                    )
                    return cls(kind=kind, members=members)
        except KeyError as e:
            raise RegionSpecError(f"region of kind {kind.value} is missing {e}", key=str(e))
        except (TypeError, ValueError) as e:
            raise RegionSpecError(f"malformed region of kind {kind.value}: {e}")
        raise RegionSpecError(f"unknown region kind {kind!r}", key="kind")


def _resolve_member(
    member: str | Mapping[str, Any], named: Mapping[str, PlanarRegion] | None
) -> PlanarRegion:
    if isinstance(member, str):
        if named is None or member not in named:
            raise RegionSpecError(f"unknown region reference {member!r}", key="members")
        return named[member]
    return PlanarRegion.from_mapping(member, named=named)


def _sector_bounding_box(region: PlanarRegion) -> BoundingBox:
    angles = [region.theta_min, region.theta_max]
    k = math.ceil(region.theta_min / (math.pi / 2))
    while k * (math.pi / 2) < region.theta_max:
        angles.append(k * (math.pi / 2))
        k += 1
    pts = [region.radius * complex(math.cos(a), math.sin(a)) for a in angles]
    if region.inner_radius > 0.0:
        pts += [region.inner_radius * complex(math.cos(a), math.sin(a)) for a in angles]
    else:
        pts.append(0j)
    return (
        min(p.real for p in pts),
        max(p.real for p in pts),
        min(p.imag for p in pts),
        max(p.imag for p in pts),
    )


# --------------------------------------------------------------------------- #
# Domains in C^2
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, slots=True, kw_only=True)
class FlatPiece(MultiformatModelMixin):
    """
    Boundary face descriptor for a piece of the boundary normal to one lattice axis.

    `level` is the coordinate of a boundary plane; None means "every boundary
    face crossed in `direction` along `axis`", which is how the curved model
    declares its flat-piece policy.
    """

    axis: int = 3
    level: float | None = 0.0
    direction: int = 1

    def __post_init__(self) -> None:
        if self.axis not in (0, 1, 2, 3):
            raise RegionSpecError("flat piece axis must be one of 0..3", key="axis")
        if self.direction not in (-1, 1):
            raise RegionSpecError("flat piece direction must be +1 or -1", key="direction")

    @property
    def is_planar(self) -> bool:
        return self.level is not None

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {"axis": AXIS_NAMES[self.axis], "level": self.level, "direction": self.direction}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        axis = mapping.get("axis", "y2")
        if isinstance(axis, str):
            if axis not in AXIS_NAMES:
                raise RegionSpecError(f"unknown axis {axis!r}", key="axis")
            axis = AXIS_NAMES.index(axis)
        level = mapping.get("level", 0.0)
        return cls(
            axis=int(axis),
            level=None if level is None else float(level),
            direction=int(mapping.get("direction", 1)),
        )


@runtime_checkable
class Domain(Protocol):
    """Anything a grid can be built on."""

    flat_pieces: tuple[FlatPiece, ...]

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray: ...

    def bounding_box(self) -> tuple[tuple[float, float], ...]: ...

    def product_factors(self) -> tuple[PlanarRegion, PlanarRegion] | None: ...


def _split(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(points, dtype=float)
    return p[..., 0] + 1j * p[..., 1], p[..., 2] + 1j * p[..., 3]


@dataclass(frozen=True, slots=True, kw_only=True)
class ProductDomain(MultiformatModelMixin):
    factor1: PlanarRegion
    factor2: PlanarRegion
    flat_pieces: tuple[FlatPiece, ...] = ()
    name: str = ""

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Strict membership for real points of shape (..., 4)."""
        z1, z2 = _split(points)
        return self.factor1.contains(z1, margin) & self.factor2.contains(z2, margin)

    def contains_complex(self, z1: np.ndarray | complex, z2: np.ndarray | complex) -> np.ndarray:
        return self.factor1.contains(z1) & self.factor2.contains(z2)

    def bounding_box(self) -> tuple[tuple[float, float], ...]:
        a = self.factor1.bounding_box()
        b = self.factor2.bounding_box()
        return ((a[0], a[1]), (a[2], a[3]), (b[0], b[1]), (b[2], b[3]))

    def product_factors(self) -> tuple[PlanarRegion, PlanarRegion]:
        return self.factor1, self.factor2

    def volume(self) -> float | None:
        a, b = self.factor1.exact_area(), self.factor2.exact_area()
        return None if a is None or b is None else a * b

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "name": self.name,
            "factor1": self.factor1.to_mapping(),
            "factor2": self.factor2.to_mapping(),
            "flat_pieces": [p.to_mapping() for p in self.flat_pieces],
        }

    @classmethod
    def from_mapping(
        cls,
        mapping: Mapping[str, Any],
        *,
        named: Mapping[str, PlanarRegion] | None = None,
        **_: Any,
    ) -> Self:
        for key in ("factor1", "factor2"):
            if key not in mapping:
                raise RegionSpecError(f"product domain is missing {key}", key=key)
        return cls(
            factor1=_resolve_member(mapping["factor1"], named),
            factor2=_resolve_member(mapping["factor2"], named),
            flat_pieces=tuple(FlatPiece.from_mapping(p) for p in mapping.get("flat_pieces", ())),
            name=str(mapping.get("name", "")),
        )


@dataclass(frozen=True, slots=True, kw_only=True)
class StrictlyPseudoconvexModel(MultiformatModelMixin):
    """
    {(z1, z2): Im z2 < -|z1|^2} intersected with the cube [-w, w]^4.

    The boundary is strictly pseudoconvex at the origin. Its flat-piece policy
    applies to every boundary face crossed in the +y2 direction.
    """

    half_width: float = 1.0
    flat_pieces: tuple[FlatPiece, ...] = (FlatPiece(axis=3, level=None),)
    name: str = "siegel-model"

    def __post_init__(self) -> None:
        if not self.half_width > 0.0:
            raise RegionSpecError("half_width must be positive", key="half_width")

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        w = self.half_width - margin
        in_box = np.all(np.abs(p) < w, axis=-1)
        return in_box & (p[..., 3] < -(p[..., 0] ** 2 + p[..., 1] ** 2) - margin)

    def bounding_box(self) -> tuple[tuple[float, float], ...]:
        w = self.half_width
        return ((-w, w), (-w, w), (-w, w), (-w, 0.0))

    def product_factors(self) -> None:
        return None

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {"name": self.name, "half_width": self.half_width}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        return cls(half_width=float(mapping.get("half_width", 1.0)))


@dataclass(frozen=True, slots=True, kw_only=True)
class ModelConstants(MultiformatModelMixin):
    """Radii of the sectors W1, W2 and the half-disc W around the flat piece."""

    a1: float = 0.5
    a2: float = 1.0
    a3: float = 0.5

    def __post_init__(self) -> None:
        for key in ("a1", "a2", "a3"):
            if not getattr(self, key) > 0.0:
                raise RegionSpecError(f"{key} must be positive", key=f"model.{key}")
        if not self.a1 < self.a2:
            raise RegionSpecError("a1 must be below a2", key="model.a1")

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {"a1": self.a1, "a2": self.a2, "a3": self.a3}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        return cls(**{k: float(mapping[k]) for k in ("a1", "a2", "a3") if k in mapping})


@dataclass(frozen=True, slots=True, kw_only=True)
class NeighborhoodFamily:
    """
    U_j = {|z1| < z1_base + 1/j} x {|z2| < j^(-z2_exponent)}.

    The limit set is K = {|z1| <= z1_base, z2 = 0}.
    """

    z1_base: float = 0.5
    z2_exponent: int = 2
    label: str = "U"

    def member(self, j: int) -> ProductDomain:
        if j < 1:
            raise GeometryError(f"neighborhood index must be positive, got {j}")
        return ProductDomain(
            factor1=PlanarRegion.disc(self.z1_base + 1.0 / j),
            factor2=PlanarRegion.disc(float(j) ** (-self.z2_exponent)),
            name=f"{self.label}_{j}",
        )

    def limit_set_contains(self, points: np.ndarray) -> np.ndarray:
        z1, z2 = _split(points)
        return (np.abs(z1) <= self.z1_base) & (z2 == 0)

    def sample_limit_set(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples of K as real points of shape (count, 4)."""
        r = self.z1_base * np.sqrt(rng.uniform(0.0, 1.0, count))
        t = rng.uniform(0.0, TWO_PI, count)
        out = np.zeros((count, 4))
        out[:, 0] = r * np.cos(t)
        out[:, 1] = r * np.sin(t)
        return out


def sample_region(
    region: PlanarRegion, count: int, rng: np.random.Generator, *, pad: float = 0.0
) -> np.ndarray:
    """
    Rejection-samples complex points from the bounding box of `region`.

    Args:
        region (PlanarRegion): A bounded region.
        count (int): Number of points returned.
        rng (np.random.Generator): Source of randomness.
        pad (float): Extra width added around the bounding box, so that
            callers can also sample just outside the region.

    Returns:
        np.ndarray: `count` complex points inside the region.
    """
    if not region.is_bounded():
        raise UnboundedRegionError(f"cannot sample unbounded region {region.kind.value}")
    xlo, xhi, ylo, yhi = region.bounding_box()
    found: list[np.ndarray] = []
    total = 0
    while total < count:
        batch = rng.uniform(xlo - pad, xhi + pad, 4 * count) + 1j * rng.uniform(
            ylo - pad, yhi + pad, 4 * count
        )
        keep = batch[region.contains(batch)]
        found.append(keep)
        total += keep.size
    return np.concatenate(found)[:count]


DomainLike = ProductDomain | StrictlyPseudoconvexModel

__all__ = (
    "AXIS_NAMES",
    "BoundingBox",
    "Domain",
    "DomainLike",
    "EmptyMaskError",
    "FlatPiece",
    "GeometryError",
    "HalfPlaneSide",
    "ModelConstants",
    "NeighborhoodFamily",
    "PlanarRegion",
    "ProductDomain",
    "RegionKind",
    "RegionSpecError",
    "StrictlyPseudoconvexModel",
    "UnboundedRegionError",
    "sample_region",
)

