"""
Adaptive two-dimensional quadrature over planar regions.

Cells live in a chart of the region: polar (radius, angle) charts resolve
discs, sectors and half-discs exactly; everything else uses cartesian cells
over the bounding box, clipped by membership sampling where a cell straddles
the boundary. Each cell carries a tensor Gauss-Legendre value and a pair of
directional error estimates from rules of lower order in one direction, so
refinement only splits the direction that needs it.
"""

from __future__ import annotations

import heapq
import logging
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from numpy.polynomial.legendre import leggauss
from typing_extensions import Self

from dbar_lab.internal.util.multiformat import MultiformatModelMixin
from dbar_lab.model.regions import PlanarRegion, RegionKind, UnboundedRegionError

Integrand = Callable[[np.ndarray], np.ndarray]

HIGH_ORDER = 10
LOW_ORDER = 5
# midpoint sub-grid used on cells cut by the region boundary
CLIP_SAMPLES = 16
ABS_FLOOR = 1e-14
# smallest cell extent, relative to the chart extent
MIN_REL_EXTENT = 2.0**-56
MIN_REL_EXTENT_CLIPPED = 2.0**-24
# radial grading toward a hot point stops this far below the outer radius
MAX_GRADING_LEVELS = 40
# refinement-chain history inspected for divergence
DIVERGENCE_HISTORY = 8
CHECKPOINT_EVERY = 256

_X_HIGH, _W_HIGH = leggauss(HIGH_ORDER)
_X_LOW, _W_LOW = leggauss(LOW_ORDER)


class QuadratureError(RuntimeError):
    pass


class QuadratureConvergenceError(QuadratureError):
    """Raised when the cell budget runs out before the tolerance is met."""

    def __init__(self, message: str, *, value: complex, error_estimate: float, cells_used: int):
        super().__init__(message)
        self.value = value
        self.error_estimate = error_estimate
        self.cells_used = cells_used


class QuadratureDivergenceError(QuadratureError):
    """Raised when refinement keeps adding mass near a point: the integral diverges."""


@dataclass(frozen=True, slots=True, eq=False)
class QuadRule:
    """A converged cubature rule: complex nodes with real weights."""

    points: np.ndarray
    weights: np.ndarray

    def apply(self, integrand: Integrand) -> complex:
        values = np.asarray(integrand(self.points))
        return complex(math.fsum((self.weights * values.real).tolist())) + 1j * math.fsum(
            (self.weights * values.imag).tolist()
        )

    def __len__(self) -> int:
        return int(self.points.size)


@dataclass(frozen=True, slots=True, kw_only=True)
class QuadResult(MultiformatModelMixin):
    value: complex
    error_estimate: float
    cells_used: int
    rule: QuadRule | None = field(default=None, compare=False)

    @property
    def real(self) -> float:
        return float(self.value.real)

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "value": [self.value.real, self.value.imag],
            "error_estimate": self.error_estimate,
            "cells_used": self.cells_used,
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        re, im = mapping["value"]
        return cls(
            value=complex(re, im),
            error_estimate=float(mapping["error_estimate"]),
            cells_used=int(mapping["cells_used"]),
        )


_POLAR_KINDS = frozenset({RegionKind.DISC, RegionKind.SECTOR, RegionKind.HALF_DISC})


class ChartKind(Enum):
    POLAR = "polar"
    CARTESIAN = "cartesian"


@dataclass(frozen=True, slots=True)
class _Chart:
    kind: ChartKind
    u_range: tuple[float, float]
    v_range: tuple[float, float]
    center: complex = 0j
    # region tested by membership; None when the chart covers the region exactly
    clip: PlanarRegion | None = None

    def to_points(self, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Complex points and area jacobian for chart coordinates."""
        match self.kind:
            case ChartKind.POLAR:
                return self.center + u * np.exp(1j * v), u
            case ChartKind.CARTESIAN:
                return u + 1j * v, np.ones_like(u)
        raise QuadratureError(f"unknown chart kind {self.kind!r}")


@dataclass(order=True, slots=True)
class _Cell:
    bounds: tuple[float, float, float, float]
    value: complex = field(compare=False)
    err_u: float = field(compare=False)
    err_v: float = field(compare=False)
    clipped: bool = field(compare=False, default=False)
    history: tuple[float, ...] = field(compare=False, default=())

    @property
    def error(self) -> float:
        return self.err_u + self.err_v


# --------------------------------------------------------------------------- #
# Charts and initial partitions
# --------------------------------------------------------------------------- #


def _chart_for(region: PlanarRegion) -> _Chart:
    match region.kind:
        case RegionKind.DISC:
            return _Chart(ChartKind.POLAR, (0.0, region.radius), (0.0, 2.0 * math.pi), region.center)
        case RegionKind.SECTOR:
            return _Chart(
                ChartKind.POLAR,
                (region.inner_radius, region.radius),
                (region.theta_min, region.theta_max),
            )
        case RegionKind.HALF_DISC:
            theta = (-math.pi, 0.0) if region.side.value == "lower" else (0.0, math.pi)
            return _Chart(ChartKind.POLAR, (0.0, region.radius), theta)
        case RegionKind.BOX:
            return _Chart(ChartKind.CARTESIAN, region.x_interval, region.y_interval)
        case RegionKind.INTERSECTION:
            polar = [m for m in region.members if m.kind in _POLAR_KINDS]
            if polar:
                base = _chart_for(polar[0])
                return _Chart(base.kind, base.u_range, base.v_range, base.center, clip=region)
            xlo, xhi, ylo, yhi = region.bounding_box()
            return _Chart(ChartKind.CARTESIAN, (xlo, xhi), (ylo, yhi), clip=region)
    raise QuadratureError(f"unsupported region kind {region.kind!r}")


def _graded_breaks(lo: float, hi: float, anchors: Iterable[float], floor: float) -> list[float]:
    """Breakpoints in [lo, hi] halving geometrically toward each anchor."""
    breaks = {lo, hi}
    span = hi - lo
    for a in anchors:
        if not lo - span <= a <= hi + span:
            continue
        if lo < a < hi:
            breaks.add(a)
        for side in (-1.0, 1.0):
            step = span / 2.0
            for _ in range(MAX_GRADING_LEVELS):
                p = a + side * step
                if step < floor:
                    break
                if lo < p < hi:
                    breaks.add(p)
                step /= 2.0
    return sorted(breaks)


def _initial_cells(chart: _Chart, hot_points: Sequence[complex]) -> list[tuple[float, float, float, float]]:
    (u0, u1), (v0, v1) = chart.u_range, chart.v_range
    match chart.kind:
        case ChartKind.POLAR:
            dists = [abs(p - chart.center) for p in hot_points]
            radial = {u0, u1}
            for d in dists:
                if d >= u1:
                    continue
                target = max(d / 2.0, u1 * 2.0**-MAX_GRADING_LEVELS)
                r = u1 / 2.0
                while r > target:
                    if r > u0:
                        radial.add(r)
                    r /= 2.0
                if u0 < d < u1:
                    radial.add(d)
            u_breaks = sorted(radial)
            pieces = max(1, math.ceil((v1 - v0) / (math.pi / 4.0) - 1e-12))
            v_breaks = set(np.linspace(v0, v1, pieces + 1).tolist())
            for p, d in zip(hot_points, dists):
                if 0.0 < d < u1:
                    offset = (math.atan2((p - chart.center).imag, (p - chart.center).real) - v0) % (2.0 * math.pi)
                    angle = v0 + offset
                    if v0 < angle < v1:
                        v_breaks.add(angle)
            v_list = sorted(v_breaks)
        case ChartKind.CARTESIAN:
            floor_u = (u1 - u0) * 2.0**-20
            floor_v = (v1 - v0) * 2.0**-20
            u_breaks = _graded_breaks(u0, u1, [p.real for p in hot_points], floor_u)
            v_list = _graded_breaks(v0, v1, [p.imag for p in hot_points], floor_v)
        case _:
            raise QuadratureError(f"unknown chart kind {chart.kind!r}")
    return [
        (a, b, c, d)
        for a, b in zip(u_breaks[:-1], u_breaks[1:])
        for c, d in zip(v_list[:-1], v_list[1:])
    ]


# --------------------------------------------------------------------------- #
# Cell evaluation
# --------------------------------------------------------------------------- #


def _tensor(
    chart: _Chart,
    bounds: np.ndarray,
    xu: np.ndarray,
    wu: np.ndarray,
    xv: np.ndarray,
    wv: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Points (m, nu, nv) and weights for a tensor rule on each cell."""
    u0, u1, v0, v1 = bounds.T
    hu, hv = (u1 - u0) / 2.0, (v1 - v0) / 2.0
    u = ((u0 + u1) / 2.0)[:, None] + hu[:, None] * xu[None, :]
    v = ((v0 + v1) / 2.0)[:, None] + hv[:, None] * xv[None, :]
    uu = np.broadcast_to(u[:, :, None], (len(bounds), xu.size, xv.size))
    vv = np.broadcast_to(v[:, None, :], (len(bounds), xu.size, xv.size))
    points, jac = chart.to_points(uu, vv)
    weights = (hu * hv)[:, None, None] * wu[None, :, None] * wv[None, None, :] * jac
    return points, weights


def _midpoint_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    x = -1.0 + (2.0 * np.arange(n) + 1.0) / n
    return x, np.full(n, 2.0 / n)


def _evaluate(chart: _Chart, bounds: np.ndarray, integrand: Integrand) -> list[_Cell]:
    rules = [
        _tensor(chart, bounds, _X_HIGH, _W_HIGH, _X_HIGH, _W_HIGH),
        _tensor(chart, bounds, _X_LOW, _W_LOW, _X_HIGH, _W_HIGH),
        _tensor(chart, bounds, _X_HIGH, _W_HIGH, _X_LOW, _W_LOW),
    ]
    flat = np.concatenate([p.reshape(-1) for p, _ in rules])
    values = np.asarray(integrand(flat), dtype=complex)
    if values.shape != flat.shape:
        raise QuadratureError(f"integrand returned shape {values.shape} for {flat.shape} points")
    sums = []
    offset = 0
    for points, weights in rules:
        chunk = values[offset : offset + points.size].reshape(points.shape)
        offset += points.size
        if chart.clip is not None:
            chunk = chunk * chart.clip.contains(points)
        sums.append(np.sum(chunk * weights, axis=(1, 2)))
    high, low_u, low_v = sums
    err_u = np.abs(low_u - high)
    err_v = np.abs(low_v - high)
    clipped = np.zeros(len(bounds), dtype=bool)

    if chart.clip is not None:
        xm, wm = _midpoint_nodes(CLIP_SAMPLES)
        probe, _ = _tensor(chart, bounds, xm, wm, xm, wm)
        inside = chart.clip.contains(probe)
        mixed = inside.any(axis=(1, 2)) & ~inside.all(axis=(1, 2))
        empty = ~inside.any(axis=(1, 2))
        high[empty] = 0.0
        err_u[empty] = 0.0
        err_v[empty] = 0.0
        if mixed.any():
            sub = bounds[mixed]
            fine_pts, fine_w = _tensor(chart, sub, xm, wm, xm, wm)
            xc, wc = _midpoint_nodes(CLIP_SAMPLES // 2)
            coarse_pts, coarse_w = _tensor(chart, sub, xc, wc, xc, wc)
            vals = np.asarray(
                integrand(np.concatenate([fine_pts.reshape(-1), coarse_pts.reshape(-1)])), dtype=complex
            )
            fine = vals[: fine_pts.size].reshape(fine_pts.shape) * chart.clip.contains(fine_pts)
            coarse = vals[fine_pts.size :].reshape(coarse_pts.shape) * chart.clip.contains(coarse_pts)
            fine_sum = np.sum(fine * fine_w, axis=(1, 2))
            coarse_sum = np.sum(coarse * coarse_w, axis=(1, 2))
            half_err = np.abs(fine_sum - coarse_sum) / 2.0
            high[mixed] = fine_sum
            err_u[mixed] = half_err
            err_v[mixed] = half_err
            clipped[mixed] = True

    return [
        _Cell(
            bounds=tuple(float(b) for b in bounds[i]),  # type: ignore[arg-type]
            value=complex(high[i]),
            err_u=float(err_u[i]),
            err_v=float(err_v[i]),
            clipped=bool(clipped[i]),
        )
        for i in range(len(bounds))
    ]


def _children(cell: _Cell) -> list[tuple[float, float, float, float]]:
    u0, u1, v0, v1 = cell.bounds
    um, vm = (u0 + u1) / 2.0, (v0 + v1) / 2.0
    if cell.clipped or (cell.err_u <= 4.0 * cell.err_v and cell.err_v <= 4.0 * cell.err_u):
        return [(u0, um, v0, vm), (u0, um, vm, v1), (um, u1, v0, vm), (um, u1, vm, v1)]
    if cell.err_u > cell.err_v:
        return [(u0, um, v0, v1), (um, u1, v0, v1)]
    return [(u0, u1, v0, vm), (u0, u1, vm, v1)]


def _splittable(cell: _Cell, chart: _Chart) -> bool:
    u0, u1, v0, v1 = cell.bounds
    rel = MIN_REL_EXTENT_CLIPPED if cell.clipped else MIN_REL_EXTENT
    du = chart.u_range[1] - chart.u_range[0]
    dv = chart.v_range[1] - chart.v_range[0]
    return (u1 - u0) > rel * du or (v1 - v0) > rel * dv


def _is_diverging(cell: _Cell) -> bool:
    tail = cell.history[-DIVERGENCE_HISTORY:]
    if len(tail) < DIVERGENCE_HISTORY or tail[0] <= 0.0:
        return False
    return tail[-1] >= 0.5 * tail[0]


def _fsum_complex(cells: Iterable[_Cell]) -> tuple[complex, float]:
    ordered = sorted(cells)
    value = complex(math.fsum(c.value.real for c in ordered), math.fsum(c.value.imag for c in ordered))
    return value, math.fsum(c.error for c in ordered)


def _collect_rule(chart: _Chart, cells: Sequence[_Cell]) -> QuadRule:
    plain = np.array([c.bounds for c in cells if not c.clipped]).reshape(-1, 4)
    cut = np.array([c.bounds for c in cells if c.clipped]).reshape(-1, 4)
    points: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    if len(plain):
        p, w = _tensor(chart, plain, _X_HIGH, _W_HIGH, _X_HIGH, _W_HIGH)
        if chart.clip is not None:
            w = w * chart.clip.contains(p)
        points.append(p.reshape(-1))
        weights.append(w.reshape(-1))
    if len(cut):
        xm, wm = _midpoint_nodes(CLIP_SAMPLES)
        p, w = _tensor(chart, cut, xm, wm, xm, wm)
        w = w * chart.clip.contains(p)  # type: ignore[union-attr]
        points.append(p.reshape(-1))
        weights.append(w.reshape(-1))
    pts = np.concatenate(points)
    wts = np.concatenate(weights)
    keep = wts != 0.0
    return QuadRule(points=pts[keep], weights=wts[keep])


# :: MechanicalOperation | type=adaptive-integration
def integrate(
    region: PlanarRegion,
    integrand: Integrand,
    tol: float = 1e-8,
    *,
    hot_points: Sequence[complex] = (),
    abs_floor: float = ABS_FLOOR,
    max_cells: int = 20_000,
    keep_rule: bool = False,
) -> QuadResult:
    """
    Integrates a vectorized complex integrand over a bounded planar region.

    Args:
        region (PlanarRegion): Bounded integration region.
        integrand (Integrand): Maps an array of complex points to an array of
            values of the same shape.
        tol (float): Relative tolerance in (1e-12, 1e-1).
        hot_points (Sequence[complex]): Near-singular points; the initial
            partition is graded geometrically toward them.
        abs_floor (float): Absolute error accepted when the value is near zero.
        max_cells (int): Cell budget.
        keep_rule (bool): Attach the converged cubature rule to the result.

    Returns:
        QuadResult: Value, error estimate and the number of cells used.

    Raises:
        UnboundedRegionError: If the region is unbounded.
        QuadratureConvergenceError: If the budget is exhausted first.
        QuadratureDivergenceError: If refinement keeps adding mass at a point.
    """
    if not 1e-12 < tol < 1e-1:
        raise QuadratureError(f"tolerance {tol} outside (1e-12, 1e-1)")
    if not region.is_bounded():
        raise UnboundedRegionError(f"cannot integrate over unbounded {region.kind.value}")

    chart = _chart_for(region)
    cells = _evaluate(chart, np.array(_initial_cells(chart, hot_points)), integrand)
    heap: list[tuple[float, int, _Cell]] = []
    frozen: list[_Cell] = []
    seq = 0
    for cell in cells:
        heapq.heappush(heap, (-cell.error, seq, cell))
        seq += 1

    value, error = _fsum_complex(cells)
    count = len(cells)
    splits = 0

    def target() -> float:
        return max(tol * abs(value), abs_floor)

    while error > target():
        if not (math.isfinite(value.real) and math.isfinite(value.imag)):
            raise QuadratureDivergenceError(f"non-finite partial integral over {region.kind.value}")
        if not heap:
            break
        _, _, cell = heapq.heappop(heap)
        if not _splittable(cell, chart):
            frozen.append(cell)
            if cell.error > target():
                break
            continue
        kids = _evaluate(chart, np.array(_children(cell)), integrand)
        kid_value = sum((k.value for k in kids), 0j)
        increment = abs(kid_value - cell.value)
        for kid in kids:
            kid.history = (cell.history + (increment,))[-2 * DIVERGENCE_HISTORY :]
            heapq.heappush(heap, (-kid.error, seq, kid))
            seq += 1
        value += kid_value - cell.value
        error += sum(k.error for k in kids) - cell.error
        count += len(kids) - 1
        splits += 1
        if splits % CHECKPOINT_EVERY == 0:
            value, error = _fsum_complex([c for _, _, c in heap] + frozen)
            logging.debug(
                f"[quadrature] {region.kind.value}: cells={count} value={value:.12g} err={error:.3g}"
            )
        if count > max_cells:
            break

    leaves = [c for _, _, c in heap] + frozen
    value, error = _fsum_complex(leaves)
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise QuadratureDivergenceError(f"non-finite integral over {region.kind.value}")
    if error > max(tol * abs(value), abs_floor):
        if any(_is_diverging(c) for c in leaves):
            raise QuadratureDivergenceError(
                f"integral over {region.kind.value} grows without bound under refinement "
                f"(partial value {value:.6g} after {count} cells)"
            )
        raise QuadratureConvergenceError(
            f"quadrature over {region.kind.value} did not reach tol={tol:g}: "
            f"error estimate {error:.3g} after {count} cells",
            value=value,
            error_estimate=error,
            cells_used=count,
        )
    return QuadResult(
        value=value,
        error_estimate=error,
        cells_used=count,
        rule=_collect_rule(chart, leaves) if keep_rule else None,
    )


def integrate_real(region: PlanarRegion, integrand: Integrand, tol: float = 1e-8, **kwargs: Any) -> tuple[float, float]:
    """Convenience wrapper returning (real part of value, error estimate)."""
    result = integrate(region, integrand, tol, **kwargs)
    return result.real, result.error_estimate
