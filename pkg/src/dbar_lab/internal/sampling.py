from __future__ import annotations

import numpy as np
from scipy import ndimage

from dbar_lab.model.fields import FormField01, ScalarField
from dbar_lab.model.grid import GridDomain, Support
from dbar_lab.model.regions import EmptyMaskError


def interior_mask(support: Support, layers: int = 1) -> np.ndarray:
    """Support nodes at least `layers` lattice steps away from its complement."""
    if layers <= 0:
        return support.mask.copy()
    structure = ndimage.generate_binary_structure(4, 1)
    return ndimage.binary_erosion(support.mask, structure=structure, iterations=layers)


def _smooth_noise(shape: tuple[int, ...], rng: np.random.Generator, width: int) -> np.ndarray:
    re = ndimage.uniform_filter(rng.standard_normal(shape), size=width, mode="constant")
    im = ndimage.uniform_filter(rng.standard_normal(shape), size=width, mode="constant")
    return re + 1j * im


def random_interior_forms(
    support: Support,
    count: int,
    rng: np.random.Generator,
    *,
    layers: int = 1,
    width: int = 3,
) -> list[FormField01]:
    """
    Seeded random (0,1)-forms, box-filtered and cut off to the eroded support.

    Raises:
        EmptyMaskError: If erosion leaves no node.
    """
    inside = interior_mask(support, layers)
    if not inside.any():
        raise EmptyMaskError(f"support {support.label!r} has no node {layers} steps inside")
    grid = support.grid
    forms = []
    for _ in range(count):
        f1 = _smooth_noise(grid.shape, rng, width) * inside
        f2 = _smooth_noise(grid.shape, rng, width) * inside
        forms.append(FormField01(grid, f1, f2))
    return forms


def random_form(grid: GridDomain, rng: np.random.Generator, mask: np.ndarray | None = None) -> FormField01:
    """Unsmoothed complex noise on `mask` (the grid mask by default)."""
    mask = grid.mask if mask is None else mask
    shape = grid.shape
    f1 = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * mask
    f2 = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * mask
    return FormField01(grid, f1, f2)


def random_scalar(grid: GridDomain, rng: np.random.Generator, mask: np.ndarray | None = None) -> ScalarField:
    mask = grid.mask if mask is None else mask
    values = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * mask
    return ScalarField(grid, values)
