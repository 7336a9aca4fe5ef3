"""High-contrast coefficient fields and per-continuum indicator functions.

Coefficient values are piecewise constant per fine cell, stored as an
(ny, nx) array with row 0 at the bottom.  Indicator masks are binary
per fine cell; they may partition the domain or overlap (mixed continua).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, DomainError
from .grid import CoarsePartition, FineMesh


@dataclass(frozen=True)
class CoefficientField:
    mesh: FineMesh
    values: np.ndarray  # (ny, nx), positive

    def __post_init__(self):
        v = self.values
        if v.shape != (self.mesh.ny, self.mesh.nx):
            raise DomainError(f"field shape {v.shape} does not match mesh "
                              f"({self.mesh.ny}, {self.mesh.nx})")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise DomainError("coefficient field must be positive and finite everywhere")

    @property
    def contrast(self) -> float:
        return float(self.values.max() / self.values.min())

    def cell_values(self) -> np.ndarray:
        """Flat per-cell values, lexicographic (x fastest)."""
        return self.values.ravel()

    def save(self, path) -> None:
        np.savetxt(path, self.values, fmt="%.17g")


@dataclass(frozen=True)
class IndicatorSet:
    masks: np.ndarray  # (N, ny, nx) in {0, 1}

    @property
    def n_continua(self) -> int:
        return self.masks.shape[0]

    def mask_cells(self, i: int) -> np.ndarray:
        """Flat binary mask of continuum i, lexicographic cells."""
        return self.masks[i].ravel()

    def is_partition(self) -> bool:
        return bool(np.all(self.masks.sum(axis=0) == 1))


def load_field(path, mesh: FineMesh) -> CoefficientField:
    try:
        values = np.loadtxt(path, dtype=float, ndmin=2)
    except ValueError as exc:
        raise DomainError(f"could not parse field file {path}: {exc}") from exc
    if values.shape != (mesh.ny, mesh.nx):
        raise DomainError(f"field file {path} has shape {values.shape}, "
                          f"expected ({mesh.ny}, {mesh.nx})")
    return CoefficientField(mesh, values)


def layered_field(mesh: FineMesh, n_layers: int, values) -> CoefficientField:
    """Horizontal stripes cycling through `values`, bottom stripe first."""
    values = np.asarray(values, dtype=float)
    if n_layers < 1:
        raise DomainError(f"need at least one layer, got {n_layers}")
    if values.ndim != 1 or values.size == 0 or np.any(values <= 0):
        raise DomainError("layer values must be a nonempty list of positive reals")
    iy = np.arange(mesh.ny)
    stripe = iy * n_layers // mesh.ny
    rows = values[stripe % values.size]
    grid = np.repeat(rows[:, None], mesh.nx, axis=1)
    return CoefficientField(mesh, grid)


@dataclass(frozen=True)
class Inclusion:
    """Rectangular or circular inclusion in cell-center coordinates."""

    value: float
    shape: str  # "rect" | "disk"
    # rect: (x0, y0, x1, y1); disk: (cx, cy, r)
    params: tuple

    def covers(self, centers: np.ndarray) -> np.ndarray:
        x, y = centers[:, 0], centers[:, 1]
        if self.shape == "rect":
            x0, y0, x1, y1 = self.params
            return (x >= x0) & (x < x1) & (y >= y0) & (y < y1)
        if self.shape == "disk":
            cx, cy, r = self.params
            return (x - cx) ** 2 + (y - cy) ** 2 <= r * r
        raise DomainError(f"unknown inclusion shape {self.shape!r}")


def point_field(mesh: FineMesh, background: float, inclusions) -> CoefficientField:
    """Constant background with high-value inclusions."""
    if background <= 0:
        raise DomainError("background value must be positive")
    centers = mesh.cell_centers()
    vals = np.full(mesh.n_cells, float(background))
    claimed = np.zeros(mesh.n_cells, dtype=bool)
    for inc in inclusions:
        if inc.value <= 0:
            raise DomainError("inclusion value must be positive")
        hit = inc.covers(centers)
        clash = hit & claimed & (vals != inc.value)
        if np.any(clash):
            raise DomainError("overlapping inclusions with different values")
        vals[hit] = inc.value
        claimed |= hit
    return CoefficientField(mesh, vals.reshape(mesh.ny, mesh.nx))


def indicators_from_values(field: CoefficientField, part: CoarsePartition,
                           value_classes, mixing=None) -> IndicatorSet:
    """Build indicator masks from predicates on the coefficient value.

    `value_classes` is a list of callables kappa -> bool (vectorized).
    `mixing`, if given, is a list of index tuples: continuum k is the union
    of the listed base classes (mixed-continuum setups).
    """
    base = np.stack([np.asarray(cls(field.values), dtype=bool)
                     for cls in value_classes])
    if mixing is not None:
        base = np.stack([np.any(base[list(idx)], axis=0) for idx in mixing])
    covered = np.any(base, axis=0)
    if not covered.all():
        raise DegeneracyError("some fine cells match no continuum class")
    masks = base.astype(np.int8)
    ind = IndicatorSet(masks)
    flat = masks.reshape(masks.shape[0], -1)
    for b in range(part.n_blocks):
        cells = part.block_cells(b).ravel()
        counts = flat[:, cells].sum(axis=1)
        empty = np.nonzero(counts == 0)[0]
        if empty.size:
            bx, by = part.block_xy(b)
            raise DegeneracyError(
                f"continuum {empty[0]} has zero measure in coarse block "
                f"{b} (bx={bx}, by={by})")
    return ind
