"""Structured fine/coarse meshes on the unit square and oversampled regions.

The fine mesh has ``nx`` square cells per axis (h = 1/nx); the coarse
partition has ``nH`` square blocks per axis (H = 1/nH), each covering an
``nf x nf`` patch of fine cells with nf = nx/nH.  Cells and nodes are
indexed lexicographically, x fastest, row 0 at the bottom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class FineMesh:
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx != self.ny:
            raise ConfigurationError(f"fine mesh must be square, got {self.nx}x{self.ny}")
        if self.nx < 2:
            raise ConfigurationError(f"need nx >= 2, got {self.nx}")

    @property
    def h(self) -> float:
        return 1.0 / self.nx

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    def node_coords(self) -> np.ndarray:
        """(n_nodes, 2) coordinates, lexicographic with x fastest."""
        x = np.linspace(0.0, 1.0, self.nx + 1)
        y = np.linspace(0.0, 1.0, self.ny + 1)
        X, Y = np.meshgrid(x, y)
        return np.column_stack([X.ravel(), Y.ravel()])

    def cell_centers(self) -> np.ndarray:
        x = (np.arange(self.nx) + 0.5) * self.h
        y = (np.arange(self.ny) + 0.5) * self.h
        X, Y = np.meshgrid(x, y)
        return np.column_stack([X.ravel(), Y.ravel()])

    def boundary_nodes(self) -> np.ndarray:
        idx = np.arange(self.n_nodes).reshape(self.ny + 1, self.nx + 1)
        return np.unique(np.concatenate([idx[0], idx[-1], idx[:, 0], idx[:, -1]]))


@dataclass(frozen=True)
class CoarsePartition:
    nH: int
    nf: int  # fine cells per block per axis

    @property
    def H(self) -> float:
        return 1.0 / self.nH

    @property
    def n_blocks(self) -> int:
        return self.nH * self.nH

    @property
    def nx(self) -> int:
        return self.nH * self.nf

    def block_xy(self, block: int) -> tuple[int, int]:
        return block % self.nH, block // self.nH

    def block_id(self, bx: int, by: int) -> int:
        return by * self.nH + bx

    def block_cells(self, block: int) -> np.ndarray:
        """Global fine-cell indices of a block, as an (nf, nf) array (row-major)."""
        bx, by = self.block_xy(block)
        ix = bx * self.nf + np.arange(self.nf)
        iy = by * self.nf + np.arange(self.nf)
        return iy[:, None] * self.nx + ix[None, :]

    def block_nodes(self, block: int) -> np.ndarray:
        """Global fine-node indices of a block, ((nf+1)*(nf+1),) lexicographic."""
        bx, by = self.block_xy(block)
        ix = bx * self.nf + np.arange(self.nf + 1)
        iy = by * self.nf + np.arange(self.nf + 1)
        return (iy[:, None] * (self.nx + 1) + ix[None, :]).ravel()

    def cell_block(self) -> np.ndarray:
        """Per-fine-cell owning block id, shape (ny*nx,)."""
        ix = np.arange(self.nx) // self.nf
        bx, by = np.meshgrid(ix, ix)
        return (by * self.nH + bx).ravel()

    def interior_blocks(self) -> np.ndarray:
        bx = np.arange(self.nH)
        BX, BY = np.meshgrid(bx, bx)
        mask = (BX > 0) & (BX < self.nH - 1) & (BY > 0) & (BY < self.nH - 1)
        return (BY * self.nH + BX)[mask].ravel()


@dataclass(frozen=True)
class OversampleRegion:
    """Axis-aligned union of coarse blocks around a center block, clipped to the domain."""

    part: CoarsePartition
    center: int
    layers: int
    bx0: int
    bx1: int  # inclusive
    by0: int
    by1: int  # inclusive
    members: np.ndarray = field(repr=False)  # coarse block ids, row-major

    @property
    def n_blocks_x(self) -> int:
        return self.bx1 - self.bx0 + 1

    @property
    def n_blocks_y(self) -> int:
        return self.by1 - self.by0 + 1

    @property
    def ncx(self) -> int:
        """Fine cells along x."""
        return self.n_blocks_x * self.part.nf

    @property
    def ncy(self) -> int:
        return self.n_blocks_y * self.part.nf

    @property
    def n_nodes(self) -> int:
        return (self.ncx + 1) * (self.ncy + 1)

    def global_nodes(self) -> np.ndarray:
        """Global fine-node index for each local node, lexicographic local order."""
        nf, nx = self.part.nf, self.part.nx
        ix = self.bx0 * nf + np.arange(self.ncx + 1)
        iy = self.by0 * nf + np.arange(self.ncy + 1)
        return (iy[:, None] * (nx + 1) + ix[None, :]).ravel()

    def global_cells(self) -> np.ndarray:
        """Global fine-cell index for each local cell, shape (ncy, ncx)."""
        nf, nx = self.part.nf, self.part.nx
        ix = self.bx0 * nf + np.arange(self.ncx)
        iy = self.by0 * nf + np.arange(self.ncy)
        return iy[:, None] * nx + ix[None, :]

    def local_block_cells(self, block: int) -> np.ndarray:
        """Local cell indices of a member block, shape (nf, nf)."""
        nf = self.part.nf
        bx, by = self.part.block_xy(block)
        ix = (bx - self.bx0) * nf + np.arange(nf)
        iy = (by - self.by0) * nf + np.arange(nf)
        return iy[:, None] * self.ncx + ix[None, :]

    def local_block_nodes(self, block: int) -> np.ndarray:
        nf = self.part.nf
        bx, by = self.part.block_xy(block)
        ix = (bx - self.bx0) * nf + np.arange(nf + 1)
        iy = (by - self.by0) * nf + np.arange(nf + 1)
        return (iy[:, None] * (self.ncx + 1) + ix[None, :]).ravel()

    def domain_boundary_nodes(self) -> np.ndarray:
        """Local node indices lying on the physical boundary of the unit square."""
        sides = []
        idx = np.arange(self.n_nodes).reshape(self.ncy + 1, self.ncx + 1)
        if self.bx0 == 0:
            sides.append(idx[:, 0])
        if self.bx1 == self.part.nH - 1:
            sides.append(idx[:, -1])
        if self.by0 == 0:
            sides.append(idx[0])
        if self.by1 == self.part.nH - 1:
            sides.append(idx[-1])
        if not sides:
            return np.array([], dtype=int)
        return np.unique(np.concatenate(sides))

    def region_boundary_nodes(self) -> np.ndarray:
        """Local node indices on the boundary of the oversampled region itself."""
        idx = np.arange(self.n_nodes).reshape(self.ncy + 1, self.ncx + 1)
        return np.unique(np.concatenate([idx[0], idx[-1], idx[:, 0], idx[:, -1]]))


def build_meshes(nx: int, nH: int) -> tuple[FineMesh, CoarsePartition]:
    if nx < 2 or nH < 2:
        raise ConfigurationError(f"need nx >= 2 and nH >= 2, got nx={nx}, nH={nH}")
    if nx % nH != 0:
        raise ConfigurationError(f"fine resolution {nx} not divisible by coarse count {nH}")
    return FineMesh(nx, nx), CoarsePartition(nH=nH, nf=nx // nH)


def default_layers(H: float) -> int:
    """Default oversampling width, ceil(-2 ln H)."""
    return math.ceil(-2.0 * math.log(H))


def oversample(part: CoarsePartition, block: int, l: int) -> OversampleRegion:
    if not 0 <= block < part.n_blocks:
        raise ConfigurationError(f"invalid block id {block}")
    if l < 0:
        raise ConfigurationError(f"layer count must be nonnegative, got {l}")
    bx, by = part.block_xy(block)
    bx0, bx1 = max(bx - l, 0), min(bx + l, part.nH - 1)
    by0, by1 = max(by - l, 0), min(by + l, part.nH - 1)
    mx = np.arange(bx0, bx1 + 1)
    my = np.arange(by0, by1 + 1)
    members = (my[:, None] * part.nH + mx[None, :]).ravel()
    return OversampleRegion(part=part, center=block, layers=l,
                            bx0=bx0, bx1=bx1, by0=by0, by1=by1, members=members)
