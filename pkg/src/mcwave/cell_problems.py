"""Constrained energy-minimization cell problems on oversampled regions.

Each coarse block gets two families of multiscale basis functions, obtained
by minimizing the local energy int kappa |grad phi|^2 over the oversampled
region subject to per-block moment constraints:

  constant family:  int_{K^p} phi_i psi_j = delta_ij int_{K^p} psi_j
  linear family:    int_{K^p} phi_i^m psi_j = delta_ij int_{K^p} (x_m - xt_m) psi_j

with xt_m the psi-weighted centroid of the center block, which makes the
first-moment constraint on the center block hold identically.  Constraints
are enforced with Lagrange multipliers in one symmetric indefinite
saddle-point solve per region; the factorization is shared by both families.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, DegeneracyError, SingularSystemError
from .field import CoefficientField, IndicatorSet
from .fem import assemble_stiffness
from .grid import CoarsePartition, FineMesh, OversampleRegion, oversample

BC_MODES = ("natural", "dirichlet")


@dataclass(frozen=True)
class CellBasis:
    """Multiscale basis restricted to each coarse block's fine nodes.

    phi0[b, i]     : constant-type basis of continuum i on block b, ((nf+1)^2,)
    phi1[b, i, m]  : linear-type basis for direction m
    xtilde[b, i, m]: centroid shifts used in the linear constraints
    """

    part: CoarsePartition
    bc: str
    layers: int
    phi0: np.ndarray   # (n_blocks, N, nn)
    phi1: np.ndarray   # (n_blocks, N, 2, nn)
    xtilde: np.ndarray  # (n_blocks, N, 2)

    @property
    def n_continua(self) -> int:
        return self.phi0.shape[1]


def centroid_shift(region: OversampleRegion, indicators: IndicatorSet,
                   j: int, m: int, mesh: FineMesh) -> float:
    """psi-weighted centroid coordinate of continuum j over the center block."""
    cells = region.part.block_cells(region.center).ravel()
    mask = indicators.mask_cells(j)[cells].astype(bool)
    if not mask.any():
        raise DegeneracyError(f"continuum {j} has zero measure on center block")
    centers = mesh.cell_centers()[cells][mask]
    return float(centers[:, m].mean())


def _constraint_rows(region: OversampleRegion, indicators: IndicatorSet,
                     mesh: FineMesh):
    """Sparse constraint matrix B (one row per (block p, continuum j)) and
    per-row masked cell data used for right-hand sides.

    Row functional: phi -> int_{K^p} phi psi_j, exact for Q1 phi and
    cell-wise constant psi: (h^2/4) * sum of corner values per masked cell.
    """
    from .fem import patch_cell_nodes

    h = mesh.h
    N = indicators.n_continua
    local_nodes = patch_cell_nodes(region.ncx, region.ncy)
    global_cells = region.global_cells().ravel()
    centers = mesh.cell_centers()

    rows, cols, data = [], [], []
    areas = np.zeros(len(region.members) * N)
    moments = np.zeros((len(region.members) * N, 2))
    row_keys = []
    r = 0
    for p in region.members:
        local_cells = region.local_block_cells(p).ravel()
        for j in range(N):
            mask = indicators.mask_cells(j)[global_cells[local_cells]].astype(bool)
            cells_r = local_cells[mask]
            nodes_r = local_nodes[cells_r]
            rows.append(np.full(nodes_r.size, r))
            cols.append(nodes_r.ravel())
            data.append(np.full(nodes_r.size, h * h / 4.0))
            areas[r] = h * h * cells_r.size
            # int_{K^p} x_m psi_j, exact for cell-wise constant psi
            cc = centers[global_cells[cells_r]]
            moments[r] = h * h * cc.sum(axis=0) if cells_r.size else 0.0
            row_keys.append((p, j))
            r += 1
    B = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(r, region.n_nodes)).tocsr()
    return B, areas, moments, row_keys


class RegionCellSolver:
    """Shared saddle-point factorization for both cell problems on one region."""

    def __init__(self, mesh: FineMesh, field: CoefficientField,
                 indicators: IndicatorSet, region: OversampleRegion,
                 bc: str = "natural"):
        if bc not in BC_MODES:
            raise ConfigurationError(f"unknown cell-problem BC mode {bc!r}")
        self.mesh = mesh
        self.region = region
        self.N = indicators.n_continua
        self.bc = bc

        A = assemble_stiffness(mesh, field, region)
        self.B_full, self.areas, self.moments, self.row_keys = \
            _constraint_rows(region, indicators, mesh)
        if np.any(self.areas <= 0):
            p, j = self.row_keys[int(np.argmin(self.areas))]
            raise DegeneracyError(f"continuum {j} empty in member block {p}")

        if bc == "dirichlet":
            fixed = region.region_boundary_nodes()
        else:
            # Free boundary: the moment constraints pin the constant nullspace,
            # and the homogeneous Dirichlet condition of the global problem is
            # enforced later by eliminating boundary coarse nodes.
            fixed = np.empty(0, dtype=np.intp)
        self.keep = np.setdiff1d(np.arange(region.n_nodes), fixed)
        Ak = A[self.keep][:, self.keep]
        Bk = self.B_full.tocsr()[:, self.keep]

        # Constraint rank check before factorization.
        G = (Bk @ Bk.T).toarray()
        ev = np.linalg.eigvalsh(G)
        if ev[0] <= 1e-12 * max(ev[-1], 1e-300):
            raise DegeneracyError("constraint rows are rank deficient")

        n_con = Bk.shape[0]
        kkt = sp.bmat([[Ak, Bk.T], [Bk, None]], format="csc")
        try:
            self._lu = spla.splu(kkt)
        except RuntimeError as exc:
            raise SingularSystemError(f"saddle-point factorization failed: {exc}") from exc
        self._Bk = Bk
        self._n_keep = self.keep.size
        self._n_con = n_con

        self.xtilde = np.array(
            [[centroid_shift(region, indicators, j, m, mesh) for m in range(2)]
             for j in range(self.N)])

    def _solve(self, g: np.ndarray) -> np.ndarray:
        """Solve for one basis function given constraint targets g."""
        rhs = np.zeros(self._n_keep + self._n_con)
        rhs[self._n_keep:] = g
        sol = self._lu.solve(rhs)
        phi_k = sol[:self._n_keep]
        res = np.linalg.norm(self._Bk @ phi_k - g)
        tol = 1e-6 * max(np.linalg.norm(g), self.region.part.H ** 2)
        if not np.isfinite(res) or res > tol:
            raise SingularSystemError(f"constraint residual {res:.3e} exceeds {tol:.3e}")
        phi = np.zeros(self.region.n_nodes)
        phi[self.keep] = phi_k
        return phi

    def solve_constant(self) -> np.ndarray:
        """(N, n_region_nodes) constant-type basis on the region."""
        out = np.empty((self.N, self.region.n_nodes))
        for i in range(self.N):
            g = np.array([self.areas[r] if j == i else 0.0
                          for r, (_, j) in enumerate(self.row_keys)])
            out[i] = self._solve(g)
        return out

    def solve_linear(self) -> np.ndarray:
        """(N, 2, n_region_nodes) linear-type basis on the region."""
        out = np.empty((self.N, 2, self.region.n_nodes))
        for i in range(self.N):
            for m in range(2):
                g = np.array(
                    [self.moments[r, m] - self.xtilde[i, m] * self.areas[r]
                     if j == i else 0.0
                     for r, (_, j) in enumerate(self.row_keys)])
                out[i, m] = self._solve(g)
        return out


def solve_cell_constant(mesh, field, indicators, region, bc="natural") -> np.ndarray:
    return RegionCellSolver(mesh, field, indicators, region, bc).solve_constant()


def solve_cell_linear(mesh, field, indicators, region, bc="natural") -> np.ndarray:
    return RegionCellSolver(mesh, field, indicators, region, bc).solve_linear()


def _solve_block(args):
    mesh, part, field, indicators, block, layers, bc = args
    region = oversample(part, block, layers)
    solver = RegionCellSolver(mesh, field, indicators, region, bc)
    phi0 = solver.solve_constant()
    phi1 = solver.solve_linear()
    local = region.local_block_nodes(block).ravel()
    return phi0[:, local], phi1[:, :, local], solver.xtilde


def solve_all_cell_problems(mesh: FineMesh, part: CoarsePartition,
                            field: CoefficientField, indicators: IndicatorSet,
                            layers: int, bc: str = "natural",
                            threads: int = 1) -> CellBasis:
    """Solve both cell problems on every coarse block; returns restrictions to blocks."""
    N = indicators.n_continua
    nn = (part.nf + 1) ** 2
    phi0 = np.empty((part.n_blocks, N, nn))
    phi1 = np.empty((part.n_blocks, N, 2, nn))
    xtilde = np.empty((part.n_blocks, N, 2))
    jobs = [(mesh, part, field, indicators, b, layers, bc)
            for b in range(part.n_blocks)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_solve_block, jobs))
    else:
        results = [_solve_block(j) for j in jobs]
    for b, (p0, p1, xt) in enumerate(results):
        phi0[b], phi1[b], xtilde[b] = p0, p1, xt
    return CellBasis(part=part, bc=bc, layers=layers,
                     phi0=phi0, phi1=phi1, xtilde=xtilde)


def basis_cache_key(field: CoefficientField, nH: int, layers: int, bc: str,
                    indicators: IndicatorSet) -> str:
    digest = hashlib.sha256()
    digest.update(field.values.tobytes())
    digest.update(indicators.masks.tobytes())
    digest.update(f"{nH}:{layers}:{bc}".encode())
    return digest.hexdigest()[:16]


def save_basis(basis: CellBasis, path) -> None:
    np.savez_compressed(path, nH=basis.part.nH, nf=basis.part.nf,
                        layers=basis.layers, bc=basis.bc,
                        phi0=basis.phi0, phi1=basis.phi1, xtilde=basis.xtilde)


def load_basis(path) -> CellBasis:
    with np.load(path, allow_pickle=False) as z:
        part = CoarsePartition(nH=int(z["nH"]), nf=int(z["nf"]))
        return CellBasis(part=part, bc=str(z["bc"]), layers=int(z["layers"]),
                         phi0=z["phi0"], phi1=z["phi1"], xtilde=z["xtilde"])


def cached_cell_problems(cache_dir, mesh, part, field, indicators, layers,
                         bc="natural", threads: int = 1) -> CellBasis:
    """Solve cell problems with an on-disk cache keyed by field/grid/BC."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = basis_cache_key(field, part.nH, layers, bc, indicators)
    path = cache_dir / f"cellbasis_{key}.npz"
    if path.exists():
        return load_basis(path)
    basis = solve_all_cell_problems(mesh, part, field, indicators, layers,
                                    bc=bc, threads=threads)
    save_basis(basis, path)
    return basis
