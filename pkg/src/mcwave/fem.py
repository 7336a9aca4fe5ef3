"""Fine-grid Q1 finite element machinery on structured square patches.

Element matrices are tensor products of 1D linear-element matrices, exact
for piecewise-constant coefficients.  Local node order within a cell is
lexicographic: (0,0), (1,0), (0,1), (1,1).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystemError
from .field import CoefficientField
from .grid import FineMesh, OversampleRegion

# 1D linear element matrices on [0, h]: stiffness (1/h)*K1, mass (h/6)*M1.
_K1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
_M1 = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0

# Q1 element matrices on an h x h square (lexicographic local order).
# Stiffness is h-independent; mass scales with h^2.
ELEM_STIFF = np.kron(_K1, _M1) + np.kron(_M1, _K1)
ELEM_MASS = np.kron(_M1, _M1)


def patch_cell_nodes(ncx: int, ncy: int) -> np.ndarray:
    """(n_cells, 4) node indices per cell on an ncx x ncy patch."""
    ix = np.arange(ncx)
    iy = np.arange(ncy)
    n00 = (iy[:, None] * (ncx + 1) + ix[None, :]).ravel()
    return np.column_stack([n00, n00 + 1, n00 + ncx + 1, n00 + ncx + 2])


def _assemble(ncx: int, ncy: int, elem: np.ndarray, scale: np.ndarray) -> sp.csr_matrix:
    nodes = patch_cell_nodes(ncx, ncy)
    n = (ncx + 1) * (ncy + 1)
    rows = np.repeat(nodes, 4, axis=1).ravel()
    cols = np.tile(nodes, (1, 4)).ravel()
    data = (scale[:, None] * elem.ravel()[None, :]).ravel()
    return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def patch_stiffness(ncx: int, ncy: int, kappa_cells: np.ndarray) -> sp.csr_matrix:
    """Q1 stiffness with per-cell coefficient on a patch of square cells."""
    return _assemble(ncx, ncy, ELEM_STIFF, np.asarray(kappa_cells, dtype=float))


def patch_mass(ncx: int, ncy: int, h: float) -> sp.csr_matrix:
    scale = np.full(ncx * ncy, h * h)
    return _assemble(ncx, ncy, ELEM_MASS, scale)


def assemble_stiffness(mesh: FineMesh, field: CoefficientField | None,
                       region: OversampleRegion | None = None) -> sp.csr_matrix:
    """Stiffness on the full mesh or an oversampled region (local node order).

    `field=None` assembles with unit coefficient.
    """
    if region is None:
        kappa = np.ones(mesh.n_cells) if field is None else field.cell_values()
        return patch_stiffness(mesh.nx, mesh.ny, kappa)
    cells = region.global_cells().ravel()
    kappa = np.ones(cells.size) if field is None else field.cell_values()[cells]
    return patch_stiffness(region.ncx, region.ncy, kappa)


def assemble_mass(mesh: FineMesh, region: OversampleRegion | None = None) -> sp.csr_matrix:
    if region is None:
        return patch_mass(mesh.nx, mesh.ny, mesh.h)
    return patch_mass(region.ncx, region.ncy, 1.0 / region.part.nx)


def restrict(A: sp.spmatrix, keep: np.ndarray) -> sp.csr_matrix:
    """Eliminate all DOFs not in `keep` (zero-Dirichlet restriction)."""
    A = A.tocsr()
    return A[keep][:, keep]


class SpdFactor:
    """Sparse factorization of an SPD matrix, reused across many solves."""

    def __init__(self, A: sp.spmatrix):
        self._A = A.tocsc()
        try:
            self._lu = spla.splu(self._A)
        except RuntimeError as exc:
            raise SingularSystemError(f"factorization failed: {exc}") from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("solve produced non-finite values")
        return x


def solve_spd(A: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    """Direct solve with a residual check ||Ax - b|| <= 1e-10 ||b||."""
    x = SpdFactor(A).solve(b)
    nb = np.linalg.norm(b)
    if nb > 0:
        res = np.linalg.norm(A @ x - b) / nb
        if res > 1e-10:
            raise SingularSystemError(f"solve residual {res:.3e} exceeds 1e-10")
    return x


def fine_wave_reference(mesh: FineMesh, field: CoefficientField, f, u0, v0,
                        tau: float, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Three-layer implicit reference solver with zero Dirichlet boundary.

        M (u^{n+1} - 2u^n + u^{n-1})/tau^2 + (K/2)(u^{n+1} + u^{n-1}) = F^n

    `f` is a callable f(x, y, t) (vectorized over nodes) or None.
    Startup: u^0 = u0, u^1 = u0 + tau v0 + (tau^2/2) M^{-1}(F^0 - K u0).
    Returns (times, series) with series of shape (n_steps+1, n_nodes),
    boundary rows kept at zero.
    """
    K = assemble_stiffness(mesh, field)
    M = assemble_mass(mesh)
    coords = mesh.node_coords()
    boundary = mesh.boundary_nodes()
    keep = np.setdiff1d(np.arange(mesh.n_nodes), boundary)
    Ki = restrict(K, keep)
    Mi = restrict(M, keep)

    n_steps = int(round(T / tau))
    times = np.arange(n_steps + 1) * tau

    def load(t: float) -> np.ndarray:
        if f is None:
            return np.zeros(keep.size)
        fv = np.asarray(f(coords[:, 0], coords[:, 1], t), dtype=float)
        return (M @ fv)[keep]

    series = np.zeros((n_steps + 1, mesh.n_nodes))
    u_prev = np.zeros(keep.size) if u0 is None else np.asarray(u0, dtype=float)[keep]
    v_init = np.zeros(keep.size) if v0 is None else np.asarray(v0, dtype=float)[keep]
    series[0, keep] = u_prev
    if n_steps == 0:
        return times, series

    mass_lu = SpdFactor(Mi)
    u_cur = u_prev + tau * v_init + 0.5 * tau * tau * mass_lu.solve(load(0.0) - Ki @ u_prev)
    series[1, keep] = u_cur

    lhs = SpdFactor((Mi / tau**2 + 0.5 * Ki).tocsc())
    for n in range(1, n_steps):
        rhs = load(times[n]) + Mi @ (2.0 * u_cur - u_prev) / tau**2 - 0.5 * Ki @ u_prev
        u_next = lhs.solve(rhs)
        series[n + 1, keep] = u_next
        u_prev, u_cur = u_cur, u_next
    return times, series


def fine_discrete_energy(u_n, u_np1, M: sp.spmatrix, K: sp.spmatrix, tau: float) -> float:
    """Conserved quantity of the implicit fine scheme (single-space case)."""
    d = u_np1 - u_n
    return float((2.0 / tau**2) * d @ (M @ d) + u_np1 @ (K @ u_np1) + u_n @ (K @ u_n))
