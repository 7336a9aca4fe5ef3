"""Per-block effective properties of the homogenized coarse model.

All integrals run over the block K (not the oversampled region) and are
normalized by |K| = H^2, using the same Q1 quadrature as global assembly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .cell_problems import CellBasis
from .errors import DomainError
from .field import CoefficientField
from .fem import patch_mass, patch_stiffness
from .grid import CoarsePartition, FineMesh


@dataclass(frozen=True)
class EffectiveTensors:
    """Per-block tensors: indices [block, ...] with continuum indices first.

    gamma[b, i, j]          = (1/|K|) int_K phi_i phi_j        (mass-type, SPD)
    alpha[b, i, j]          = (1/|K|) int_K k grad phi_i . grad phi_j
    alpha_mn[b, i, m, j, n] = (1/|K|) int_K k grad phi_i^m . grad phi_j^n
    alpha_mstar[b, i, j, m] = (1/|K|) int_K k grad phi_j^m . grad phi_i
    alpha_starm[b, i, j, m] = (1/|K|) int_K k grad phi_j . grad phi_i^m
    """

    part: CoarsePartition
    gamma: np.ndarray
    alpha: np.ndarray
    alpha_mn: np.ndarray
    alpha_mstar: np.ndarray
    alpha_starm: np.ndarray

    @property
    def n_continua(self) -> int:
        return self.gamma.shape[1]

    def mass_matrix(self, block: int) -> np.ndarray:
        return self.gamma[block]

    def reaction_matrix(self, block: int) -> np.ndarray:
        """The symmetric matrix entering the scheme-2 stability estimate."""
        return self.alpha[block]

    def a_tensor(self, block: int) -> np.ndarray:
        """Rank-4 tensor A[k, m, l, n] for the splitting optimization."""
        return self.alpha_mn[block]


def compute_effective(part: CoarsePartition, basis: CellBasis,
                      field: CoefficientField, mesh: FineMesh) -> EffectiveTensors:
    N = basis.n_continua
    nB = part.n_blocks
    inv_area = 1.0 / (part.H * part.H)
    gamma = np.empty((nB, N, N))
    alpha = np.empty((nB, N, N))
    alpha_mn = np.empty((nB, N, 2, N, 2))
    alpha_mstar = np.empty((nB, N, N, 2))
    alpha_starm = np.empty((nB, N, N, 2))
    kappa = field.cell_values()
    for b in range(nB):
        cells = part.block_cells(b).ravel()
        S = patch_stiffness(part.nf, part.nf, kappa[cells])
        M = patch_mass(part.nf, part.nf, mesh.h)
        p0 = basis.phi0[b]                      # (N, nn)
        p1 = basis.phi1[b].reshape(N * 2, -1)   # (N*2, nn)
        gamma[b] = inv_area * (p0 @ (M @ p0.T))
        alpha[b] = inv_area * (p0 @ (S @ p0.T))
        alpha_mn[b] = inv_area * (p1 @ (S @ p1.T)).reshape(N, 2, N, 2)
        cross = inv_area * (p0 @ (S @ p1.T)).reshape(N, N, 2)
        # cross[i, j, m] = (1/|K|) int_K k grad phi_i . grad phi_j^m
        alpha_mstar[b] = cross
        alpha_starm[b] = np.transpose(cross, (1, 0, 2))
    return EffectiveTensors(part=part, gamma=gamma, alpha=alpha,
                            alpha_mn=alpha_mn, alpha_mstar=alpha_mstar,
                            alpha_starm=alpha_starm)


def reduce_tensor(a_tensor: np.ndarray) -> np.ndarray:
    """Rank reduction: At[k, l] = max eigenvalue of the 2x2 matrix A^{kl}.

    A^{kl} need not be symmetric for k != l; its symmetric part is used.
    The resulting matrix must be symmetric to 1e-10 (integrand symmetry),
    and is exactly symmetrized on return.
    """
    N = a_tensor.shape[0]
    At = np.empty((N, N))
    for k in range(N):
        for l in range(N):
            P = a_tensor[k, :, l, :]
            At[k, l] = np.linalg.eigvalsh(0.5 * (P + P.T))[-1]
    scale = max(np.abs(At).max(), 1e-300)
    asym = np.abs(At - At.T).max()
    if asym > 1e-10 * scale:
        raise DomainError(f"reduced tensor asymmetry {asym:.3e} exceeds tolerance")
    return 0.5 * (At + At.T)


def load_averages(part: CoarsePartition, basis: CellBasis, mesh: FineMesh,
                  f, t: float) -> np.ndarray:
    """(n_blocks, N) block averages (1/|K|) int_K f(.,t) phi_j."""
    N = basis.n_continua
    inv_area = 1.0 / (part.H * part.H)
    M = patch_mass(part.nf, part.nf, mesh.h)
    coords = mesh.node_coords()
    out = np.empty((part.n_blocks, N))
    for b in range(part.n_blocks):
        nodes = part.block_nodes(b)
        fv = np.asarray(f(coords[nodes, 0], coords[nodes, 1], t), dtype=float)
        out[b] = inv_area * (basis.phi0[b] @ (M @ fv))
    return out


def write_tensor_csv(tensors: EffectiveTensors, path) -> None:
    """One row per (block, tensor, indices) for inspection."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "tensor", "i", "m", "j", "n", "value"])
        N = tensors.n_continua
        for b in range(tensors.part.n_blocks):
            for i in range(N):
                for j in range(N):
                    w.writerow([b, "gamma", i, "", j, "", repr(tensors.gamma[b, i, j])])
                    w.writerow([b, "alpha", i, "", j, "", repr(tensors.alpha[b, i, j])])
                    for m in range(2):
                        w.writerow([b, "alpha_mstar", i, m, j, "",
                                    repr(tensors.alpha_mstar[b, i, j, m])])
                        w.writerow([b, "alpha_starm", i, m, j, "",
                                    repr(tensors.alpha_starm[b, i, j, m])])
                        for n in range(2):
                            w.writerow([b, "alpha_mn", i, m, j, n,
                                        repr(tensors.alpha_mn[b, i, m, j, n])])
