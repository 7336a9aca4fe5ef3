"""Dense reference implementations used to cross-check the sparse solvers.

Everything here is deliberately slow and simple: dense numpy linear algebra,
explicit loops, and independent quadrature, so that agreement with the
package's sparse/vectorized code is meaningful.
"""

from __future__ import annotations

import numpy as np

# 1D linear element matrices on [0, h] (mass needs * h, stiffness * 1/h).
_M1 = np.array([[1 / 3.0, 1 / 6.0], [1 / 6.0, 1 / 3.0]])
_K1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
# G[a, b] = int_0^1 xi_a' xi_b  (h-independent).
_G = np.array([[-0.5, -0.5], [0.5, 0.5]])


def q1_cell_matrices(h: float):
    """Dense Q1 element mass/stiffness on an h x h cell, lexicographic order."""
    mass = h * h * np.kron(_M1, _M1)
    stiff = np.kron(_M1, _K1) + np.kron(_K1, _M1)
    return mass, stiff


def dense_patch_matrices(ncx: int, ncy: int, h: float, kappa_cells):
    """Densely assembled mass and kappa-weighted stiffness on a patch."""
    kappa_cells = np.asarray(kappa_cells, dtype=float).ravel()
    n = (ncx + 1) * (ncy + 1)
    mass_e, stiff_e = q1_cell_matrices(h)
    M = np.zeros((n, n))
    K = np.zeros((n, n))
    for cy in range(ncy):
        for cx in range(ncx):
            base = cy * (ncx + 1) + cx
            nodes = [base, base + 1, base + ncx + 1, base + ncx + 2]
            k = kappa_cells[cy * ncx + cx]
            for a in range(4):
                for b in range(4):
                    M[nodes[a], nodes[b]] += mass_e[a, b]
                    K[nodes[a], nodes[b]] += k * stiff_e[a, b]
    return M, K


def dense_cell_problem(mesh, field, indicators, region, kind: str,
                       bc: str = "natural") -> np.ndarray:
    """Constrained energy minimizers on a region via one dense KKT solve.

    kind='constant' returns (N, nn); kind='linear' returns (N, 2, nn).
    The constraints fix psi_j-weighted block averages: the j-th constant
    basis has average delta_ij * |K^p cap psi_j| on every member block, the
    (j, m)-th linear basis has average equal to the centered first moment.
    """
    part = region.part
    h = mesh.h
    N = indicators.n_continua
    nn = region.n_nodes
    kappa = field.cell_values()[region.global_cells().ravel()]
    _, K = dense_patch_matrices(region.ncx, region.ncy, h, kappa)

    centers = mesh.cell_centers()
    glob = region.global_cells().ravel()

    # Constraint rows: int_{K^p} v psi_j = (h^2/4) sum of corner values over
    # masked cells (exact for bilinear v and cell-wise constant psi).
    rows, areas, moments, keys = [], [], [], []
    for p in region.members:
        local = region.local_block_cells(p).ravel()
        for j in range(N):
            mask = indicators.mask_cells(j)[glob[local]].astype(bool)
            row = np.zeros(nn)
            area = 0.0
            mom = np.zeros(2)
            for lc in local[mask]:
                cy, cx = divmod(int(lc), region.ncx)
                base = cy * (region.ncx + 1) + cx
                for nd in (base, base + 1, base + region.ncx + 1,
                           base + region.ncx + 2):
                    row[nd] += h * h / 4.0
                area += h * h
                mom += h * h * centers[glob[lc]]
            rows.append(row)
            areas.append(area)
            moments.append(mom)
            keys.append((p, j))
    B = np.array(rows)
    areas = np.array(areas)
    moments = np.array(moments)

    if bc == "dirichlet":
        keep = np.setdiff1d(np.arange(nn), region.region_boundary_nodes())
    else:
        keep = np.arange(nn)
    Ak = K[np.ix_(keep, keep)]
    Bk = B[:, keep]
    nc = B.shape[0]
    kkt = np.block([[Ak, Bk.T], [Bk, np.zeros((nc, nc))]])

    # psi-weighted centroids over the center block, for moment centering.
    cells_c = part.block_cells(region.center).ravel()
    xt = np.zeros((N, 2))
    for j in range(N):
        mask = indicators.mask_cells(j)[cells_c].astype(bool)
        xt[j] = centers[cells_c][mask].mean(axis=0)

    def solve(g):
        sol = np.linalg.solve(kkt, np.concatenate([np.zeros(keep.size), g]))
        phi = np.zeros(nn)
        phi[keep] = sol[:keep.size]
        return phi

    if kind == "constant":
        out = np.empty((N, nn))
        for i in range(N):
            g = np.array([areas[r] if j == i else 0.0
                          for r, (_, j) in enumerate(keys)])
            out[i] = solve(g)
        return out
    out = np.empty((N, 2, nn))
    for i in range(N):
        for m in range(2):
            g = np.array([moments[r, m] - xt[i, m] * areas[r] if j == i else 0.0
                          for r, (_, j) in enumerate(keys)])
            out[i, m] = solve(g)
    return out


def gauss_block_integrals(H: float, n_gauss: int = 3):
    """Q1 hat integrals on an H x H block by tensorized Gauss quadrature.

    Returns (emass, S, T) with the same index conventions as the coarse
    assembly: emass[c,d] = int chi_c chi_d, S[m,n,c,d] = int d_m chi_c
    d_n chi_d, T[m,c,d] = int (d_m chi_c) chi_d; corners lexicographic.
    """
    pts, wts = np.polynomial.legendre.leggauss(n_gauss)
    pts = 0.5 * (pts + 1.0)          # map to [0, 1]
    wts = 0.5 * wts

    def chi(c, x, y):
        cx, cy = c % 2, c // 2
        fx = x if cx else 1.0 - x
        fy = y if cy else 1.0 - y
        return fx * fy

    def dchi(c, m, x, y):
        cx, cy = c % 2, c // 2
        if m == 0:
            return (1.0 if cx else -1.0) * (y if cy else 1.0 - y) / H
        return (x if cx else 1.0 - x) * (1.0 if cy else -1.0) / H

    emass = np.zeros((4, 4))
    S = np.zeros((2, 2, 4, 4))
    T = np.zeros((2, 4, 4))
    for gx, wx in zip(pts, wts):
        for gy, wy in zip(pts, wts):
            w = H * H * wx * wy     # physical area element
            for c in range(4):
                for d in range(4):
                    emass[c, d] += w * chi(c, gx, gy) * chi(d, gx, gy)
                    for m in range(2):
                        T[m, c, d] += w * dchi(c, m, gx, gy) * chi(d, gx, gy)
                        for n in range(2):
                            S[m, n, c, d] += (w * dchi(c, m, gx, gy)
                                              * dchi(d, n, gx, gy))
    return emass, S, T


def dense_block_forms(tensors, part, group1, group2):
    """Dense quadrature assembly of the coarse M, A, C, B matrices."""
    group1 = np.asarray(group1, dtype=int)
    group2 = np.asarray(group2, dtype=int)
    N = tensors.n_continua
    order = np.concatenate([group1, group2])
    k1 = group1.size
    nH = part.nH
    n = nH + 1
    ipos = np.full(n * n, -1, dtype=int)
    k = 0
    for by in range(1, nH):
        for bx in range(1, nH):
            ipos[by * n + bx] = k
            k += 1
    n_int = (nH - 1) ** 2
    n1, n2 = n_int * k1, n_int * group2.size
    nd = n1 + n2
    emass, S, T = gauss_block_integrals(part.H)

    def gdof(node, q):
        p = ipos[node]
        if p < 0:
            return -1
        return p * k1 + q if q < k1 else n1 + p * group2.size + (q - k1)

    M = np.zeros((nd, nd))
    A = np.zeros((nd, nd))
    C = np.zeros((nd, nd))
    B = np.zeros((nd, nd))
    for b in range(part.n_blocks):
        bx, by = part.block_xy(b)
        corners = [by * n + bx, by * n + bx + 1, (by + 1) * n + bx,
                   (by + 1) * n + bx + 1]
        for c in range(4):
            for qi in range(N):
                r = gdof(corners[c], qi)
                if r < 0:
                    continue
                i = order[qi]
                for d in range(4):
                    for qj in range(N):
                        s = gdof(corners[d], qj)
                        if s < 0:
                            continue
                        j = order[qj]
                        M[r, s] += emass[c, d] * tensors.gamma[b, i, j]
                        C[r, s] += emass[c, d] * tensors.alpha[b, i, j]
                        for m in range(2):
                            B[r, s] += (tensors.alpha_mstar[b, i, j, m]
                                        * T[m, d, c])
                            for nn_ in range(2):
                                A[r, s] += (tensors.alpha_mn[b, i, m, j, nn_]
                                            * S[m, nn_, c, d])
    return M, A, C, B


def dense_energy(u_n, u_np1, M, A, C, n1, tau):
    """Split-form discrete energy from dense blocks, expanded term by term."""
    d = u_np1 - u_n
    u1n, u2n = u_n[:n1], u_n[n1:]
    u1p, u2p = u_np1[:n1], u_np1[n1:]
    A11, A12 = A[:n1, :n1], A[:n1, n1:]
    A22 = A[n1:, n1:]
    E = (2.0 / tau**2) * d @ M @ d
    E += u_np1 @ C @ u_np1 + u_n @ C @ u_n
    E += u1p @ A11 @ u1p + u1n @ A11 @ u1n
    E += u2p @ A22 @ u2p + u2n @ A22 @ u2n
    E += 2.0 * u1p @ A12 @ u2n + 2.0 * u1n @ A12 @ u2p
    E -= (u2p - u2n) @ A22 @ (u2p - u2n)
    return float(E)


def dense_step(u_prev, u_cur, M, A, C, n1, tau, scheme, load=None):
    """One step of the three-layer recurrence with dense matrices."""
    nd = M.shape[0]
    A_imp = np.zeros_like(A)
    C_imp = np.zeros_like(C)
    if scheme == "implicit":
        A_imp, C_imp = A, C
    elif scheme == "scheme1":
        A_imp[:n1, :n1] = A[:n1, :n1]
        C_imp = C
    elif scheme == "scheme2":
        A_imp[:n1, :n1] = A[:n1, :n1]
        C_imp[:n1, :n1] = C[:n1, :n1]
    elif scheme != "explicit":
        raise ValueError(scheme)
    it2 = 1.0 / tau**2
    lhs = it2 * M + 0.5 * A_imp + 0.5 * C_imp
    rhs = it2 * M @ (2.0 * u_cur - u_prev)
    rhs -= 0.5 * (A_imp + C_imp) @ u_prev
    rhs -= (A - A_imp + C - C_imp) @ u_cur
    if load is not None:
        rhs = rhs + load
    return np.linalg.solve(lhs, rhs)


def aligned_tensor_instance(N: int, seed: int):
    """Random (a_tensor, M) with one shared dominant spatial direction.

    a[i, m, j, n] = Sx[i, j] u_m u_n + Sy[i, j] w_m w_n with orthonormal
    directions (u, w) and Sx - Sy positive semidefinite with nonnegative
    entries, mirroring layered media where one direction is uniformly
    stiffer.  For such tensors the reduced matrix is exactly Sx and the
    tensor Rayleigh values coincide with the (Sx, M) pencil eigenvalues.
    """
    rng = np.random.default_rng(seed)
    th = rng.uniform(0.0, np.pi)
    u = np.array([np.cos(th), np.sin(th)])
    w = np.array([-np.sin(th), np.cos(th)])
    V = rng.standard_normal((N, N + 2))
    Sy = V @ V.T + 0.1 * np.eye(N)
    L = rng.uniform(0.2, 1.5, size=(N, N + 1))
    Sx = Sy + L @ L.T  # PSD gap with nonnegative entries
    a = (np.einsum("ij,m,n->imjn", Sx, u, u)
         + np.einsum("ij,m,n->imjn", Sy, w, w))
    M = rng.standard_normal((N, N + 2))
    M = M @ M.T + 0.1 * np.eye(N)
    return a, M
