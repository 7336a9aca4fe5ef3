"""Homogenized coarse system, downscaled basis, and three-layer time steppers.

Coarse degrees of freedom live on interior coarse Q1 nodes (zero Dirichlet),
one per (node, continuum).  Continua are partitioned into group 1 (implicit,
fast) and group 2 (explicit, slow); the combined DOF vector is ordered
[group 1; group 2].  The block forms are coarse Q1 integrals against the
per-block effective tensors: mass from gamma, stiffness from the rank-4
gradient tensor, reaction from the basis-gradient matrix.  The first-order
cross tensors are assembled only as a diagnostic and never enter a stepper.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cell_problems import CellBasis
from .effective import EffectiveTensors
from .errors import ConfigurationError, SingularSystemError
from .fem import patch_mass
from .grid import CoarsePartition, FineMesh

SCHEMES = ("implicit", "explicit", "scheme1", "scheme2")


def _hat_values(nf: int, H: float):
    """Coarse Q1 hats and their gradients sampled at block-local fine nodes.

    Returns chi (4, nn) and dchi (4, 2, nn); corner order lexicographic.
    """
    t = np.linspace(0.0, 1.0, nf + 1)
    XI, ETA = np.meshgrid(t, t)  # ETA rows, XI cols; node = iy*(nf+1)+ix
    xi, eta = XI.ravel(), ETA.ravel()
    chi = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta),
                    (1 - xi) * eta, xi * eta])
    dchi = np.stack([
        np.stack([-(1 - eta) / H, -(1 - xi) / H]),
        np.stack([(1 - eta) / H, -xi / H]),
        np.stack([-eta / H, (1 - xi) / H]),
        np.stack([eta / H, xi / H]),
    ])
    return chi, dchi


@dataclass(frozen=True)
class DownscaledBasis:
    """Per-block downscaled vectors for every (corner, continuum) pair.

    w0[b, c, i, :] realizes the constant part (phi_i * hat_c) and
    w1[b, c, i, :] the gradient part (phi_i^m * d_m hat_c) on the fine nodes
    of block b; the full downscaling operator is their sum.
    """

    part: CoarsePartition
    w0: np.ndarray  # (n_blocks, 4, N, nn)
    w1: np.ndarray  # (n_blocks, 4, N, nn)

    @property
    def n_continua(self) -> int:
        return self.w0.shape[2]


def build_downscaled_basis(basis: CellBasis, part: CoarsePartition) -> DownscaledBasis:
    chi, dchi = _hat_values(part.nf, part.H)
    # w0[b,c,i,n] = phi0[b,i,n] chi[c,n]; w1 sums phi1 over gradient directions
    w0 = np.einsum("bin,cn->bcin", basis.phi0, chi)
    w1 = np.einsum("bimn,cmn->bcin", basis.phi1, dchi)
    return DownscaledBasis(part=part, w0=w0, w1=w1)


def _corner_nodes(part: CoarsePartition, block: int) -> np.ndarray:
    bx, by = part.block_xy(block)
    n = part.nH + 1
    return np.array([by * n + bx, by * n + bx + 1,
                     (by + 1) * n + bx, (by + 1) * n + bx + 1])


def _interior_positions(nH: int) -> np.ndarray:
    """Map coarse node id -> interior position, or -1 on the boundary."""
    n = nH + 1
    pos = np.full(n * n, -1, dtype=int)
    k = 0
    for by in range(1, nH):
        for bx in range(1, nH):
            pos[by * n + bx] = k
            k += 1
    return pos


@dataclass(frozen=True)
class BlockSystem:
    """Assembled split system over [group 1 (implicit); group 2 (explicit)] DOFs."""

    part: CoarsePartition
    group1: np.ndarray  # continuum indices treated implicitly
    group2: np.ndarray  # continuum indices treated explicitly
    M: sp.csr_matrix
    A: sp.csr_matrix
    C: sp.csr_matrix
    B_diag: sp.csr_matrix  # diagnostic only, never used by steppers
    n1: int
    n2: int
    interior_pos: np.ndarray = field(repr=False)

    @property
    def n_dofs(self) -> int:
        return self.n1 + self.n2

    def _block(self, mat, i, j):
        s = (slice(0, self.n1), slice(self.n1, self.n_dofs))
        return mat[s[i - 1], s[j - 1]]

    @property
    def M11(self): return self._block(self.M, 1, 1)
    @property
    def M12(self): return self._block(self.M, 1, 2)
    @property
    def M21(self): return self._block(self.M, 2, 1)
    @property
    def M22(self): return self._block(self.M, 2, 2)
    @property
    def A11(self): return self._block(self.A, 1, 1)
    @property
    def A22(self): return self._block(self.A, 2, 2)
    @property
    def C11(self): return self._block(self.C, 1, 1)
    @property
    def C22(self): return self._block(self.C, 2, 2)

    def split(self, u: np.ndarray):
        return u[:self.n1], u[self.n1:]

    def dof_index(self, coarse_node: int, continuum: int) -> int:
        """Combined DOF of (interior coarse node, recombined continuum)."""
        p = self.interior_pos[coarse_node]
        if p < 0:
            raise ConfigurationError("boundary coarse nodes carry no DOFs")
        g1 = np.nonzero(self.group1 == continuum)[0]
        if g1.size:
            return p * self.group1.size + int(g1[0])
        g2 = np.nonzero(self.group2 == continuum)[0]
        if g2.size:
            return self.n1 + p * self.group2.size + int(g2[0])
        raise ConfigurationError(f"continuum {continuum} not in either group")

    def nodal_values(self, u: np.ndarray) -> np.ndarray:
        """(N, (nH+1)^2) per-continuum coarse nodal field, zeros on the boundary."""
        N = self.group1.size + self.group2.size
        n = (self.part.nH + 1) ** 2
        out = np.zeros((N, n))
        interior = np.nonzero(self.interior_pos >= 0)[0]
        u1, u2 = self.split(u)
        k1, k2 = self.group1.size, self.group2.size
        for pos, node in enumerate(interior):
            for g, i in enumerate(self.group1):
                out[i, node] = u1[pos * k1 + g]
            for g, i in enumerate(self.group2):
                out[i, node] = u2[pos * k2 + g]
        return out


def _coarse_element_matrices(H: float):
    """Q1 element integrals on a square block of side H, corner order lexicographic.

    emass[c, d]    = int chi_c chi_d
    S[m, n, c, d]  = int (d_m chi_c)(d_n chi_d)
    T[m, c, d]     = int (d_m chi_c) chi_d
    """
    M1 = H * np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
    K1 = (1.0 / H) * np.array([[1.0, -1.0], [-1.0, 1.0]])
    G = np.array([[-0.5, -0.5], [0.5, 0.5]])  # G[a, b] = int xi'_a xi_b
    emass = np.kron(M1, M1)
    S = np.empty((2, 2, 4, 4))
    S[0, 0] = np.kron(M1, K1)
    S[1, 1] = np.kron(K1, M1)
    S[0, 1] = np.kron(G.T, G)
    S[1, 0] = np.kron(G, G.T)
    T = np.empty((2, 4, 4))
    T[0] = np.kron(M1, G)
    T[1] = np.kron(G, M1)
    return emass, S, T


def assemble_block_forms(tensors: EffectiveTensors, part: CoarsePartition,
                         group1, group2) -> BlockSystem:
    """Coarse Q1 assembly of the homogenized forms from per-block tensors.

    Per block: m from gamma, a from the rank-4 gradient tensor, c from the
    basis-gradient (reaction) matrix, and the diagnostic b from the
    first-order cross tensor.  group1/group2 are disjoint continuum index
    lists covering 0..N-1; either may be empty.
    """
    group1 = np.asarray(group1, dtype=int)
    group2 = np.asarray(group2, dtype=int)
    N = tensors.n_continua
    if sorted(np.concatenate([group1, group2]).tolist()) != list(range(N)):
        raise ConfigurationError("groups must partition the continuum indices")

    ipos = _interior_positions(part.nH)
    n_int = (part.nH - 1) ** 2
    k1, k2 = group1.size, group2.size
    n1, n2 = n_int * k1, n_int * k2

    emass, S, T = _coarse_element_matrices(part.H)

    # local dof order: corner-major, continua ordered [group1..., group2...]
    order = np.concatenate([group1, group2])
    in_g1 = np.zeros(N, dtype=bool)
    in_g1[:k1] = True  # positions in `order`

    rows_all, cols_all = [], []
    vals_m, vals_a, vals_c, vals_b = [], [], [], []
    n_loc = 4 * N
    for b in range(part.n_blocks):
        g = tensors.gamma[b][np.ix_(order, order)]
        al = tensors.alpha[b][np.ix_(order, order)]
        At = tensors.alpha_mn[b][order][:, :, order, :]
        cross = tensors.alpha_mstar[b][np.ix_(order, order)]
        m_loc = np.einsum("cd,ij->cidj", emass, g).reshape(n_loc, n_loc)
        c_loc = np.einsum("cd,ij->cidj", emass, al).reshape(n_loc, n_loc)
        a_loc = np.einsum("imjn,mncd->cidj", At, S).reshape(n_loc, n_loc)
        # test-constant (rows) vs trial-gradient (cols):
        # b[(c,i),(d,j)] = sum_m cross[i,j,m] int chi_c d_m chi_d
        b_loc = np.einsum("ijm,mdc->cidj", cross, T).reshape(n_loc, n_loc)

        corners = _corner_nodes(part, b)
        gdof = np.full(4 * N, -1, dtype=int)
        for c in range(4):
            p = ipos[corners[c]]
            if p < 0:
                continue
            for q in range(N):
                ld = c * N + q
                if in_g1[q]:
                    gdof[ld] = p * k1 + q
                else:
                    gdof[ld] = n1 + p * k2 + (q - k1)
        keep = np.nonzero(gdof >= 0)[0]
        gd = gdof[keep]
        rows_all.append(np.repeat(gd, keep.size))
        cols_all.append(np.tile(gd, keep.size))
        sub = np.ix_(keep, keep)
        vals_m.append(m_loc[sub].ravel())
        vals_a.append(a_loc[sub].ravel())
        vals_c.append(c_loc[sub].ravel())
        vals_b.append(b_loc[sub].ravel())

    rows = np.concatenate(rows_all)
    cols = np.concatenate(cols_all)
    shape = (n1 + n2, n1 + n2)

    def build(vals):
        return sp.coo_matrix((np.concatenate(vals), (rows, cols)), shape=shape).tocsr()

    return BlockSystem(part=part, group1=group1, group2=group2,
                       M=build(vals_m), A=build(vals_a), C=build(vals_c),
                       B_diag=build(vals_b), n1=n1, n2=n2, interior_pos=ipos)


def assemble_load(db: DownscaledBasis, system: BlockSystem, mesh: FineMesh,
                  f, t: float) -> np.ndarray:
    """Load vector with entries (f(., t), T_{i,0} W) for every coarse DOF.

    Only the constant part of the downscaling enters, matching the
    homogenized right-hand side int_K f phi_i per block.
    """
    part = system.part
    N = db.n_continua
    order = np.concatenate([system.group1, system.group2])
    k1 = system.group1.size
    Mk = patch_mass(part.nf, part.nf, mesh.h)
    coords = mesh.node_coords()
    F = np.zeros(system.n_dofs)
    for b in range(part.n_blocks):
        nodes = part.block_nodes(b)
        fv = np.asarray(f(coords[nodes, 0], coords[nodes, 1], t), dtype=float)
        Wf = db.w0[b][:, order, :].reshape(4 * N, -1)
        contrib = Wf @ (Mk @ fv)
        corners = _corner_nodes(part, b)
        for c in range(4):
            p = system.interior_pos[corners[c]]
            if p < 0:
                continue
            for q in range(N):
                if q < k1:
                    F[p * k1 + q] += contrib[c * N + q]
                else:
                    F[system.n1 + p * (N - k1) + (q - k1)] += contrib[c * N + q]
    return F


def downscale(db: DownscaledBasis, system: BlockSystem, u: np.ndarray) -> np.ndarray:
    """Broken fine-grid field per block, (n_blocks, (nf+1)^2)."""
    part = system.part
    N = db.n_continua
    order = np.concatenate([system.group1, system.group2])
    k1 = system.group1.size
    out = np.zeros((part.n_blocks, (part.nf + 1) ** 2))
    for b in range(part.n_blocks):
        corners = _corner_nodes(part, b)
        Wf = (db.w0[b] + db.w1[b])[:, order, :]
        for c in range(4):
            p = system.interior_pos[corners[c]]
            if p < 0:
                continue
            for q in range(N):
                if q < k1:
                    coef = u[p * k1 + q]
                else:
                    coef = u[system.n1 + p * (N - k1) + (q - k1)]
                out[b] += coef * Wf[c, q]
    return out


def _embed_11(system: BlockSystem, mat: sp.spmatrix) -> sp.csr_matrix:
    """Zero-extend the (1,1) block of `mat` to the full DOF space."""
    out = sp.lil_matrix((system.n_dofs, system.n_dofs))
    if system.n1:
        out[:system.n1, :system.n1] = mat[:system.n1, :system.n1]
    return out.tocsr()


class Stepper:
    """Three-layer stepper; the implicit matrix is factorized once."""

    def __init__(self, system: BlockSystem, tau: float, scheme: str,
                 mass_lumping: bool = False):
        if scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {scheme!r}")
        if mass_lumping:
            raise ConfigurationError("mass lumping is recognized but not implemented")
        if tau <= 0:
            raise ConfigurationError("time step must be positive")
        self.system = system
        self.tau = tau
        self.scheme = scheme
        M, A, C = system.M, system.A, system.C
        it2 = 1.0 / tau**2

        if scheme == "implicit":
            A_imp, C_imp = A, C
        elif scheme == "explicit":
            A_imp = sp.csr_matrix(A.shape)
            C_imp = sp.csr_matrix(C.shape)
        elif scheme == "scheme1":
            A_imp, C_imp = _embed_11(system, A), C
        else:  # scheme2
            A_imp, C_imp = _embed_11(system, A), _embed_11(system, C)

        self._A_imp, self._C_imp = A_imp, C_imp
        self._A_exp = (A - A_imp).tocsr()
        self._C_exp = (C - C_imp).tocsr()
        lhs = (it2 * M + 0.5 * A_imp + 0.5 * C_imp).tocsc()
        try:
            self._lu = spla.splu(lhs)
        except RuntimeError as exc:
            raise SingularSystemError(f"stepper factorization failed: {exc}") from exc
        self._lhs = lhs

    def step(self, u_prev: np.ndarray, u_cur: np.ndarray,
             load: np.ndarray | None = None) -> np.ndarray:
        sysm = self.system
        it2 = 1.0 / self.tau**2
        rhs = it2 * (sysm.M @ (2.0 * u_cur - u_prev))
        rhs -= 0.5 * (self._A_imp @ u_prev) + 0.5 * (self._C_imp @ u_prev)
        rhs -= self._A_exp @ u_cur + self._C_exp @ u_cur
        if load is not None:
            rhs = rhs + load
        return self._lu.solve(rhs)


def startup(system: BlockSystem, tau: float,
            load0: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Layers 0 and 1 for zero initial data: U^1 = (tau^2/2) M^{-1} F^0."""
    u0 = np.zeros(system.n_dofs)
    if load0 is None or not np.any(load0):
        return u0, np.zeros(system.n_dofs)
    u1 = 0.5 * tau * tau * spla.splu(system.M.tocsc()).solve(load0)
    return u0, u1


def discrete_energy(u_n: np.ndarray, u_np1: np.ndarray, system: BlockSystem,
                    tau: float) -> float:
    """Conserved quantity of scheme 1 between adjacent layers."""
    d = u_np1 - u_n
    E = (2.0 / tau**2) * d @ (system.M @ d)
    E += u_np1 @ (system.C @ u_np1) + u_n @ (system.C @ u_n)
    mix1 = np.concatenate([u_np1[:system.n1], u_n[system.n1:]])
    mix2 = np.concatenate([u_n[:system.n1], u_np1[system.n1:]])
    E += mix1 @ (system.A @ mix1) + mix2 @ (system.A @ mix2)
    d2 = d[system.n1:]
    E -= d2 @ (system.A22 @ d2)
    return float(E)


def b_antisymmetry_diagnostic(system: BlockSystem, rng=None) -> float:
    """Relative size of b(U, W) + b(W, U) on random vectors (reported, not asserted)."""
    rng = rng or np.random.default_rng(0)
    u = rng.standard_normal(system.n_dofs)
    w = rng.standard_normal(system.n_dofs)
    num = abs(w @ (system.B_diag @ u) + u @ (system.B_diag @ w))
    den = (np.sqrt(abs(u @ (system.A @ u)) * abs(w @ (system.A @ w)))
           + np.sqrt(abs(u @ (system.C @ u)) * abs(w @ (system.C @ w))))
    return float(num / den) if den > 0 else 0.0


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray      # (n_steps + 1, n_dofs)
    energies: np.ndarray    # (n_steps,), E^{n+1/2}
    diverged_at: int | None


def integrate(system: BlockSystem, scheme: str, tau: float, n_steps: int,
              load=None, u0: np.ndarray | None = None,
              u1: np.ndarray | None = None,
              divergence_factor: float = 1e6) -> Trajectory:
    """Advance `n_steps` steps; `load` is a callable t -> vector or None.

    Integration stops early once the state norm exceeds `divergence_factor`
    times the largest norm over the first 10 layers (or becomes non-finite);
    `diverged_at` records the first offending step.
    """
    stepper = Stepper(system, tau, scheme)
    times = np.arange(n_steps + 1) * tau
    states = np.zeros((n_steps + 1, system.n_dofs))
    energies = np.full(n_steps, np.nan)
    if u0 is None and u1 is None:
        f0 = load(0.0) if load is not None else None
        u_prev, u_cur = startup(system, tau, f0)
    else:
        u_prev = np.zeros(system.n_dofs) if u0 is None else np.asarray(u0, dtype=float)
        u_cur = np.zeros(system.n_dofs) if u1 is None else np.asarray(u1, dtype=float)
    states[0] = u_prev
    if n_steps == 0:
        return Trajectory(times, states, energies, None)
    states[1] = u_cur

    ref_norm = max(np.linalg.norm(u_prev), np.linalg.norm(u_cur), 0.0)
    diverged_at = None
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, n_steps):
            F = load(times[n]) if load is not None else None
            u_next = stepper.step(u_prev, u_cur, F)
            states[n + 1] = u_next
            energies[n] = discrete_energy(u_cur, u_next, system, tau)
            norm = np.linalg.norm(u_next)
            if n < 10:
                ref_norm = max(ref_norm, norm if np.isfinite(norm) else ref_norm)
            if not np.isfinite(norm) or (ref_norm > 0 and norm > divergence_factor * ref_norm):
                diverged_at = n + 1
                states[n + 2:] = np.nan
                break
            u_prev, u_cur = u_cur, u_next
    if n_steps >= 1:
        energies[0] = discrete_energy(states[0], states[1], system, tau)
    return Trajectory(times, states, energies, diverged_at)
