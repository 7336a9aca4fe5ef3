"""Decomposition of the multicontinuum space into fast and slow groups.

The main path performs a generalized eigendecomposition of the reduced
tensor pair (At, M) on a representative block (or the entry-wise median over
blocks), selects the number of slow modes i0 at the spectral gap, and
recombines the basis with the M-orthonormal eigenvectors.  Slow modes
(indices 0..i0-1) form the explicitly treated group; the remaining fast
modes are treated implicitly.

A brute-force tensor Rayleigh quotient verifier for desk-scale instances is
included as an independent check; it is never on the main solver path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
import scipy.optimize as sopt

from .cell_problems import CellBasis
from .effective import EffectiveTensors, reduce_tensor
from .errors import ConfigurationError, DomainError, SingularSystemError


@dataclass(frozen=True)
class SplittingPlan:
    """Recombination vectors and group split for the coarse system.

    Rows of `vectors` are the M-orthonormal recombination vectors v_i in
    ascending eigenvalue order; `inverse` is the matrix inverse, so that
    original macroscopic variables are recovered as U = vectors.T @ U_hat.
    Explicit (slow) recombined indices: 0..i0-1; implicit: i0..N-1.
    """

    i0: int
    eigenvalues: np.ndarray  # (N,), ascending
    vectors: np.ndarray      # (N, N)
    inverse: np.ndarray      # (N, N)
    block: int               # representative block id, -1 for median mode
    threshold: float

    @property
    def n_continua(self) -> int:
        return self.eigenvalues.size

    @property
    def explicit_indices(self) -> np.ndarray:
        return np.arange(self.i0)

    @property
    def implicit_indices(self) -> np.ndarray:
        return np.arange(self.i0, self.n_continua)


@dataclass(frozen=True)
class StabilityReport:
    gamma: float
    tau_max_scheme1: float
    tau_max_scheme2: float
    tau_estimate_scheme1: float
    tau_estimate_scheme2: float
    inverse_inequality_constant: float  # C1 on the coarse scalar space


def gen_eig(At: np.ndarray, M: np.ndarray):
    """Generalized eigendecomposition At v = lambda M v with M SPD.

    Returns ascending eigenvalues and M-orthonormal eigenvectors as rows.
    Sign convention: the largest-magnitude component of each vector is
    positive.
    """
    At = np.asarray(At, dtype=float)
    M = np.asarray(M, dtype=float)
    if np.abs(At - At.T).max() > 1e-9 * max(np.abs(At).max(), 1e-300):
        raise DomainError("tensor matrix is not symmetric")
    try:
        lam, vecs = sla.eigh(At, M)
    except sla.LinAlgError as exc:
        raise SingularSystemError(f"generalized eigensolve failed: {exc}") from exc
    vecs = vecs.T  # rows
    for i in range(vecs.shape[0]):
        k = np.argmax(np.abs(vecs[i]))
        if vecs[i, k] < 0:
            vecs[i] = -vecs[i]
    scale = max(np.abs(At).max(), 1e-300)
    for i, (l, v) in enumerate(zip(lam, vecs)):
        res = np.linalg.norm(At @ v - l * (M @ v))
        if res > 1e-9 * max(np.linalg.norm(At @ v), scale * 1e-6):
            raise SingularSystemError(f"eigenpair {i} residual {res:.3e} too large")
    return lam, vecs


def select_i0(eigenvalues: np.ndarray, threshold_ratio: float = 10.0) -> int:
    """Number of slow modes, chosen at the spectral gap.

    The largest index i with lambda_{i+1}/lambda_i >= threshold wins; if no
    ratio reaches the threshold, the argmax consecutive ratio is used, and 0
    is returned when no gap exceeds 1 (everything implicit).
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size < 2:
        return 0
    ratios = lam[1:] / np.maximum(lam[:-1], 1e-300)
    hits = np.nonzero(ratios >= threshold_ratio)[0]
    if hits.size:
        return int(hits[-1]) + 1
    if ratios.max() <= 1.0 + 1e-12:
        return 0
    return int(np.argmax(ratios)) + 1


def representative_block(tensors: EffectiveTensors) -> int:
    """Interior block closest to the domain center."""
    part = tensors.part
    interior = part.interior_blocks()
    pool = interior if interior.size else np.arange(part.n_blocks)
    mid = (part.nH - 1) / 2.0
    bx = pool % part.nH
    by = pool // part.nH
    return int(pool[np.argmin((bx - mid) ** 2 + (by - mid) ** 2)])


def make_plan(tensors: EffectiveTensors, threshold_ratio: float = 10.0,
              mode: str = "representative") -> SplittingPlan:
    """Splitting plan from per-block effective tensors."""
    if mode == "representative":
        b = representative_block(tensors)
        At = reduce_tensor(tensors.a_tensor(b))
        M = tensors.mass_matrix(b)
    elif mode == "median":
        b = -1
        At_all = np.stack([reduce_tensor(tensors.a_tensor(k))
                           for k in range(tensors.part.n_blocks)])
        At = np.median(At_all, axis=0)
        At = 0.5 * (At + At.T)
        M = np.median(tensors.gamma, axis=0)
        M = 0.5 * (M + M.T)
    else:
        raise ConfigurationError(f"unknown plan mode {mode!r}")
    lam, vecs = gen_eig(At, M)
    i0 = select_i0(lam, threshold_ratio)
    return SplittingPlan(i0=i0, eigenvalues=lam, vectors=vecs,
                         inverse=np.linalg.inv(vecs), block=b,
                         threshold=threshold_ratio)


def identity_plan(n_continua: int, i0: int) -> SplittingPlan:
    """Index-partition split: no recombination, first i0 continua explicit."""
    eye = np.eye(n_continua)
    return SplittingPlan(i0=i0, eigenvalues=np.ones(n_continua), vectors=eye,
                         inverse=eye, block=-1, threshold=0.0)


def recombine_basis(basis: CellBasis, plan: SplittingPlan) -> CellBasis:
    """Linear combinations phi_hat_i = sum_j v_{i,j} phi_j, per block."""
    V = plan.vectors
    phi0 = np.einsum("ij,bjn->bin", V, basis.phi0)
    phi1 = np.einsum("ij,bjmn->bimn", V, basis.phi1)
    # xtilde is construction metadata of the original continua; kept as-is.
    return replace(basis, phi0=phi0, phi1=phi1)


def gamma_constant(M11: np.ndarray, M12: np.ndarray, M22: np.ndarray) -> float:
    """Strengthened Cauchy-Schwarz constant between the two downscaled spaces.

    gamma = sqrt(max eig of M11^{-1} M12 M22^{-1} M21), computed via
    Cholesky whitening.  Either group empty gives gamma = 0.
    """
    if M11.shape[0] == 0 or M22.shape[0] == 0:
        return 0.0
    try:
        L1 = sla.cholesky(np.asarray(M11.todense() if hasattr(M11, "todense") else M11),
                          lower=True)
        L2 = sla.cholesky(np.asarray(M22.todense() if hasattr(M22, "todense") else M22),
                          lower=True)
    except sla.LinAlgError as exc:
        raise SingularSystemError(f"group mass matrix not SPD: {exc}") from exc
    M12 = np.asarray(M12.todense() if hasattr(M12, "todense") else M12)
    W = sla.solve_triangular(L1, M12, lower=True)
    W = sla.solve_triangular(L2, W.T, lower=True).T
    s = np.linalg.svd(W, compute_uv=False)
    g = float(s[0]) if s.size else 0.0
    if g >= 1.0:
        raise DomainError(f"subspaces are not independent (gamma = {g:.6f} >= 1)")
    return g


def _max_gen_eig(A, M) -> float:
    A = np.asarray(A.todense() if hasattr(A, "todense") else A, dtype=float)
    M = np.asarray(M.todense() if hasattr(M, "todense") else M, dtype=float)
    if A.shape[0] == 0:
        return 0.0
    lam = sla.eigh(0.5 * (A + A.T), 0.5 * (M + M.T), eigvals_only=True)
    return float(lam[-1])


def stability_bounds(system, gamma: float, plan: SplittingPlan | None = None,
                     coarse_inverse_constant: float | None = None,
                     H: float | None = None) -> StabilityReport:
    """Largest stable time steps for both schemes from the explicit-group norms.

        tau_max(s1)^2 = 2 (1 - gamma^2) / max_eig(M22^{-1} A22)
        tau_max(s2)^2 = 2 (1 - gamma^2) / max_eig(M22^{-1} (A22 + C22))

    Also reports the closed-form estimates sqrt(2) C1^{-1/2} lambda_{i0}^{-1/2} H
    when a plan and the coarse inverse-inequality constant C1 are supplied.
    """
    M22, A22, C22 = system.M22, system.A22, system.C22
    fac = 2.0 * (1.0 - gamma * gamma)
    lam_a = _max_gen_eig(A22, M22) if M22.shape[0] else 0.0
    lam_ac = _max_gen_eig(A22 + C22, M22) if M22.shape[0] else 0.0
    tau1 = float(np.sqrt(fac / lam_a)) if lam_a > 0 else np.inf
    tau2 = float(np.sqrt(fac / lam_ac)) if lam_ac > 0 else np.inf

    est1 = est2 = np.nan
    C1 = np.nan
    if plan is not None and coarse_inverse_constant is not None and H is not None:
        C1 = coarse_inverse_constant
        if plan.i0 > 0:
            lam_i0 = plan.eigenvalues[plan.i0 - 1]
            est1 = float(np.sqrt(2.0 / (C1 * lam_i0)) * H)
            lam_c = _max_gen_eig(H * H * np.asarray(system.C22.todense()),
                                 system.M22) if system.M22.shape[0] else 0.0
            est2 = float(np.sqrt(2.0) * H / np.sqrt(C1 * lam_i0 + lam_c)) \
                if (C1 * lam_i0 + lam_c) > 0 else np.inf
        else:
            est1 = est2 = np.inf
    return StabilityReport(gamma=gamma, tau_max_scheme1=tau1, tau_max_scheme2=tau2,
                           tau_estimate_scheme1=est1, tau_estimate_scheme2=est2,
                           inverse_inequality_constant=float(C1))


def coarse_inverse_constant(nH: int) -> float:
    """C1 with sup ||W||_H1^2 / ||W||_L2^2 <= C1 / H^2 on the coarse Q1 space.

    Measured as H^2 * max eig of (mass^-1 (stiffness + mass)) on the interior
    coarse scalar space.
    """
    from .fem import patch_mass, patch_stiffness, restrict

    H = 1.0 / nH
    K = patch_stiffness(nH, nH, np.ones(nH * nH))
    M = patch_mass(nH, nH, H)
    idx = np.arange((nH + 1) ** 2).reshape(nH + 1, nH + 1)
    keep = idx[1:-1, 1:-1].ravel()
    Ki = restrict(K, keep).toarray()
    Mi = restrict(M, keep).toarray()
    lam = sla.eigh(Ki + Mi, Mi, eigvals_only=True)
    return float(H * H * lam[-1])


# ----------------------------------------------------------------------
# Desk-scale brute-force verifier of the tensor Rayleigh quotient problem.
# ----------------------------------------------------------------------

def _rho(v: np.ndarray, a_tensor: np.ndarray, M: np.ndarray) -> float:
    """max over directions w of the tensor quotient at fixed v.

    Reduces to the largest eigenvalue of the 2x2 matrix
    G(v)_{mn} = sum_{kl} v_k v_l A^{kl}_{mn} divided by v^T M v.
    """
    G = np.einsum("k,l,kmln->mn", v, v, a_tensor)
    G = 0.5 * (G + G.T)
    return float(np.linalg.eigvalsh(G)[-1] / (v @ (M @ v)))


def _subspace_max(basis_vectors: np.ndarray, a_tensor: np.ndarray,
                  M: np.ndarray, n_grid: int) -> float:
    """max of rho over the span of the given (i, N) basis rows."""
    i = basis_vectors.shape[0]
    if i == 1:
        return _rho(basis_vectors[0], a_tensor, M)
    if i == 2:
        thetas = np.linspace(0.0, np.pi, n_grid, endpoint=False)
        vals = [_rho(np.cos(t) * basis_vectors[0] + np.sin(t) * basis_vectors[1],
                     a_tensor, M) for t in thetas]
        k = int(np.argmax(vals))
        res = sopt.minimize_scalar(
            lambda t: -_rho(np.cos(t) * basis_vectors[0] + np.sin(t) * basis_vectors[1],
                            a_tensor, M),
            bracket=(thetas[k] - np.pi / n_grid, thetas[k], thetas[k] + np.pi / n_grid))
        return max(max(vals), float(-res.fun))
    # i == 3: coarse sphere grid, refined by Nelder-Mead on angles
    best = -np.inf
    ang = np.linspace(0, np.pi, n_grid)
    for t1 in ang:
        for t2 in np.linspace(0, 2 * np.pi, 2 * n_grid, endpoint=False):
            c = np.array([np.sin(t1) * np.cos(t2), np.sin(t1) * np.sin(t2), np.cos(t1)])
            best = max(best, _rho(c @ basis_vectors, a_tensor, M))
    return best


def rayleigh_bruteforce_verify(a_tensor: np.ndarray, M: np.ndarray, i: int,
                               budget: int = 2000, seed: int = 0):
    """Approximate lambda_i of the tensor min-max problem by multi-start search.

    Minimizes over i-dimensional subspaces (parameterized by their basis),
    solving the inner maximization by eigendecomposition of a 2x2 matrix per
    sampled vector.  Returns (value, subspace basis rows, converged flag);
    only supports N <= 3.
    """
    N = M.shape[0]
    if N > 3:
        raise ConfigurationError("brute-force verifier is desk-scale only (N <= 3)")
    if not 1 <= i <= N:
        raise ConfigurationError(f"need 1 <= i <= {N}, got {i}")
    rng = np.random.default_rng(seed)
    n_grid = max(24, budget // 50)

    if i == N:
        eye = np.eye(N)
        return _subspace_max(eye, a_tensor, M, 4 * n_grid), eye, True

    n_par = i * (N - i)  # Grassmannian dimension

    def make_basis(params: np.ndarray, base: np.ndarray) -> np.ndarray:
        # tangent-style parameterization around a base frame
        Q = base.copy()
        comp = _orth_complement(base)
        X = params.reshape(i, N - i)
        raw = Q + X @ comp
        q, _ = np.linalg.qr(raw.T)
        return q.T[:i]

    def objective(params, base):
        return _subspace_max(make_basis(params, base), a_tensor, M, n_grid)

    best_val, best_basis, converged = np.inf, None, False
    n_starts = max(4, budget // 500)
    for s in range(n_starts):
        if s == 0:
            base, _ = np.linalg.qr(rng.standard_normal((N, N)))
        else:
            base, _ = np.linalg.qr(rng.standard_normal((N, N)))
        base = base.T[:i]
        res = sopt.minimize(objective, np.zeros(n_par), args=(base,),
                            method="Nelder-Mead",
                            options={"maxfev": budget, "xatol": 1e-10, "fatol": 1e-12})
        if res.fun < best_val:
            best_val = float(res.fun)
            best_basis = make_basis(res.x, base)
            converged = bool(res.success)
    return best_val, best_basis, converged


def _orth_complement(rows: np.ndarray) -> np.ndarray:
    N = rows.shape[1]
    q, _ = np.linalg.qr(np.vstack([rows, np.eye(N)]).T)
    return q.T[rows.shape[0]:N]
