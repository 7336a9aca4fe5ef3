"""Per-continuum coarse averages, relative errors, and blowup detection."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError
from .field import IndicatorSet
from .grid import CoarsePartition, FineMesh


@dataclass(frozen=True)
class ErrorSeries:
    scheme: str
    times: np.ndarray           # (nt,)
    errors: np.ndarray          # (nt, N)
    undefined: np.ndarray       # (nt,) bool: denominator vanished at this time

    @property
    def n_continua(self) -> int:
        return self.errors.shape[1]


def continuum_average(u_fine: np.ndarray, mesh: FineMesh, part: CoarsePartition,
                      indicators: IndicatorSet, block: int, i: int) -> float:
    """psi-weighted average of a fine nodal field over one coarse block."""
    from .fem import patch_cell_nodes

    cells = part.block_cells(block).ravel()
    mask = indicators.mask_cells(i)[cells].astype(bool)
    if not mask.any():
        raise DegeneracyError(f"continuum {i} has zero measure in block {block}")
    nodes = part.block_nodes(block)
    local = patch_cell_nodes(part.nf, part.nf)[mask]
    # exact for Q1: cell integral = (h^2/4) * sum of corner values
    cell_sums = u_fine[nodes[local]].sum(axis=1)
    return float(cell_sums.sum() / (4.0 * mask.sum()))


def _block_corner_nodes(part: CoarsePartition) -> np.ndarray:
    n = part.nH + 1
    bx = np.arange(part.nH)
    BX, BY = np.meshgrid(bx, bx)
    n00 = (BY * n + BX).ravel()
    return np.column_stack([n00, n00 + 1, n00 + n, n00 + n + 1])


def reference_averages(fine_series: np.ndarray, mesh: FineMesh,
                       part: CoarsePartition, indicators: IndicatorSet) -> np.ndarray:
    """(nt, N, n_blocks) psi-weighted block averages of the fine solution."""
    from .fem import patch_cell_nodes

    N = indicators.n_continua
    nt = fine_series.shape[0]
    out = np.empty((nt, N, part.n_blocks))
    local = patch_cell_nodes(part.nf, part.nf)
    for b in range(part.n_blocks):
        cells = part.block_cells(b).ravel()
        nodes = part.block_nodes(b)
        vals = fine_series[:, nodes]  # (nt, nn)
        for i in range(N):
            mask = indicators.mask_cells(i)[cells].astype(bool)
            sel = local[mask]
            out[:, i, b] = vals[:, sel].sum(axis=(1, 2)) / (4.0 * mask.sum())
    return out


def coarse_block_means(macro_series: np.ndarray, part: CoarsePartition) -> np.ndarray:
    """(nt, N, n_blocks) block means of coarse Q1 fields given nodal values.

    `macro_series` has shape (nt, N, (nH+1)^2); the block mean of a bilinear
    function is the average of its four corner values.
    """
    corners = _block_corner_nodes(part)
    return macro_series[:, :, corners].mean(axis=3)


def relative_error(macro_series: np.ndarray, fine_series: np.ndarray,
                   mesh: FineMesh, part: CoarsePartition,
                   indicators: IndicatorSet, scheme: str,
                   times: np.ndarray) -> ErrorSeries:
    """Relative block-wise L2 error of coarse averages vs reference averages.

    For each continuum i: root-sum-square over blocks of the difference between
    the coarse block mean of U_i and the psi-weighted block average of the
    fine reference, normalized by the reference's root-sum-square.
    """
    ref = reference_averages(fine_series, mesh, part, indicators)
    coarse = coarse_block_means(macro_series, part)
    nt, N = coarse.shape[:2]
    errors = np.full((nt, N), np.nan)
    undefined = np.zeros(nt, dtype=bool)
    for n in range(nt):
        for i in range(N):
            den = np.sqrt(np.sum(ref[n, i] ** 2))
            if den < 1e-14:
                undefined[n] = True
                continue
            num = np.sqrt(np.sum((coarse[n, i] - ref[n, i]) ** 2))
            errors[n, i] = num / den
    return ErrorSeries(scheme=scheme, times=np.asarray(times), errors=errors,
                       undefined=undefined)


def blowup_detect(norms: np.ndarray) -> int | None:
    """First index with non-finite values or norm above 1e6 x the early maximum."""
    norms = np.asarray(norms, dtype=float)
    ref = np.nanmax(norms[:10]) if norms.size else 0.0
    if not np.isfinite(ref):
        finite = norms[:10][np.isfinite(norms[:10])]
        ref = finite.max() if finite.size else 0.0
    for n, v in enumerate(norms):
        if not np.isfinite(v):
            return n
        if ref > 0 and v > 1e6 * ref:
            return n
    return None


def write_error_csv(series: ErrorSeries, path, H: float, layers: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"e_{i + 1}" for i in range(series.n_continua)]
                   + ["scheme", "H", "l"])
        for n, t in enumerate(series.times):
            row = [repr(float(t))]
            row += [repr(float(series.errors[n, i])) for i in range(series.n_continua)]
            row += [series.scheme, repr(H), layers]
            w.writerow(row)
