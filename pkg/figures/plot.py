#!/usr/bin/env python3
"""Render figures from solver output files.

Usage:
    plot.py field <field.txt> -o out.png
    plot.py solution <grid.txt> [<grid.txt> ...] -o out.png
    plot.py error-curves <errors.csv> [<errors.csv> ...] -o out.png
    plot.py energy <energy.csv> [<energy.csv> ...] -o out.png

All inputs are plain text: whitespace-separated grids for `field` and
`solution`, CSV files with headers for `error-curves` (columns t, e_1..e_N,
scheme, H, l) and `energy` (columns t, norm_group1, norm_group2, energy).
"""

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("field", "solution", "error-curves", "energy")


class InputError(Exception):
    pass


def load_grid(path):
    try:
        grid = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: cannot read grid: {exc}") from exc
    if grid.size == 0:
        raise InputError(f"{path}: empty grid file")
    return grid


def load_csv(path, required):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"{path}: cannot read: {exc}") from exc
    if not rows:
        raise InputError(f"{path}: no data rows")
    missing = [c for c in required if c not in rows[0]]
    if missing:
        raise InputError(f"{path}: missing columns {missing}")
    return rows


def plot_field(paths, out):
    if len(paths) != 1:
        raise InputError("field takes exactly one grid file")
    grid = load_grid(paths[0])
    if np.any(grid <= 0):
        raise InputError(f"{paths[0]}: coefficient values must be positive")
    log = grid.max() / grid.min() > 50.0
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    data = np.log10(grid) if log else grid
    im = ax.imshow(data, origin="lower", extent=(0, 1, 0, 1), cmap="viridis")
    fig.colorbar(im, ax=ax,
                 label=r"$\log_{10}\kappa$" if log else r"$\kappa$")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(Path(paths[0]).stem)
    fig.tight_layout()
    fig.savefig(out, dpi=150)


def plot_solution(paths, out):
    grids = [load_grid(p) for p in paths]
    fig, axes = plt.subplots(1, len(grids),
                             figsize=(4.6 * len(grids), 4.0), squeeze=False)
    vmin = min(g.min() for g in grids)
    vmax = max(g.max() for g in grids)
    for ax, grid, path in zip(axes[0], grids, paths):
        im = ax.imshow(grid, origin="lower", extent=(0, 1, 0, 1),
                       cmap="RdBu_r", vmin=vmin, vmax=vmax)
        ax.set_title(Path(path).stem)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    fig.colorbar(im, ax=list(axes[0]), shrink=0.85)
    fig.savefig(out, dpi=150)


def plot_error_curves(paths, out):
    n_continua = None
    series = []  # (scheme, t, errors[n, i])
    for path in paths:
        rows = load_csv(path, ["t", "e_1", "scheme"])
        cols = sorted((c for c in rows[0] if c.startswith("e_")),
                      key=lambda c: int(c[2:]))
        if n_continua is None:
            n_continua = len(cols)
        elif len(cols) != n_continua:
            raise InputError(f"{path}: {len(cols)} error columns, expected "
                             f"{n_continua} as in {paths[0]}")
        t = np.array([float(r["t"]) for r in rows])
        e = np.array([[float(r[c]) for c in cols] for r in rows])
        series.append((rows[0]["scheme"], t, e))

    fig, axes = plt.subplots(1, n_continua,
                             figsize=(4.4 * n_continua, 3.6), squeeze=False)
    for i, ax in enumerate(axes[0]):
        for scheme, t, e in series:
            mask = np.isfinite(e[:, i])
            ax.plot(t[mask], e[mask, i], label=scheme)
        ax.set_xlabel("t")
        ax.set_ylabel(f"relative error, continuum {i + 1}")
        ax.grid(True, alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)


def plot_energy(paths, out):
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    for path in paths:
        rows = load_csv(path, ["t", "energy"])
        t = np.array([float(r["t"]) for r in rows])
        e = np.array([float(r["energy"]) for r in rows])
        label = Path(path).stem
        if label.startswith("energy_"):
            label = label[len("energy_"):]
        mask = np.isfinite(e)
        ax.plot(t[mask], e[mask], label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("discrete energy")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("inputs", nargs="+", metavar="file")
    parser.add_argument("-o", "--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        {"field": plot_field, "solution": plot_solution,
         "error-curves": plot_error_curves, "energy": plot_energy}[
             args.kind](args.inputs, args.out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
