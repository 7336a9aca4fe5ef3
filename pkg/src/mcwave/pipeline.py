"""Config-driven experiment orchestration: field -> basis -> split -> run -> CSVs."""

from __future__ import annotations

import configparser
import csv
import json
import time
from dataclasses import dataclass, field as dfield, asdict
from pathlib import Path

import numpy as np

from . import analysis, coarse, splitting
from .cell_problems import cached_cell_problems, solve_all_cell_problems
from .effective import compute_effective, write_tensor_csv
from .errors import ConfigurationError
from .fem import fine_wave_reference
from .field import (CoefficientField, Inclusion, IndicatorSet, indicators_from_values,
                    layered_field, load_field, point_field)
from .grid import build_meshes, default_layers

VALID_SCHEMES = ("implicit", "explicit", "scheme1", "scheme2")
VALID_SPLITTING = ("eigendecomposition", "index-partition", "none")


def default_source(x, y, t):
    """Gaussian source centered at (0.5, 0.5), decaying in time."""
    return 1000.0 * np.exp(-40.0 * ((x - 0.5) ** 2 + (y - 0.5) ** 2)) * np.exp(-40.0 * t)


@dataclass
class ExperimentConfig:
    nx: int = 200
    nH: int = 10
    layers: int | None = None          # default: ceil(-2 ln H)
    bc: str = "natural"
    tau: float = 1e-3
    T: float = 0.05
    schemes: tuple = ("implicit", "scheme1", "scheme2")
    splitting_mode: str = "eigendecomposition"
    threshold: float = 10.0
    i0: int | None = None              # only for index-partition mode
    source: str = "default"            # "default" | "none"
    seed: int = 0
    cache: bool = False
    cache_dir: str = ".mcwave_cache"
    threads: int = 1
    mass_lumping: bool = False
    plan_block_mode: str = "representative"  # or "median"
    dump_tensors: bool = False
    # field generation
    generator: str = "layered"         # "layered" | "point" | "file"
    layer_values: tuple = (1.0, 1000.0)
    n_layers: int = 40
    field_path: str | None = None
    inclusions: tuple = ()             # Inclusion objects for "point"
    background: float = 1.0
    continua_order: tuple | None = None  # kappa values, one continuum each
    mixing: tuple | None = None          # index tuples for mixed continua
    name: str = "custom"

    def validate(self):
        if self.tau <= 0 or self.T < self.tau:
            raise ConfigurationError("need tau > 0 and T >= tau")
        if not self.schemes:
            raise ConfigurationError("scheme list must be nonempty")
        for s in self.schemes:
            if s not in VALID_SCHEMES:
                raise ConfigurationError(f"unknown scheme {s!r}")
        if self.splitting_mode not in VALID_SPLITTING:
            raise ConfigurationError(f"unknown splitting mode {self.splitting_mode!r}")
        if self.mass_lumping:
            raise ConfigurationError("mass_lumping is recognized but not implemented")
        return self

    @property
    def effective_layers(self) -> int:
        return self.layers if self.layers is not None else default_layers(1.0 / self.nH)


def _tile_inclusions(value: float, lo: float, hi: float, tiles: int = 20):
    """One rectangular inclusion per (1/tiles)-sized tile, at fractions [lo, hi)."""
    w = 1.0 / tiles
    out = []
    for ty in range(tiles):
        for tx in range(tiles):
            out.append(Inclusion(value=value, shape="rect",
                                 params=(tx * w + lo * w, ty * w + lo * w,
                                         tx * w + hi * w, ty * w + hi * w)))
    return tuple(out)


def _stripe_inclusions(value: float, period: float, thickness: float,
                       offset: float):
    """Horizontal full-width stripes of `value` repeating with `period`."""
    n = int(round(1.0 / period))
    return tuple(
        Inclusion(value=value, shape="rect",
                  params=(0.0, k * period + offset, 1.0,
                          k * period + offset + thickness))
        for k in range(n))


def _banded_inclusions(period: float = 0.1, medium: float = 4.0,
                       high: float = 1000.0):
    """Periodic rows: a connected medium band plus a row of nearly touching
    high-value rectangles, leaving thin low-value channels in between."""
    out = []
    n = int(round(1.0 / period))
    for k in range(n):
        y0 = k * period
        out.append(Inclusion(value=medium, shape="rect",
                             params=(0.0, y0, 1.0, y0 + 0.3 * period)))
        for j in range(n):
            out.append(Inclusion(value=high, shape="rect",
                                 params=(j * period + 0.05 * period,
                                         y0 + 0.35 * period,
                                         j * period + 0.95 * period,
                                         y0 + 0.85 * period)))
    return tuple(out)


def builtin_config(name: str, nx: int = 200, nH: int = 10) -> ExperimentConfig:
    base = dict(nx=nx, nH=nH, name=name)
    if name == "example1":
        return ExperimentConfig(
            generator="point", background=1.0,
            inclusions=_stripe_inclusions(1000.0, period=0.05,
                                          thickness=0.01, offset=0.02),
            continua_order=(1.0, 1000.0), **base)
    if name == "example2":
        return ExperimentConfig(generator="point", background=1.0,
                                inclusions=_tile_inclusions(1000.0, 0.3, 0.7),
                                continua_order=(1.0, 1000.0), **base)
    if name == "example3":
        return ExperimentConfig(
            generator="point", background=1.0,
            inclusions=(_stripe_inclusions(10.0, period=0.1,
                                           thickness=0.03, offset=0.01)
                        + _stripe_inclusions(1000.0, period=0.1,
                                             thickness=0.02, offset=0.06)),
            continua_order=(1.0, 1000.0, 10.0), **base)
    if name == "example4":
        return ExperimentConfig(generator="point", background=1.0,
                                inclusions=_banded_inclusions(),
                                continua_order=(1.0, 1000.0, 4.0),
                                mixing=((0, 1), (0, 2), (1, 2)), **base)
    raise ConfigurationError(f"unknown builtin experiment {name!r}")


def _get(cp, section, key, cast, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    if raw == "":
        return default
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigurationError(
            f"config [{section}] {key} = {raw!r}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigurationError(f"config file {path} not found or empty")

    def floats(raw):
        return tuple(float(v) for v in raw.replace(",", " ").split())

    def mix(raw):
        return tuple(tuple(int(i) for i in grp.split("+")) for grp in raw.split(","))

    cfg = ExperimentConfig(
        nx=_get(cp, "grid", "nx", int, 200),
        nH=_get(cp, "grid", "nH", int, 10),
        layers=_get(cp, "grid", "l", int, None),
        bc=_get(cp, "run", "bc", str, "natural"),
        tau=_get(cp, "time", "tau", float, 1e-3),
        T=_get(cp, "time", "T", float, 0.05),
        schemes=_get(cp, "run", "schemes",
                     lambda r: tuple(s.strip() for s in r.split(",")),
                     ("implicit", "scheme1", "scheme2")),
        splitting_mode=_get(cp, "run", "splitting", str, "eigendecomposition"),
        threshold=_get(cp, "run", "threshold", float, 10.0),
        i0=_get(cp, "run", "i0", int, None),
        source=_get(cp, "run", "source", str, "default"),
        seed=_get(cp, "run", "seed", int, 0),
        cache=_get(cp, "run", "cache", lambda r: r.lower() in ("1", "true", "yes"), False),
        threads=_get(cp, "run", "threads", int, 1),
        mass_lumping=_get(cp, "run", "mass_lumping",
                          lambda r: r.lower() in ("1", "true", "yes"), False),
        generator=_get(cp, "field", "generator", str, "layered"),
        layer_values=_get(cp, "field", "values", floats, (1.0, 1000.0)),
        n_layers=_get(cp, "field", "n_layers", int, 40),
        field_path=_get(cp, "field", "path", str, None),
        background=_get(cp, "field", "background", float, 1.0),
        continua_order=_get(cp, "continua", "order", floats, None),
        mixing=_get(cp, "continua", "mixing", mix, None),
        name=_get(cp, "run", "name", str, Path(path).stem),
    )
    return cfg.validate()


def build_field(cfg: ExperimentConfig, mesh) -> CoefficientField:
    if cfg.generator == "layered":
        return layered_field(mesh, cfg.n_layers, cfg.layer_values)
    if cfg.generator == "point":
        return point_field(mesh, cfg.background, cfg.inclusions)
    if cfg.generator == "file":
        if cfg.field_path is None:
            raise ConfigurationError("field generator 'file' requires a path")
        return load_field(cfg.field_path, mesh)
    raise ConfigurationError(f"unknown field generator {cfg.generator!r}")


def build_indicators(cfg: ExperimentConfig, fld: CoefficientField,
                     part) -> IndicatorSet:
    order = cfg.continua_order
    if order is None:
        order = tuple(np.unique(fld.values))
    classes = [(lambda k, v=v: np.isclose(k, v)) for v in order]
    return indicators_from_values(fld, part, classes, mixing=cfg.mixing)


@dataclass
class RunResult:
    config: ExperimentConfig
    mesh: object
    part: object
    fld: CoefficientField
    indicators: IndicatorSet
    basis: object
    tensors: object
    plan: splitting.SplittingPlan
    system: coarse.BlockSystem
    stability: splitting.StabilityReport
    trajectories: dict          # scheme -> coarse.Trajectory
    macro: dict                 # scheme -> (nt, N, (nH+1)^2) original-continua series
    errors: dict                # scheme -> analysis.ErrorSeries (may be empty)
    blowups: dict               # scheme -> first divergent step or None
    fine_series: np.ndarray | None
    timings: dict = dfield(default_factory=dict)


def _macro_series(system: coarse.BlockSystem, states: np.ndarray,
                  plan: splitting.SplittingPlan) -> np.ndarray:
    """Map DOF trajectories to original-continuum nodal series U = V^T U_hat."""
    part = system.part
    N = plan.n_continua
    n_nodes = (part.nH + 1) ** 2
    interior = np.nonzero(system.interior_pos >= 0)[0]
    k1, k2 = system.group1.size, system.group2.size
    node_of = np.empty(system.n_dofs, dtype=int)
    cont_of = np.empty(system.n_dofs, dtype=int)
    for p, node in enumerate(interior):
        for g, i in enumerate(system.group1):
            node_of[p * k1 + g], cont_of[p * k1 + g] = node, i
        for g, i in enumerate(system.group2):
            d = system.n1 + p * k2 + g
            node_of[d], cont_of[d] = node, i
    hat = np.zeros((states.shape[0], N, n_nodes))
    hat[:, cont_of, node_of] = states
    return np.einsum("ij,tin->tjn", plan.vectors, hat)


def run_experiment(cfg: ExperimentConfig, expect_blowup: bool = False) -> RunResult:
    cfg.validate()
    timings = {}
    t0 = time.perf_counter()
    mesh, part = build_meshes(cfg.nx, cfg.nH)
    fld = build_field(cfg, mesh)
    ind = build_indicators(cfg, fld, part)
    timings["setup"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if cfg.cache:
        basis = cached_cell_problems(cfg.cache_dir, mesh, part, fld, ind,
                                     cfg.effective_layers, bc=cfg.bc,
                                     threads=cfg.threads)
    else:
        basis = solve_all_cell_problems(mesh, part, fld, ind, cfg.effective_layers,
                                        bc=cfg.bc, threads=cfg.threads)
    timings["cell_problems"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tensors = compute_effective(part, basis, fld, mesh)
    N = ind.n_continua
    if cfg.splitting_mode == "eigendecomposition":
        plan = splitting.make_plan(tensors, cfg.threshold, mode=cfg.plan_block_mode)
        run_basis = splitting.recombine_basis(basis, plan)
    elif cfg.splitting_mode == "index-partition":
        i0 = cfg.i0 if cfg.i0 is not None else 1
        plan = splitting.identity_plan(N, i0)
        run_basis = basis
    else:
        plan = splitting.identity_plan(N, 0)
        run_basis = basis
    db = coarse.build_downscaled_basis(run_basis, part)
    run_tensors = (tensors if run_basis is basis
                   else compute_effective(part, run_basis, fld, mesh))
    system = coarse.assemble_block_forms(run_tensors, part,
                                         plan.implicit_indices, plan.explicit_indices)
    gamma = splitting.gamma_constant(system.M11, system.M12, system.M22)
    stability = splitting.stability_bounds(
        system, gamma, plan=plan,
        coarse_inverse_constant=splitting.coarse_inverse_constant(cfg.nH),
        H=part.H)
    timings["upscaling"] = time.perf_counter() - t0

    n_steps = int(round(cfg.T / cfg.tau))
    src = default_source if cfg.source == "default" else None
    load = (lambda t: coarse.assemble_load(db, system, mesh, src, t)) if src else None

    fine_series = None
    if src is not None:
        t0 = time.perf_counter()
        _, fine_series = fine_wave_reference(mesh, fld, src, None, None, cfg.tau, cfg.T)
        timings["fine_reference"] = time.perf_counter() - t0

    trajectories, macro, errors, blowups = {}, {}, {}, {}
    times = np.arange(n_steps + 1) * cfg.tau
    for scheme in cfg.schemes:
        t0 = time.perf_counter()
        traj = coarse.integrate(system, scheme, cfg.tau, n_steps, load=load)
        trajectories[scheme] = traj
        norms = np.linalg.norm(np.nan_to_num(traj.states, nan=np.inf,
                                             posinf=np.inf, neginf=-np.inf), axis=1)
        blow = traj.diverged_at
        if blow is None:
            blow = analysis.blowup_detect(norms)
        blowups[scheme] = blow
        if blow is None:
            macro[scheme] = _macro_series(system, traj.states, plan)
            if fine_series is not None:
                errors[scheme] = analysis.relative_error(
                    macro[scheme], fine_series, mesh, part, ind, scheme, times)
        timings[f"scheme_{scheme}"] = time.perf_counter() - t0

    return RunResult(config=cfg, mesh=mesh, part=part, fld=fld, indicators=ind,
                     basis=basis, tensors=tensors, plan=plan, system=system,
                     stability=stability, trajectories=trajectories, macro=macro,
                     errors=errors, blowups=blowups, fine_series=fine_series,
                     timings=timings)


def write_artifacts(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    plan = result.plan

    with open(out / "plan.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        N = plan.n_continua
        w.writerow(["i", "lambda", "explicit"] + [f"v_{j + 1}" for j in range(N)])
        for i in range(N):
            w.writerow([i + 1, repr(float(plan.eigenvalues[i])),
                        int(i < plan.i0)]
                       + [repr(float(v)) for v in plan.vectors[i]])

    st = result.stability
    with open(out / "stability.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "tau_max_scheme1", "tau_max_scheme2",
                    "tau_estimate_scheme1", "tau_estimate_scheme2", "C1"])
        w.writerow([repr(st.gamma), repr(st.tau_max_scheme1), repr(st.tau_max_scheme2),
                    repr(st.tau_estimate_scheme1), repr(st.tau_estimate_scheme2),
                    repr(st.inverse_inequality_constant)])

    for scheme, traj in result.trajectories.items():
        with open(out / f"energy_{scheme}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "norm_group1", "norm_group2", "energy"])
            for n in range(traj.times.size - 1):
                u1, u2 = result.system.split(traj.states[n])
                w.writerow([repr(float(traj.times[n])),
                            repr(float(np.linalg.norm(u1))),
                            repr(float(np.linalg.norm(u2))),
                            repr(float(traj.energies[n]))])

    for scheme, series in result.errors.items():
        analysis.write_error_csv(series, out / f"errors_{scheme}.csv",
                                 result.part.H, cfg.effective_layers)

    result.fld.save(out / "field.txt")
    if cfg.dump_tensors:
        write_tensor_csv(result.tensors, out / "tensors.csv")

    manifest = {
        "config": {k: v for k, v in asdict(cfg).items() if k != "inclusions"},
        "H": result.part.H,
        "l": cfg.effective_layers,
        "tau": cfg.tau,
        "gamma": result.stability.gamma,
        "lambda": [float(v) for v in plan.eigenvalues],
        "i0": plan.i0,
        "tau_max_scheme1": st.tau_max_scheme1,
        "tau_max_scheme2": st.tau_max_scheme2,
        "blowups": {k: (None if v is None else int(v))
                    for k, v in result.blowups.items()},
        "timings": result.timings,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    return out
