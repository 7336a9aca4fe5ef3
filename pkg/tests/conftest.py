"""Shared fixtures.

The session-scoped pipeline runs are the expensive part of the suite
(tens of seconds each); every acceptance criterion that needs a full
experiment shares them instead of re-running the pipeline.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from mcwave import pipeline
from mcwave.field import Inclusion
from mcwave.grid import build_meshes

THREADS = 4


@pytest.fixture(scope="session")
def ex1_run():
    """Two-continuum banded field, H=1/10, all three split schemes + implicit."""
    cfg = pipeline.builtin_config("example1", nx=200, nH=10)
    cfg.threads = THREADS
    cfg.schemes = ("implicit", "scheme1", "scheme2")
    return pipeline.run_experiment(cfg)


@pytest.fixture(scope="session")
def ex1_run_h20():
    cfg = pipeline.builtin_config("example1", nx=200, nH=20)
    cfg.threads = THREADS
    cfg.schemes = ("implicit",)
    return pipeline.run_experiment(cfg)


@pytest.fixture(scope="session")
def ex3_run():
    cfg = pipeline.builtin_config("example3", nx=200, nH=10)
    cfg.threads = THREADS
    cfg.schemes = ("scheme1",)
    cfg.source = "none"
    return pipeline.run_experiment(cfg)


@pytest.fixture(scope="session")
def ex4_run():
    cfg = pipeline.builtin_config("example4", nx=200, nH=10)
    cfg.threads = THREADS
    cfg.schemes = ("scheme1",)
    cfg.source = "none"
    return pipeline.run_experiment(cfg)


@pytest.fixture(scope="session")
def ex1_contrast_1e4_run():
    """Example-1 geometry at contrast 1e4, all four schemes with source.

    At this contrast the fully explicit scheme's CFL limit drops below
    tau=1e-3 while the split schemes keep their contrast-independent bound.
    """
    base = pipeline.builtin_config("example1", nx=200, nH=10)
    incs = tuple(Inclusion(value=1e4, shape=i.shape, params=i.params)
                 for i in base.inclusions)
    cfg = dataclasses.replace(base, inclusions=incs,
                              continua_order=(1.0, 1e4),
                              schemes=("implicit", "scheme1", "scheme2",
                                       "explicit"),
                              threads=THREADS)
    return pipeline.run_experiment(cfg, expect_blowup=True)


@pytest.fixture(scope="session")
def ex1_contrast_1e5_run():
    """Example-1 geometry with the band value raised from 1e3 to 1e5."""
    base = pipeline.builtin_config("example1", nx=200, nH=10)
    incs = tuple(Inclusion(value=1e5, shape=i.shape, params=i.params)
                 for i in base.inclusions)
    cfg = dataclasses.replace(base, inclusions=incs,
                              continua_order=(1.0, 1e5),
                              schemes=("scheme1",), source="none",
                              threads=THREADS)
    return pipeline.run_experiment(cfg)


@pytest.fixture()
def mesh16():
    """16x16 fine cells over 2x2 coarse blocks: the small oracle testbed."""
    return build_meshes(16, 2)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
