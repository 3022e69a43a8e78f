"""Deterministic tiny setups used by the verification suite and the tests."""

from __future__ import annotations

import numpy as np

from .acquisition import AcquisitionGeometry, ring_geometry
from .benchmarks import build_inclusion_model
from .grids import Grid2D, Model
from .helmholtz import DIRICHLET, PMLConfig, assemble, factorize, sampling_operator, \
    source_matrix
from .sensitivity import predicted_data


def oracle_fixture(frequency_hz: float = 22.0):
    """10x10 Dirichlet grid, 3 sources, 5 receivers, one frequency.

    The observed data come from a two-blob perturbed model while the working
    model is the homogeneous background, so the residual is sizeable and the
    second-order Hessian term matters. Everything is deterministic.

    Returns (model, geom, observed, frequency_hz).
    """
    grid = Grid2D(10, 10, 10.0, 10.0)
    background = np.full(grid.n_nodes, 1500.0)
    true_vel = background.copy().reshape(grid.shape)
    true_vel[2:4, 2:4] = 1800.0
    true_vel[6:8, 5:7] = 1250.0
    true_model = Model.from_velocity(grid, true_vel)
    model = Model.from_velocity(grid, background)

    geom = ring_geometry(grid, n_sources=3, n_receivers=5, inset_cells=1)
    op = assemble(true_model, frequency_hz, DIRICHLET)
    fact = factorize(op)
    sampling = sampling_operator(geom, op)
    observed = predicted_data(sampling, fact.solve(source_matrix(geom, op)))
    return model, geom, observed, frequency_hz


def inclusion_small_fixture(n_stations: int = 112, frequency_hz: float = 5.0,
                            pml: PMLConfig = PMLConfig()):
    """51x51 scaled-down inclusion setup (same 2 km x 2 km extent at 40 m).

    Returns (true_model, initial_model, geom, frequency_hz, pml).
    """
    grid = Grid2D(51, 51, 40.0, 40.0)
    true_model, initial, geom = build_inclusion_model(grid, n_stations=n_stations)
    return true_model, initial, geom, frequency_hz, pml


def synthetic_data(true_model: Model, geom: AcquisitionGeometry,
                   frequency_hz: float, pml: PMLConfig) -> np.ndarray:
    """Noise-free observed data for one frequency."""
    op = assemble(true_model, frequency_hz, pml)
    fact = factorize(op)
    sampling = sampling_operator(geom, op)
    return predicted_data(sampling, fact.solve(source_matrix(geom, op)))
