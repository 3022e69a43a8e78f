"""Benchmark model builders: circular-inclusion and near-surface concrete.

Both return (true model, initial homogeneous model, acquisition geometry).
Anomaly membership is decided by node-center coordinates.
"""

from __future__ import annotations

import numpy as np

from .acquisition import AcquisitionGeometry, ring_geometry
from .errors import ConfigurationError
from .grids import Grid2D, Model


def build_inclusion_model(
    grid: Grid2D | None = None,
    *,
    background_velocity: float = 1500.0,
    anomaly_velocity: float = 4500.0,
    disk_centers: tuple[tuple[float, float], ...] = ((700.0, 700.0), (1300.0, 1300.0)),
    disk_radius: float = 200.0,
    n_stations: int = 112,
) -> tuple[Model, Model, AcquisitionGeometry]:
    """Two high-velocity disks in a homogeneous background.

    Defaults: 2.0 km x 2.0 km at 20 m spacing (101x101 nodes), disks of
    4.5 km/s in a 1.5 km/s background, 112 co-located sources/receivers on a
    closed ring one cell inside the boundary.
    """
    if grid is None:
        grid = Grid2D(101, 101, 20.0, 20.0)
    vel = np.full(grid.n_nodes, background_velocity, dtype=np.float64)
    x, z = grid.node_coords()
    for (cx, cz) in disk_centers:
        inside = (x - cx) ** 2 + (z - cz) ** 2 <= disk_radius ** 2
        if disk_radius > 0 and not np.any(inside):
            raise ConfigurationError(
                f"grid {grid.nx}x{grid.nz} at ({grid.dx}, {grid.dz}) m is too coarse "
                f"to contain the disk at ({cx}, {cz}) with radius {disk_radius}")
        vel[inside] = anomaly_velocity
    true_model = Model.from_velocity(grid, vel)
    initial = Model.from_velocity(grid, np.full(grid.n_nodes, background_velocity))
    geom = ring_geometry(grid, n_stations)
    return true_model, initial, geom


def build_concrete_model(
    grid: Grid2D | None = None,
    *,
    background_velocity: float = 300.0,
    block_velocity: float = 4000.0,
    lower_block: tuple[float, float, float, float] = (6.0, 9.0, 1.5, 2.1),
    upper_block: tuple[float, float, float, float] = (6.75, 8.25, 0.9, 1.5),
    n_stations: int = 120,
) -> tuple[Model, Model, AcquisitionGeometry]:
    """Two stacked high-velocity rectangular blocks near the surface.

    Defaults: 15 m x 3 m at 0.15 m spacing (101x21 nodes), 4000 m/s blocks in
    a 300 m/s background, 120 co-located sources/receivers on a closed ring.
    Blocks are (x_min, x_max, z_min, z_max) in meters, centered horizontally:
    lower 3.0 m x 0.6 m, upper 1.5 m x 0.6 m with its top at 0.9 m depth.
    """
    if grid is None:
        grid = Grid2D(101, 21, 0.15, 0.15)
    vel = np.full(grid.n_nodes, background_velocity, dtype=np.float64)
    x, z = grid.node_coords()
    for (x0, x1, z0, z1) in (lower_block, upper_block):
        inside = (x >= x0) & (x <= x1) & (z >= z0) & (z <= z1)
        if not np.any(inside):
            raise ConfigurationError(
                f"grid {grid.nx}x{grid.nz} at ({grid.dx}, {grid.dz}) m is too coarse "
                f"to contain the block ({x0}, {x1}) x ({z0}, {z1})")
        vel[inside] = block_velocity
    true_model = Model.from_velocity(grid, vel)
    initial = Model.from_velocity(grid, np.full(grid.n_nodes, background_velocity))
    geom = ring_geometry(grid, n_stations)
    return true_model, initial, geom
