"""Regular 2D grids, squared-slowness models, and the velocity grid file format.

Conventions used throughout the package:

* x is horizontal (``nx`` nodes, spacing ``dx``), z is depth (``nz`` nodes,
  spacing ``dz``).
* Fields are stored flat in row-major order with depth-major rows:
  node (i, j) lives at flat index ``j*nx + i``.
* Models hold squared slowness m = 1/v^2 (s^2/m^2); file I/O speaks
  velocity (m/s).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Grid2D:
    """Regular rectangular grid.

    Attributes:
        nx: number of horizontal nodes (>= 3)
        nz: number of depth nodes (>= 3)
        dx: horizontal node spacing in meters (> 0)
        dz: depth node spacing in meters (> 0)
    """

    nx: int
    nz: int
    dx: float
    dz: float

    def __post_init__(self):
        if self.nx < 3 or self.nz < 3:
            raise ConfigurationError(
                f"grid needs at least 3x3 nodes, got {self.nx}x{self.nz}")
        if self.dx <= 0 or self.dz <= 0:
            raise ConfigurationError(
                f"grid spacings must be positive, got dx={self.dx}, dz={self.dz}")

    @property
    def shape(self) -> tuple[int, int]:
        """(nz, nx): one row per constant-depth line."""
        return (self.nz, self.nx)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.nz

    @property
    def width(self) -> float:
        return (self.nx - 1) * self.dx

    @property
    def depth(self) -> float:
        return (self.nz - 1) * self.dz

    def flat_index(self, i, j):
        """Flat index of node (i, j); accepts scalars or arrays."""
        return np.asarray(j) * self.nx + np.asarray(i)

    def node_x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    def node_z(self) -> np.ndarray:
        return np.arange(self.nz) * self.dz

    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat (x, z) coordinate arrays in node order."""
        xx, zz = np.meshgrid(self.node_x(), self.node_z())
        return xx.ravel(), zz.ravel()


@dataclass
class Model:
    """Squared-slowness field on a Grid2D.

    ``values`` is a flat float64 array of length ``grid.n_nodes`` holding
    1/v^2 per node; all entries must be strictly positive and finite.
    """

    grid: Grid2D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).ravel()
        if vals.size != self.grid.n_nodes:
            raise ConfigurationError(
                f"model has {vals.size} values for a grid of {self.grid.n_nodes} nodes")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0.0):
            raise ValueError("squared slowness must be finite and strictly positive")
        self.values = vals

    @classmethod
    def from_velocity(cls, grid: Grid2D, velocity) -> "Model":
        return cls(grid, velocity_to_slowness_squared(velocity))

    def velocity(self) -> np.ndarray:
        """Velocity in m/s, flat node order."""
        return slowness_squared_to_velocity(self.values)

    def as_image(self) -> np.ndarray:
        """Values reshaped to (nz, nx)."""
        return self.values.reshape(self.grid.shape)

    def copy(self) -> "Model":
        return Model(self.grid, self.values.copy())

    def with_values(self, values) -> "Model":
        return Model(self.grid, np.asarray(values, dtype=np.float64))


def velocity_to_slowness_squared(velocity) -> np.ndarray:
    """Pointwise v -> 1/v^2. Raises ValueError for nonpositive velocities."""
    v = np.asarray(velocity, dtype=np.float64)
    if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
        raise ValueError("velocity must be finite and strictly positive")
    return (1.0 / (v * v)).ravel()


def slowness_squared_to_velocity(values) -> np.ndarray:
    """Pointwise m -> 1/sqrt(m), the inverse of velocity_to_slowness_squared."""
    m = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(m)) or np.any(m <= 0.0):
        raise ValueError("squared slowness must be finite and strictly positive")
    return (1.0 / np.sqrt(m)).ravel()


def velocity_to_model(grid: Grid2D, velocity) -> Model:
    return Model.from_velocity(grid, velocity)


def model_to_velocity(model: Model) -> np.ndarray:
    return model.velocity()


def save_grid_file(path, grid: Grid2D, values) -> None:
    """Write a scalar node field in the text grid format.

    First line: ``nx nz dx dz``. Then nz lines of nx decimal values, one line
    per constant-depth row. Values are written with 17 significant digits so
    float64 round-trips exactly.
    """
    img = np.asarray(values, dtype=np.float64).reshape(grid.shape)
    with open(path, "w") as fh:
        fh.write(f"{grid.nx} {grid.nz} {grid.dx:.17g} {grid.dz:.17g}\n")
        for row in img:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_grid_file(path) -> tuple[Grid2D, np.ndarray]:
    """Read a text grid file; returns (grid, flat float64 values)."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise ConfigurationError(f"{path}: malformed grid header {header!r}")
        nx, nz = int(header[0]), int(header[1])
        dx, dz = float(header[2]), float(header[3])
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if data.shape != (nz, nx):
        raise ConfigurationError(
            f"{path}: expected {nz} rows x {nx} values, got {data.shape}")
    return Grid2D(nx, nz, dx, dz), data.ravel()


def save_velocity_model(path, model: Model) -> None:
    """Write a model as a velocity (m/s) grid file."""
    save_grid_file(path, model.grid, model.velocity())


def load_velocity_model(path) -> Model:
    """Read a velocity (m/s) grid file as a Model."""
    grid, vel = load_grid_file(path)
    return Model.from_velocity(grid, vel)
