"""Source/receiver geometry on grid nodes and the geometry file format."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grids import Grid2D


@dataclass(frozen=True)
class AcquisitionGeometry:
    """Sources and receivers snapped to grid nodes of the physical grid.

    ``source_nodes`` / ``receiver_nodes`` are (n, 2) int arrays of (i, j)
    node indices; ``source_amplitudes`` is a complex amplitude per source.
    Node positions must be distinct within each station set so that sampling
    followed by injection touches exactly the receiver nodes.
    """

    grid: Grid2D
    source_nodes: np.ndarray = field(repr=False)
    receiver_nodes: np.ndarray = field(repr=False)
    source_amplitudes: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        src = np.atleast_2d(np.asarray(self.source_nodes, dtype=np.intp))
        rec = np.atleast_2d(np.asarray(self.receiver_nodes, dtype=np.intp))
        for name, nodes in (("source", src), ("receiver", rec)):
            if nodes.ndim != 2 or nodes.shape[1] != 2 or nodes.shape[0] == 0:
                raise ConfigurationError(f"{name} nodes must be a nonempty (n, 2) array")
            if (np.any(nodes[:, 0] < 0) or np.any(nodes[:, 0] >= self.grid.nx)
                    or np.any(nodes[:, 1] < 0) or np.any(nodes[:, 1] >= self.grid.nz)):
                raise ConfigurationError(f"{name} nodes fall outside the physical grid")
            flat = self.grid.flat_index(nodes[:, 0], nodes[:, 1])
            if np.unique(flat).size != flat.size:
                raise ConfigurationError(f"{name} nodes must be distinct after snapping")
        amp = self.source_amplitudes
        if amp is None:
            amp = np.ones(src.shape[0], dtype=np.complex128)
        amp = np.asarray(amp, dtype=np.complex128).ravel()
        if amp.size != src.shape[0]:
            raise ConfigurationError("one amplitude per source required")
        object.__setattr__(self, "source_nodes", src)
        object.__setattr__(self, "receiver_nodes", rec)
        object.__setattr__(self, "source_amplitudes", amp)

    @property
    def n_sources(self) -> int:
        return self.source_nodes.shape[0]

    @property
    def n_receivers(self) -> int:
        return self.receiver_nodes.shape[0]

    def source_positions(self) -> np.ndarray:
        """(n, 2) array of (x, z) source coordinates in meters."""
        return self.source_nodes * np.array([self.grid.dx, self.grid.dz])

    def receiver_positions(self) -> np.ndarray:
        return self.receiver_nodes * np.array([self.grid.dx, self.grid.dz])


def ring_nodes(grid: Grid2D, count: int, inset_cells: int = 1) -> np.ndarray:
    """Place ``count`` stations on the rectangle ``inset_cells`` inside the
    grid boundary, equally spaced by perimeter arc length, snapped to nodes.

    Returns an (count, 2) array of distinct (i, j) node indices ordered by
    increasing arc length from the top-left corner of the ring.
    """
    if count < 1:
        raise ConfigurationError("ring needs at least one station")
    i0, j0 = inset_cells, inset_cells
    i1, j1 = grid.nx - 1 - inset_cells, grid.nz - 1 - inset_cells
    if i1 - i0 < 1 or j1 - j0 < 1:
        raise ConfigurationError("grid too small for the requested ring inset")
    x0, z0 = i0 * grid.dx, j0 * grid.dz
    x1, z1 = i1 * grid.dx, j1 * grid.dz
    w, h = x1 - x0, z1 - z0
    perim = 2.0 * (w + h)

    nodes = []
    for k in range(count):
        s = perim * k / count
        if s < w:                       # top edge, left -> right
            x, z = x0 + s, z0
        elif s < w + h:                 # right edge, top -> bottom
            x, z = x1, z0 + (s - w)
        elif s < 2 * w + h:             # bottom edge, right -> left
            x, z = x1 - (s - w - h), z1
        else:                           # left edge, bottom -> top
            x, z = x0, z1 - (s - 2 * w - h)
        nodes.append((int(round(x / grid.dx)), int(round(z / grid.dz))))
    nodes = np.asarray(nodes, dtype=np.intp)
    flat = grid.flat_index(nodes[:, 0], nodes[:, 1])
    if np.unique(flat).size != flat.size:
        raise ConfigurationError(
            f"{count} ring stations collide after snapping on a "
            f"{grid.nx}x{grid.nz} grid; reduce the station count")
    return nodes


def ring_geometry(grid: Grid2D, n_sources: int, n_receivers: int | None = None,
                  inset_cells: int = 1) -> AcquisitionGeometry:
    """Closed-ring acquisition just inside the grid boundary.

    Receivers are co-located with sources when ``n_receivers`` is None or
    equal to ``n_sources``; otherwise they get their own equal-arc ring.
    Sources carry unit complex amplitude.
    """
    src = ring_nodes(grid, n_sources, inset_cells)
    if n_receivers is None or n_receivers == n_sources:
        rec = src.copy()
    else:
        rec = ring_nodes(grid, n_receivers, inset_cells)
    return AcquisitionGeometry(grid, src, rec)


def save_geometry_file(path, geom: AcquisitionGeometry) -> None:
    """Write one ``S|R x_meters z_meters`` line per station."""
    with open(path, "w") as fh:
        for (x, z) in geom.source_positions():
            fh.write(f"S {x:.17g} {z:.17g}\n")
        for (x, z) in geom.receiver_positions():
            fh.write(f"R {x:.17g} {z:.17g}\n")


def load_geometry_file(path, grid: Grid2D) -> AcquisitionGeometry:
    """Read a geometry file; positions must sit on nodes of ``grid``."""
    src, rec = [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3 or parts[0] not in ("S", "R"):
                raise ConfigurationError(f"{path}:{ln}: malformed station line {line!r}")
            x, z = float(parts[1]), float(parts[2])
            fi, fj = x / grid.dx, z / grid.dz
            i, j = int(round(fi)), int(round(fj))
            if abs(fi - i) > 1e-6 or abs(fj - j) > 1e-6:
                raise ConfigurationError(
                    f"{path}:{ln}: station ({x}, {z}) is not on a grid node")
            (src if parts[0] == "S" else rec).append((i, j))
    if not src or not rec:
        raise ConfigurationError(f"{path}: need at least one source and one receiver")
    return AcquisitionGeometry(grid, np.asarray(src), np.asarray(rec))
