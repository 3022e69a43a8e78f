"""Frequency-domain acoustic wave operator on a padded grid.

The operator is A(m) = -omega^2 diag(m) - Lap assembled with a 5-point
stencil. Absorbing boundaries use complex coordinate stretching in a collar
of ``pml.width`` cells around the physical grid: with per-axis stretch
factors s_x, s_z the stiffness term becomes
D_x^T diag(s_z/s_x) D_x + D_z^T diag(s_x/s_z) D_z and the mass term
-omega^2 m s_x s_z, which keeps the matrix complex symmetric (A^T = A)
by construction. The collar model is extended by edge replication. The
outer boundary is Dirichlet; with ``width=0`` the operator degenerates to
the plain Dirichlet 5-point discretization used by the oracle fixtures.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .acquisition import AcquisitionGeometry
from .errors import NumericalError
from .grids import Grid2D, Model, save_grid_file


@dataclass(frozen=True)
class PMLConfig:
    """Absorbing-collar settings.

    ``width`` is the collar thickness in cells (0 disables padding entirely);
    ``strength`` is the dimensionless damping scale: the decay rate ramps
    quadratically from 0 at the physical edge to strength * v_max / L_collar.
    """

    width: int = 10
    strength: float = 10.0


DIRICHLET = PMLConfig(width=0, strength=0.0)


@dataclass
class HelmholtzOperator:
    """Assembled discrete wave operator at one frequency."""

    grid: Grid2D
    frequency_hz: float
    pml: PMLConfig
    matrix: sp.csc_matrix = field(repr=False)      # A, complex symmetric
    stiffness: sp.csr_matrix = field(repr=False)   # -Lap part (A + omega^2 mass)
    mass: np.ndarray = field(repr=False)           # diagonal m_padded * s_x * s_z
    model_padded: np.ndarray = field(repr=False)

    @property
    def omega(self) -> float:
        return 2.0 * np.pi * self.frequency_hz

    @property
    def padded_grid(self) -> Grid2D:
        w = self.pml.width
        return Grid2D(self.grid.nx + 2 * w, self.grid.nz + 2 * w,
                      self.grid.dx, self.grid.dz)

    @property
    def n(self) -> int:
        return self.padded_grid.n_nodes

    @property
    def physical_indices(self) -> np.ndarray:
        """Flat padded indices of physical nodes, in physical flat order."""
        w = self.pml.width
        nxp = self.grid.nx + 2 * w
        jj, ii = np.meshgrid(np.arange(self.grid.nz), np.arange(self.grid.nx),
                             indexing="ij")
        return ((jj + w) * nxp + (ii + w)).ravel()

    def laplacian_apply(self, u: np.ndarray) -> np.ndarray:
        """Apply the discrete (stretched) Laplacian: Lap u = -stiffness @ u."""
        return -(self.stiffness @ u)


def _stretch(coord: np.ndarray, extent: float, collar: float, rate: float,
             omega: float) -> np.ndarray:
    """Complex stretch factor 1 + i sigma/omega with quadratic sigma profile."""
    if collar <= 0.0 or rate == 0.0:
        return np.ones_like(coord, dtype=np.complex128)
    dist = np.maximum(0.0, np.maximum(-coord, coord - extent))
    sigma = rate * (dist / collar) ** 2
    return 1.0 + 1j * sigma / omega


def assemble(model: Model, frequency_hz: float,
             pml: PMLConfig = PMLConfig()) -> HelmholtzOperator:
    """Discretize the wave operator for ``model`` at ``frequency_hz``.

    Warns (does not fail) when the grid resolves fewer than ~4 nodes per
    wavelength at the minimum velocity.
    """
    if frequency_hz <= 0:
        raise ValueError(f"frequency must be positive, got {frequency_hz}")
    grid = model.grid
    omega = 2.0 * np.pi * frequency_hz
    vel = model.velocity()
    nodes_per_wavelength = vel.min() / (frequency_hz * max(grid.dx, grid.dz))
    if nodes_per_wavelength < 4.0:
        warnings.warn(
            f"{frequency_hz} Hz resolves only {nodes_per_wavelength:.2f} nodes per "
            "wavelength at the minimum velocity; expect dispersion", stacklevel=2)

    w = pml.width
    nxp, nzp = grid.nx + 2 * w, grid.nz + 2 * w
    n = nxp * nzp
    dx, dz = grid.dx, grid.dz
    lx, lz = grid.width, grid.depth
    collar_x, collar_z = w * dx, w * dz
    rate = pml.strength * vel.max()

    x_nodes = (np.arange(nxp) - w) * dx
    z_nodes = (np.arange(nzp) - w) * dz
    x_mids = (np.arange(nxp + 1) - w - 0.5) * dx
    z_mids = (np.arange(nzp + 1) - w - 0.5) * dz
    sx = _stretch(x_nodes, lx, collar_x, rate / collar_x if w else 0.0, omega)
    sz = _stretch(z_nodes, lz, collar_z, rate / collar_z if w else 0.0, omega)
    sx_mid = _stretch(x_mids, lx, collar_x, rate / collar_x if w else 0.0, omega)
    sz_mid = _stretch(z_mids, lz, collar_z, rate / collar_z if w else 0.0, omega)

    # Edge conductivities of the stretched stiffness D^T C D, including the
    # Dirichlet half-edges that close the outer boundary.
    cx = (sz[:, None] / sx_mid[None, :]) / (dx * dx)      # (nzp, nxp+1)
    cz = (sx[None, :] / sz_mid[:, None]) / (dz * dz)      # (nzp+1, nxp)

    idx = np.arange(n).reshape(nzp, nxp)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(v.ravel())

    # x-direction interior edges between (i-1, j) and (i, j)
    a, b, c = idx[:, :-1], idx[:, 1:], cx[:, 1:-1]
    add(a, a, c); add(b, b, c); add(a, b, -c); add(b, a, -c)
    # x-direction boundary half-edges
    add(idx[:, 0], idx[:, 0], cx[:, 0])
    add(idx[:, -1], idx[:, -1], cx[:, -1])
    # z-direction interior edges between (i, j-1) and (i, j)
    a, b, c = idx[:-1, :], idx[1:, :], cz[1:-1, :]
    add(a, a, c); add(b, b, c); add(a, b, -c); add(b, a, -c)
    # z-direction boundary half-edges
    add(idx[0, :], idx[0, :], cz[0, :])
    add(idx[-1, :], idx[-1, :], cz[-1, :])

    stiffness = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n), dtype=np.complex128).tocsr()

    m_pad = np.pad(model.values.reshape(grid.shape), w, mode="edge").ravel()
    mass = m_pad * (sz[:, None] * sx[None, :]).ravel()
    matrix = (stiffness - omega * omega * sp.diags(mass)).tocsc()
    return HelmholtzOperator(grid, frequency_hz, pml, matrix, stiffness, mass, m_pad)


@dataclass
class HelmholtzFactorization:
    """Reusable sparse direct factorization of an assembled operator.

    One LU of the complex-symmetric A serves both A x = b and A^H x = b
    (``adjoint=True``); right-hand sides may be a vector or an (n, k) block.
    """

    operator: HelmholtzOperator
    lu: spla.SuperLU = field(repr=False)

    def solve(self, rhs: np.ndarray, adjoint: bool = False) -> np.ndarray:
        b = np.ascontiguousarray(rhs, dtype=np.complex128)
        return self.lu.solve(b, trans="H" if adjoint else "N")


def factorize(op: HelmholtzOperator) -> HelmholtzFactorization:
    try:
        lu = spla.splu(op.matrix)
    except RuntimeError as exc:
        raise NumericalError(f"wave-operator factorization failed: {exc}") from exc
    return HelmholtzFactorization(op, lu)


@dataclass(frozen=True)
class Sampling:
    """Receiver restriction operator P and its adjoint (injection)."""

    indices: np.ndarray   # flat padded receiver indices
    n: int                # padded vector length

    @property
    def n_receivers(self) -> int:
        return self.indices.size

    def sample(self, wavefield: np.ndarray) -> np.ndarray:
        """Pick receiver-node values; works on (n,) vectors or (n, k) blocks."""
        return wavefield[self.indices]

    def inject(self, data: np.ndarray) -> np.ndarray:
        """Exact adjoint of ``sample``: place data at receiver nodes."""
        data = np.asarray(data)
        out = np.zeros((self.n,) + data.shape[1:], dtype=np.complex128)
        out[self.indices] = data
        return out


def sampling_operator(geom: AcquisitionGeometry, op: HelmholtzOperator) -> Sampling:
    w = op.pml.width
    nxp = op.grid.nx + 2 * w
    rec = geom.receiver_nodes
    return Sampling(((rec[:, 1] + w) * nxp + (rec[:, 0] + w)).astype(np.intp), op.n)


def source_matrix(geom: AcquisitionGeometry, op: HelmholtzOperator) -> np.ndarray:
    """(n, n_sources) block of point sources with the geometry's amplitudes."""
    w = op.pml.width
    nxp = op.grid.nx + 2 * w
    src = geom.source_nodes
    flat = (src[:, 1] + w) * nxp + (src[:, 0] + w)
    b = np.zeros((op.n, geom.n_sources), dtype=np.complex128)
    b[flat, np.arange(geom.n_sources)] = geom.source_amplitudes
    return b


def save_wavefield(path_real, path_imag, op: HelmholtzOperator,
                   wavefield: np.ndarray) -> None:
    """Export a padded wavefield as two grid files (real and imaginary parts)."""
    pg = op.padded_grid
    save_grid_file(path_real, pg, np.real(wavefield))
    save_grid_file(path_imag, pg, np.imag(wavefield))
