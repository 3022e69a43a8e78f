"""Per-source first-order machinery at one frequency.

Naming (all per source unless noted): ``field`` u solves A u = b;
``residual`` is observed minus predicted receiver data; ``virtual_source``
is the diagonal -omega^2 u restricted to physical nodes; ``scatter_source``
is the damped least-squares back-projection of the residual into the
wavefield domain; ``scattered_field`` solves A du = scatter_source.

Complex transposes follow the frequency-domain adjoint convention: data and
wavefield operators are conjugate-transposed, and model-space outputs take
the real part at the final reduction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import ConfigurationError, NumericalError
from .helmholtz import HelmholtzFactorization, Sampling

# Dense per-parameter operators are refused above this size; use the
# operator/Gram routes instead.
DESK_SCALE_LIMIT = 20_000


@dataclass
class SensitivityBundle:
    """First-order quantities for one (source, frequency) pair."""

    source: int
    frequency_hz: float
    wavefield: np.ndarray = field(repr=False)             # padded, complex
    residual: np.ndarray = field(repr=False)              # per receiver
    virtual_source: np.ndarray = field(repr=False)        # -omega^2 u, physical
    eps: float | None = None
    scatter_source: np.ndarray | None = field(repr=False, default=None)
    scattered_field: np.ndarray | None = field(repr=False, default=None)
    scattered_virtual_source: np.ndarray | None = field(repr=False, default=None)

    @property
    def omega(self) -> float:
        return 2.0 * np.pi * self.frequency_hz


@dataclass
class DataHessian:
    """Dense Hermitian data-space operator S S^H + eps I (receivers squared).

    Source independent for fixed-spread acquisition: built once per
    (model, frequency) and reused across sources.
    """

    frequency_hz: float
    matrix: np.ndarray = field(repr=False)
    eps: float = 0.0
    _cho: tuple = field(repr=False, default=None)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._cho is None:
            try:
                self._cho = la.cho_factor(self.matrix, lower=True)
            except la.LinAlgError as exc:
                raise NumericalError(
                    f"data-space Hessian not positive definite (eps={self.eps}): "
                    f"{exc}") from exc
        return la.cho_solve(self._cho, rhs)


def forward_fields(fact: HelmholtzFactorization, sources: np.ndarray) -> np.ndarray:
    """u = A^-1 b for a block of source columns."""
    return fact.solve(sources)


def predicted_data(sampling: Sampling, fields: np.ndarray) -> np.ndarray:
    """(n_sources, n_receivers) receiver data from a block of fields."""
    return sampling.sample(fields).T


def residuals(observed: np.ndarray, predicted: np.ndarray) -> np.ndarray:
    """observed - predicted, both (n_sources, n_receivers)."""
    observed = np.asarray(observed, dtype=np.complex128)
    if observed.shape != predicted.shape:
        raise ConfigurationError(
            f"observed data shape {observed.shape} does not match "
            f"acquisition {predicted.shape}")
    return observed - predicted


def misfit_from_residuals(residual_block: np.ndarray) -> float:
    """0.5 * sum of squared residual magnitudes."""
    return 0.5 * float(np.sum(np.abs(residual_block) ** 2))


def receiver_columns(fact: HelmholtzFactorization, sampling: Sampling) -> np.ndarray:
    """A^-1 P^T as an (n, n_receivers) block (rows of P A^-1 by symmetry)."""
    identity = np.zeros((sampling.n, sampling.n_receivers), dtype=np.complex128)
    identity[sampling.indices, np.arange(sampling.n_receivers)] = 1.0
    return fact.solve(identity)


def data_hessian(fact: HelmholtzFactorization, sampling: Sampling,
                 eps: float | None = None,
                 receiver_cols: np.ndarray | None = None,
                 cond_limit: float = 1e12) -> DataHessian:
    """Assemble S S^H + eps I via one multi-right-hand-side solve.

    ``eps=None`` picks 1e-3 * mean(diag(S S^H)). ``eps=0`` is allowed only
    when the Gram matrix is numerically invertible (condition estimate below
    ``cond_limit``).
    """
    if receiver_cols is None:
        receiver_cols = receiver_columns(fact, sampling)
    gram = receiver_cols.T @ np.conj(receiver_cols)
    gram = 0.5 * (gram + gram.conj().T)
    if eps is None:
        eps = 1e-3 * float(np.mean(np.real(np.diag(gram))))
    if eps < 0:
        raise ConfigurationError(f"damping must be nonnegative, got {eps}")
    if eps == 0.0:
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > cond_limit:
            raise NumericalError(
                f"data-space Gram matrix too ill-conditioned for eps=0 "
                f"(cond ~ {cond:.2e}); pass eps > 0")
    matrix = gram + eps * np.eye(gram.shape[0])
    return DataHessian(fact.operator.frequency_hz, matrix, eps)


def scatter_sources(dh: DataHessian, residual_block: np.ndarray,
                    fact: HelmholtzFactorization, sampling: Sampling) -> np.ndarray:
    """Back-project residuals: S^H (S S^H + eps I)^-1 residual, per source.

    Returns an (n, n_sources) block; one dense Hermitian solve plus one
    adjoint wave solve for all sources at once.
    """
    y = dh.solve(np.asarray(residual_block, dtype=np.complex128).T)
    return fact.solve(sampling.inject(y), adjoint=True)


def scattered_fields(fact: HelmholtzFactorization,
                     scatter_block: np.ndarray) -> np.ndarray:
    """du = A^-1 scatter_source for a block of scatter sources."""
    return fact.solve(scatter_block)


def virtual_source_diagonal(op_omega: float, field_block: np.ndarray,
                            physical_indices: np.ndarray) -> np.ndarray:
    """-omega^2 * field at physical nodes; (n_physical, n_sources) block."""
    return -op_omega * op_omega * field_block[physical_indices]


def build_bundles(fact: HelmholtzFactorization, sampling: Sampling,
                  sources: np.ndarray, observed: np.ndarray,
                  eps: float | None = None, with_scatter: bool = True,
                  receiver_cols: np.ndarray | None = None,
                  dh: DataHessian | None = None,
                  ) -> tuple[list[SensitivityBundle], DataHessian | None, np.ndarray | None]:
    """Compute all per-source sensitivity quantities at one frequency.

    Returns (bundles, data_hessian, receiver_cols); the last two are None
    when ``with_scatter`` is False and no receiver columns were requested.
    """
    op = fact.operator
    omega = op.omega
    phys = op.physical_indices
    fields = forward_fields(fact, sources)
    res = residuals(observed, predicted_data(sampling, fields))
    lmat = virtual_source_diagonal(omega, fields, phys)

    scatter = dfields = dlmat = None
    if with_scatter:
        if dh is None:
            if receiver_cols is None:
                receiver_cols = receiver_columns(fact, sampling)
            dh = data_hessian(fact, sampling, eps, receiver_cols)
        scatter = scatter_sources(dh, res, fact, sampling)
        dfields = scattered_fields(fact, scatter)
        dlmat = virtual_source_diagonal(omega, dfields, phys)

    bundles = []
    for s in range(sources.shape[1]):
        bundles.append(SensitivityBundle(
            source=s,
            frequency_hz=op.frequency_hz,
            wavefield=fields[:, s],
            residual=res[s],
            virtual_source=lmat[:, s],
            eps=None if dh is None else dh.eps,
            scatter_source=None if scatter is None else scatter[:, s],
            scattered_field=None if dfields is None else dfields[:, s],
            scattered_virtual_source=None if dlmat is None else dlmat[:, s],
        ))
    return bundles, dh, receiver_cols


def jacobian_dense(fact: HelmholtzFactorization, sampling: Sampling,
                   virtual_source: np.ndarray,
                   receiver_cols: np.ndarray | None = None) -> np.ndarray:
    """Dense (n_receivers, n_physical) Jacobian of the residual for one source.

    Row r is the receiver-r sensitivity; assembled from the receiver solve
    block (one adjoint-type solve per receiver, shared across sources).
    Desk-scale only: refuses more than DESK_SCALE_LIMIT model parameters.
    """
    phys = fact.operator.physical_indices
    if phys.size > DESK_SCALE_LIMIT:
        raise ConfigurationError(
            f"dense Jacobian refused for {phys.size} parameters "
            f"(limit {DESK_SCALE_LIMIT}); use the Gram/operator routes")
    if receiver_cols is None:
        receiver_cols = receiver_columns(fact, sampling)
    return receiver_cols[phys].T * virtual_source[None, :]
