"""Gradient and Hessian assemblies for the data misfit, plus FD oracles.

Sign conventions (fixed empirically against central finite differences of the
misfit and by the sequential-solve/penalty-update equivalence; see README):

* misfit f(m) = 0.5 * sum over sources of |observed - predicted|^2;
* gradient g = sum_s Re(conj(virtual_source) * back-propagated residual),
  so -g is the descent direction;
* the exact misfit Hessian splits as H = H_gn + R where H_gn = Re(J^H J) is
  positive semidefinite and R (assembled by ``full_r_direct`` or, as four
  labeled terms, by ``full_r_decomposed``) carries the residual-weighted
  second-order information. R vanishes with the residual.
* the augmented Gauss-Newton Hessian keeps the first decomposed term only:
  H_agn = H_gn + Re(L^H (S^H S) dL) with dL built from the damped scatter
  source, so eps -> infinity recovers H_gn.

All Hessians are reduced to real matrices (model parameters are real) over
physical nodes only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acquisition import AcquisitionGeometry
from .errors import ConfigurationError
from .grids import Model
from .helmholtz import (DIRICHLET, HelmholtzFactorization, PMLConfig, Sampling,
                        assemble, factorize, sampling_operator, source_matrix)
from .sensitivity import (DESK_SCALE_LIMIT, SensitivityBundle, data_hessian,
                          misfit_from_residuals, predicted_data,
                          receiver_columns, residuals, scatter_sources,
                          scattered_fields, virtual_source_diagonal)

_GRAM_BLOCK_ROWS = 1024


@dataclass
class HessianMatrix:
    """Dense real model-space curvature with assembly metadata.

    ``kind`` is one of pseudo | gn | full | agn | fd_oracle. The pseudo kind
    stores only its diagonal (values is 1-D); all other kinds store the full
    (n_physical, n_physical) matrix.
    """

    kind: str
    values: np.ndarray = field(repr=False)
    eps: float | None = None
    frequencies_hz: tuple[float, ...] = ()
    n_sources: int = 0

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def diagonal(self) -> np.ndarray:
        return self.values if self.values.ndim == 1 else np.diag(self.values)

    def dense(self) -> np.ndarray:
        return np.diag(self.values) if self.values.ndim == 1 else self.values


def _stack_virtual(bundles: list[SensitivityBundle], scattered=False) -> np.ndarray:
    key = "scattered_virtual_source" if scattered else "virtual_source"
    cols = [getattr(b, key) for b in bundles]
    if any(c is None for c in cols):
        raise ConfigurationError(
            "bundles lack scatter quantities; rebuild with with_scatter=True")
    return np.stack(cols, axis=1)


def _stack_residuals(bundles: list[SensitivityBundle]) -> np.ndarray:
    return np.stack([b.residual for b in bundles], axis=0)


def _meta(bundles: list[SensitivityBundle]) -> dict:
    return {
        "frequencies_hz": tuple(sorted({b.frequency_hz for b in bundles})),
        "n_sources": len(bundles),
    }


def gradient(bundles: list[SensitivityBundle], fact: HelmholtzFactorization,
             sampling: Sampling) -> np.ndarray:
    """Adjoint-state misfit gradient over physical nodes.

    One batched adjoint solve back-propagates all residuals; the diagonal
    correlation with the virtual sources is then summed over sources in a
    fixed order.
    """
    if not bundles:
        raise ConfigurationError("gradient needs at least one bundle")
    phys = fact.operator.physical_indices
    res = _stack_residuals(bundles)
    back = fact.solve(sampling.inject(res.T), adjoint=True)[phys]
    lmat = _stack_virtual(bundles)
    return np.sum(np.real(np.conj(lmat) * back), axis=1)


def pseudo_hessian(bundles: list[SensitivityBundle]) -> HessianMatrix:
    """Diagonal field-energy preconditioner: sum_s omega^4 |u_i|^2."""
    lmat = _stack_virtual(bundles)
    diag = np.sum(np.abs(lmat) ** 2, axis=1)
    return HessianMatrix("pseudo", diag, **_meta(bundles))


def _gram_hadamard(left: np.ndarray, right_a: np.ndarray,
                   right_b: np.ndarray | None) -> np.ndarray:
    """Re(G o W) with G, W column Grams of ``left`` and ``right_*`` blocks.

    left is (n_phys, n_rec): G = conj(left) left^T. right_a (n_phys, n_src)
    gives W = conj(right_a) right_a^T, plus conj(right_a) right_b^T when
    right_b is provided. Assembled in row blocks to bound peak memory.
    """
    n = left.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    for lo in range(0, n, _GRAM_BLOCK_ROWS):
        hi = min(lo + _GRAM_BLOCK_ROWS, n)
        gb = np.conj(left[lo:hi]) @ left.T
        wb = np.conj(right_a[lo:hi]) @ right_a.T
        if right_b is not None:
            wb += np.conj(right_a[lo:hi]) @ right_b.T
        out[lo:hi] = gb.real * wb.real - gb.imag * wb.imag
    return out


def gn_hessian(bundles: list[SensitivityBundle], fact: HelmholtzFactorization,
               sampling: Sampling,
               receiver_cols: np.ndarray | None = None) -> HessianMatrix:
    """Gauss-Newton term Re(J^H J) summed over sources.

    Uses the diagonal virtual-source structure: the (i, j) entry is
    [S^H S]_ij * sum_s conj(l_si) l_sj, assembled blockwise from two Gram
    products instead of forming any dense Jacobian.
    """
    phys = fact.operator.physical_indices
    if receiver_cols is None:
        receiver_cols = receiver_columns(fact, sampling)
    s_phys = receiver_cols[phys]
    lmat = _stack_virtual(bundles)
    values = _gram_hadamard(s_phys, lmat, None)
    return HessianMatrix("gn", values, **_meta(bundles))


def agn_hessian(bundles: list[SensitivityBundle], fact: HelmholtzFactorization,
                sampling: Sampling,
                receiver_cols: np.ndarray | None = None) -> HessianMatrix:
    """Gauss-Newton term augmented with the leading scatter-source term.

    Adds Re(L^H (S^H S) dL) where dL is the virtual source of the damped
    scattered field carried by the bundles; generically nonsymmetric.
    """
    phys = fact.operator.physical_indices
    if receiver_cols is None:
        receiver_cols = receiver_columns(fact, sampling)
    s_phys = receiver_cols[phys]
    lmat = _stack_virtual(bundles)
    dlmat = _stack_virtual(bundles, scattered=True)
    values = _gram_hadamard(s_phys, lmat, dlmat)
    return HessianMatrix("agn", values, eps=bundles[0].eps, **_meta(bundles))


def _inverse_physical_block(fact: HelmholtzFactorization) -> np.ndarray:
    """Physical-to-physical block of A^-1 by a multi-column solve."""
    phys = fact.operator.physical_indices
    if phys.size > DESK_SCALE_LIMIT:
        raise ConfigurationError(
            f"dense inverse block refused for {phys.size} parameters "
            f"(limit {DESK_SCALE_LIMIT})")
    rhs = np.zeros((fact.operator.n, phys.size), dtype=np.complex128)
    rhs[phys, np.arange(phys.size)] = 1.0
    return fact.solve(rhs)[phys]


def full_r_direct(bundles: list[SensitivityBundle], fact: HelmholtzFactorization,
                  sampling: Sampling,
                  inverse_block: np.ndarray | None = None) -> np.ndarray:
    """Residual curvature term R (real, symmetric) from the direct route.

    With lam = back-propagated residual and the diagonal virtual-source
    structure, the summand for one source is
    -Re(Ainv o (d l^T)) - its transpose, d = -omega^2 conj(lam); the
    second-derivative term of the wave operator vanishes identically because
    the operator is linear in the model. ``H_gn + R`` matches the FD Hessian.
    """
    op = fact.operator
    phys = op.physical_indices
    if inverse_block is None:
        inverse_block = _inverse_physical_block(fact)
    res = _stack_residuals(bundles)
    back = fact.solve(sampling.inject(res.T), adjoint=True)[phys]
    lmat = _stack_virtual(bundles)
    dmat = -op.omega ** 2 * np.conj(back)
    pair = dmat @ lmat.T               # sum_s d_s l_s^T, (n_phys, n_phys)
    pair = pair + pair.T
    return -(inverse_block.real * pair.real - inverse_block.imag * pair.imag)


def full_r_decomposed(bundles: list[SensitivityBundle],
                      fact: HelmholtzFactorization, sampling: Sampling,
                      eps: float = 0.0, gram_derivative: str = "analytic",
                      receiver_cols: np.ndarray | None = None,
                      ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Residual curvature term assembled from its four labeled pieces.

    The scatter source is recomputed at the requested ``eps`` (0 requires an
    invertible data-space Gram and reproduces ``full_r_direct`` exactly; any
    eps > 0 gives the damped variant used by the augmented Hessian). The
    derivative of the sensitivity Gram S^H S enters the second and fourth
    pieces either through the exact product rule (``analytic``) or by central
    finite differences of the dense Gram (``fd``, Dirichlet fixtures only).

    Returns (R, parts) with parts keyed r11, r12, r21, r22.
    """
    if gram_derivative not in ("analytic", "fd"):
        raise ConfigurationError(f"unknown gram_derivative {gram_derivative!r}")
    op = fact.operator
    omega2 = op.omega ** 2
    phys = op.physical_indices
    if receiver_cols is None:
        receiver_cols = receiver_columns(fact, sampling)
    s_phys = receiver_cols[phys]
    gram = np.conj(s_phys) @ s_phys.T          # S^H S on physical nodes
    dh = data_hessian(fact, sampling, eps, receiver_cols)

    res = _stack_residuals(bundles)
    scatter = scatter_sources(dh, res, fact, sampling)
    dfields = scattered_fields(fact, scatter)
    # y = S^H S scatter, via S scatter = sampled scattered field
    y = fact.solve(sampling.inject(sampling.sample(dfields)), adjoint=True)[phys]

    lmat = _stack_virtual(bundles)
    dlmat = virtual_source_diagonal(op.omega, dfields, phys)
    cl = np.conj(lmat)

    # R11_ij = sum_s conj(l_si) G_ij dl_sj = G_ij * [conj(L) dL^T]_ij
    w11 = cl @ dlmat.T
    r11 = gram.real * w11.real - gram.imag * w11.imag

    if gram_derivative == "analytic":
        inverse_block = _inverse_physical_block(fact)
        w_y = cl @ y.T                     # sum_s conj(l_si) y_sj
        w_du = cl @ dfields[phys].T        # sum_s conj(l_si) du_sj
        r12 = omega2 * (np.conj(inverse_block).real * w_y.real
                        - np.conj(inverse_block).imag * w_y.imag
                        + gram.real * w_du.real - gram.imag * w_du.imag)
    else:
        r12 = _r12_by_gram_fd(bundles, fact, sampling, scatter[phys])

    parts = {"r11": r11, "r12": r12, "r21": r11.T, "r22": r12.T}
    return r11 + r11.T + r12 + r12.T, parts


def _r12_by_gram_fd(bundles, fact: HelmholtzFactorization, sampling: Sampling,
                    scatter_phys: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """R12 with d(S^H S)/dm_k from central differences of the dense Gram.

    Verification-only route for Dirichlet fixtures (the edge-replicated
    collar would couple edge parameters into the collar mass).
    """
    op = fact.operator
    if op.pml.width != 0:
        raise ConfigurationError("the FD Gram-derivative route needs a Dirichlet grid")
    phys = op.physical_indices
    n = phys.size
    if n > 400:
        raise ConfigurationError(f"FD Gram derivative refused for {n} parameters")
    model = Model(op.grid, op.model_padded.copy())
    lmat = _stack_virtual(bundles)
    cl = np.conj(lmat)

    def gram_at(values) -> np.ndarray:
        pert = factorize(assemble(model.with_values(values), op.frequency_hz, op.pml))
        cols = receiver_columns(pert, sampling)[phys]
        return np.conj(cols) @ cols.T

    r12 = np.zeros((n, n))
    for k in range(n):
        h = rel_step * abs(model.values[k])
        vp, vm = model.values.copy(), model.values.copy()
        vp[k] += h
        vm[k] -= h
        dgram = (gram_at(vp) - gram_at(vm)) / (2.0 * h)
        v = dgram @ scatter_phys           # (n, n_src)
        r12[:, k] = np.sum(np.real(cl * v), axis=1)
    return r12


def full_hessian(bundles: list[SensitivityBundle], fact: HelmholtzFactorization,
                 sampling: Sampling,
                 receiver_cols: np.ndarray | None = None) -> HessianMatrix:
    """Exact misfit Hessian H_gn + R (desk scale)."""
    gn = gn_hessian(bundles, fact, sampling, receiver_cols)
    r = full_r_direct(bundles, fact, sampling)
    return HessianMatrix("full", gn.values + r, **_meta(bundles))


def fd_gradient(fn, x0: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient with per-parameter relative steps."""
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    for i in range(x0.size):
        h = rel_step * abs(x0[i])
        if h == 0.0:
            raise ValueError(f"parameter {i} is zero; relative step undefined")
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad


def fd_hessian(fn, x0: np.ndarray, rel_step: float = 1e-4) -> np.ndarray:
    """Symmetrized central second differences of a scalar function."""
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.size
    steps = rel_step * np.abs(x0)
    if np.any(steps == 0.0):
        raise ValueError("all parameters must be nonzero for relative steps")
    f0 = fn(x0)
    hess = np.zeros((n, n))
    for i in range(n):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += steps[i]
        xm[i] -= steps[i]
        hess[i, i] = (fn(xp) - 2.0 * f0 + fn(xm)) / steps[i] ** 2
        for j in range(i + 1, n):
            hpp, hpm, hmp, hmm = x0.copy(), x0.copy(), x0.copy(), x0.copy()
            hpp[[i, j]] += [steps[i], steps[j]]
            hpm[i] += steps[i]; hpm[j] -= steps[j]
            hmp[i] -= steps[i]; hmp[j] += steps[j]
            hmm[[i, j]] -= [steps[i], steps[j]]
            hess[i, j] = (fn(hpp) - fn(hpm) - fn(hmp) + fn(hmm)) / (
                4.0 * steps[i] * steps[j])
            hess[j, i] = hess[i, j]
    return hess


def misfit_of_values(values: np.ndarray, template: Model,
                     geom: AcquisitionGeometry, observed: np.ndarray,
                     frequency_hz: float, pml: PMLConfig = DIRICHLET) -> float:
    """Misfit at one frequency for a flat squared-slowness vector."""
    model = template.with_values(values)
    op = assemble(model, frequency_hz, pml)
    fact = factorize(op)
    sampling = sampling_operator(geom, op)
    fields = fact.solve(source_matrix(geom, op))
    return misfit_from_residuals(residuals(observed, predicted_data(sampling, fields)))


def fd_hessian_oracle(model: Model, geom: AcquisitionGeometry,
                      observed: np.ndarray, frequency_hz: float,
                      pml: PMLConfig = DIRICHLET,
                      rel_step: float = 1e-4) -> HessianMatrix:
    """Brute-force misfit Hessian by central second differences.

    Cost is O(n^2) misfit evaluations; refused above 200 parameters.
    """
    n = model.grid.n_nodes
    if n > 200:
        raise ConfigurationError(
            f"FD Hessian oracle refused for {n} parameters (limit 200)")

    def fn(values):
        return misfit_of_values(values, model, geom, observed, frequency_hz, pml)

    values = fd_hessian(fn, model.values, rel_step)
    return HessianMatrix("fd_oracle", values, frequencies_hz=(frequency_hz,),
                         n_sources=geom.n_sources)
