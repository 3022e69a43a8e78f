"""Model updates: damped Newton, sequential solve, penalty-method (WRI)
alternation, and preconditioned steepest descent.

The sequential solve factors the augmented-Gauss-Newton Newton system into a
data-space solve (shared across sources), a back-projection, and a pointwise
least-squares division; with matched damping it reproduces the penalty-method
model update exactly, which the test suite verifies component by component.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NumericalError
from .grids import Model
from .helmholtz import HelmholtzFactorization, HelmholtzOperator, Sampling
from .hessians import HessianMatrix
from .sensitivity import (SensitivityBundle, data_hessian, receiver_columns,
                          scatter_sources, scattered_fields)

DENOMINATOR_FLOOR_REL = 1e-10


@dataclass
class ModelUpdate:
    """A proposed model increment and its diagnostics."""

    delta_m: np.ndarray = field(repr=False)
    method: str = ""
    step_scale: float = 1.0
    stagnated: bool = False
    misfit_before: float | None = None
    misfit_after: float | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class AssimilatedWavefield:
    """Per-source fields jointly fitting data and wave equation under
    penalty ``mu``; solves (P^H P + mu A^H A) u = P^H d + mu A^H b."""

    fields: np.ndarray = field(repr=False)   # (n_padded, n_sources)
    mu: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def newton_step(hessian: HessianMatrix, grad: np.ndarray, model: Model,
                eval_misfit, lambda0: float = 1e-6, symmetrize: bool = True,
                max_backoffs: int = 8, method: str = "newton",
                misfit_before: float | None = None) -> ModelUpdate:
    """Solve (H_sym + lambda diag|H_ii|) dm = -g with a trust-style backoff.

    The damping starts at ``lambda0`` and is multiplied by 10 until the step
    reduces the misfit; after ``max_backoffs`` failures a zero step is
    returned with the stagnation flag set. ``eval_misfit`` maps a candidate
    flat model vector to the misfit value.
    """
    f0 = eval_misfit(model.values) if misfit_before is None else misfit_before
    if not np.any(grad):
        return ModelUpdate(np.zeros_like(grad), method, 0.0, False, f0, f0)
    h = hessian.dense()
    if symmetrize:
        h = 0.5 * (h + h.T)
    damp = np.abs(np.diag(h))
    floor = np.mean(damp)
    if floor == 0.0:
        raise NumericalError("Hessian has an identically zero diagonal")
    damp = np.maximum(damp, 1e-8 * floor)

    lam = lambda0
    for attempt in range(max_backoffs + 1):
        delta = _solve_damped(h, damp, lam, -grad)
        if delta is None:
            lam *= 10.0
            continue
        f1 = eval_misfit(model.values + delta)
        if np.isfinite(f1) and f1 < f0:
            return ModelUpdate(delta, method, 1.0, False, f0, f1,
                               {"lambda": lam, "backoffs": attempt})
        lam *= 10.0
    return ModelUpdate(np.zeros_like(grad), method, 0.0, True, f0, f0,
                       {"lambda": lam, "backoffs": max_backoffs + 1})


def _solve_damped(h: np.ndarray, damp: np.ndarray, lam: float,
                  rhs: np.ndarray) -> np.ndarray | None:
    """Solve (h + lam diag(damp)) x = rhs; Cholesky first (the damped
    Gauss-Newton matrix is positive definite), symmetric-indefinite fallback."""
    n = h.shape[0]
    damped = h.copy()
    damped.flat[:: n + 1] += lam * damp
    try:
        factor = la.cho_factor(damped, lower=True, overwrite_a=True,
                               check_finite=False)
        return la.cho_solve(factor, rhs, check_finite=False)
    except la.LinAlgError:
        pass
    damped = h.copy()
    damped.flat[:: n + 1] += lam * damp
    try:
        return la.solve(damped, rhs, assume_a="sym", overwrite_a=True,
                        check_finite=False)
    except la.LinAlgError:
        return None


def psd_step(pseudo: HessianMatrix, grad: np.ndarray, model: Model,
             eval_misfit, armijo_c: float = 1e-4, max_halvings: int = 12,
             trial_fraction: float = 0.05,
             misfit_before: float | None = None) -> ModelUpdate:
    """Steepest descent preconditioned by the diagonal field-energy Hessian,
    with a backtracking (halving) Armijo line search.

    The preconditioner carries no physical step scale (it only equalizes
    illumination), so the first trial is scaled to perturb the model by at
    most ``trial_fraction`` of its smallest value, which also keeps the
    candidate squared slowness positive; halving proceeds from there.
    """
    f0 = eval_misfit(model.values) if misfit_before is None else misfit_before
    if not np.any(grad):
        return ModelUpdate(np.zeros_like(grad), "psd", 0.0, False, f0, f0)
    diag = pseudo.diagonal()
    floor = DENOMINATOR_FLOOR_REL * float(diag.max()) if diag.max() > 0 else 1.0
    direction = -grad / (diag + floor)
    slope = float(np.dot(grad, direction))
    alpha = min(1.0, trial_fraction * float(model.values.min())
                / float(np.abs(direction).max()))
    for _ in range(max_halvings + 1):
        f1 = eval_misfit(model.values + alpha * direction)
        if np.isfinite(f1) and f1 <= f0 + armijo_c * alpha * slope:
            return ModelUpdate(alpha * direction, "psd", alpha, False, f0, f1)
        alpha *= 0.5
    return ModelUpdate(np.zeros_like(grad), "psd", 0.0, True, f0, f0)


def _pointwise_update(numerator: np.ndarray, denominator: np.ndarray,
                      context: str) -> tuple[np.ndarray, float]:
    """-num/(den + floor) with the relative denominator floor; warns on
    dead nodes (zero denominator means the extended field vanishes there)."""
    den_max = float(denominator.max(initial=0.0))
    floor = DENOMINATOR_FLOOR_REL * den_max if den_max > 0 else 1.0
    dead = int(np.count_nonzero(denominator == 0.0))
    if dead:
        warnings.warn(
            f"{context}: {dead} nodes have no field coverage; their update is "
            "floored to zero", stacklevel=3)
    return -numerator / (denominator + floor), floor


def sequential_step(groups: list[tuple[list[SensitivityBundle], HelmholtzOperator]],
                    ) -> ModelUpdate:
    """Pointwise update from the 3-step sequential solve of the augmented
    Gauss-Newton system.

    ``groups`` pairs the bundle list of each frequency with its operator;
    the per-node scalar least squares stacks every (source, frequency)
    equation (l_i + dl_i) dm_i = -scatter_i, keeping the data-space solve
    shared across sources.
    """
    numerator = denominator = None
    eps = None
    for bundles, op in groups:
        phys = op.physical_indices
        for b in bundles:
            if b.scatter_source is None:
                raise ConfigurationError(
                    "sequential solve needs bundles built with with_scatter=True")
            extended = b.virtual_source + b.scattered_virtual_source
            scatter = b.scatter_source[phys]
            num = np.real(np.conj(extended) * scatter)
            den = np.abs(extended) ** 2
            numerator = num if numerator is None else numerator + num
            denominator = den if denominator is None else denominator + den
            eps = b.eps
    if numerator is None:
        raise ConfigurationError("sequential solve needs at least one bundle")
    delta, floor = _pointwise_update(numerator, denominator, "sequential solve")
    return ModelUpdate(delta, "agn-seq",
                       diagnostics={"eps": eps, "denominator_floor": floor})


def wri_assimilated_wavefield(fact: HelmholtzFactorization, sampling: Sampling,
                              observed: np.ndarray, sources: np.ndarray,
                              mu: float, check_identity: bool = True,
                              refine: int = 1) -> AssimilatedWavefield:
    """Solve the penalty normal equations for every source at once.

    Factorizes (P^H P + mu A^H A) and solves against P^H d + mu A^H b with
    optional iterative-refinement sweeps. When ``check_identity`` is set the
    damped scatter-source route is also computed and the residuals of the
    identities A u_e = b + scatter and u_e = u + du are recorded in the
    diagnostics (both should sit at solver precision).
    """
    if mu <= 0:
        raise ConfigurationError(f"penalty parameter must be positive, got {mu}")
    op = fact.operator
    a = op.matrix
    ah = a.conj().T.tocsr()
    ptp = sp.csr_matrix(
        (np.ones(sampling.n_receivers),
         (sampling.indices, sampling.indices)), shape=(op.n, op.n))
    normal = (ptp + mu * (ah @ a)).tocsc()
    rhs = sampling.inject(np.asarray(observed, dtype=np.complex128).T) \
        + mu * (ah @ sources)
    try:
        lu = spla.splu(normal)
    except RuntimeError as exc:
        raise NumericalError(f"penalty normal equations failed to factor: {exc}") from exc
    fields = lu.solve(rhs)
    for _ in range(max(0, refine)):
        fields = fields + lu.solve(rhs - normal @ fields)

    diagnostics = {"mu": mu}
    resid = rhs - normal @ fields
    diagnostics["normal_residual"] = float(
        np.linalg.norm(resid) / np.linalg.norm(rhs))
    if check_identity:
        cols = receiver_columns(fact, sampling)
        dh = data_hessian(fact, sampling, mu, cols)
        base = fact.solve(sources)
        res = np.asarray(observed, dtype=np.complex128) \
            - sampling.sample(base).T
        scatter = scatter_sources(dh, res, fact, sampling)
        dfields = scattered_fields(fact, scatter)
        diagnostics["source_identity_rel"] = float(
            np.linalg.norm(a @ fields - sources - scatter)
            / np.linalg.norm(sources))
        diagnostics["field_identity_rel"] = float(
            np.linalg.norm(fields - base - dfields) / np.linalg.norm(base))
    return AssimilatedWavefield(fields, mu, diagnostics)


def wri_update(groups: list[tuple[AssimilatedWavefield, np.ndarray, HelmholtzOperator]],
               model: Model) -> tuple[Model, ModelUpdate]:
    """Pointwise model refit from assimilated wavefields.

    Two algebraically identical routes are assembled: one correlates the
    extended fields with the Laplacian-plus-source term, the other with the
    wave-equation source residual A u_e - b. Both use the floored stacked
    denominator; their maximum relative disagreement is recorded and the
    source-residual route is returned.
    """
    num_lap = num_res = denominator = None
    for awf, sources, op in groups:
        phys = op.physical_indices
        omega2 = op.omega ** 2
        ue = awf.fields
        extended = -omega2 * ue[phys]
        lap = op.laplacian_apply(ue)
        sres = op.matrix @ ue - sources
        nl = np.sum(np.real(np.conj(extended) * (lap + sources)[phys]), axis=1)
        nr = np.sum(np.real(np.conj(extended) * sres[phys]), axis=1)
        den = np.sum(np.abs(extended) ** 2, axis=1)
        num_lap = nl if num_lap is None else num_lap + nl
        num_res = nr if num_res is None else num_res + nr
        denominator = den if denominator is None else denominator + den
    if denominator is None:
        raise ConfigurationError("penalty update needs at least one wavefield group")

    delta, floor = _pointwise_update(num_res, denominator, "penalty update")
    next_from_res = model.values + delta
    # Laplacian route with the same floor; the floor term keeps dead nodes
    # at their current value.
    next_from_lap = (num_lap + floor * model.values) / (denominator + floor)
    scale = float(np.max(np.abs(next_from_res)))
    route_gap = float(np.max(np.abs(next_from_lap - next_from_res)) / scale)
    update = ModelUpdate(delta, "wri",
                         diagnostics={"mu": groups[0][0].mu,
                                      "route_gap_rel": route_gap,
                                      "denominator_floor": floor})
    return model.with_values(next_from_res), update
