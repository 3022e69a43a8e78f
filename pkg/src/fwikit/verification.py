"""Built-in oracle checks behind ``fwi verify``.

Every check builds its own deterministic fixture, measures the relevant
errors against independent routes (finite differences, dual assemblies,
limit cases), and reports them against pinned tolerances.
"""

from __future__ import annotations

import numpy as np

from .fixtures import inclusion_small_fixture, oracle_fixture, synthetic_data
from .errors import ConfigurationError
from .helmholtz import DIRICHLET, assemble, factorize, sampling_operator, source_matrix
from .hessians import (fd_gradient, fd_hessian_oracle, full_r_decomposed,
                       full_r_direct, gn_hessian, agn_hessian, gradient,
                       misfit_of_values)
from .sensitivity import (build_bundles, misfit_from_residuals, predicted_data,
                          receiver_columns, residuals)
from .updaters import sequential_step, wri_assimilated_wavefield, wri_update

CHECKS = ("gradient", "hessian", "identity", "equivalence", "limits")

TOLERANCES = {
    "gradient_max_rel": 1e-5,
    "full_vs_fd_fro_rel": 1e-4,
    "r_routes_fro_rel": 1e-8,
    "source_identity_rel": 1e-9,
    "field_identity_rel": 1e-10,
    "seq_wri_max_rel": 1e-10,
    "agn_to_gn_fro_rel": 1e-6,
    "scatter_decay_rel": 1e-3,
}


def _measure(name: str, value: float) -> dict:
    tol = TOLERANCES[name.rsplit("@", 1)[0]]
    return {"name": name, "value": float(value), "tolerance": tol,
            "pass": bool(value < tol)}


def _report(check: str, measurements: list[dict]) -> dict:
    return {"check": check, "measurements": measurements,
            "pass": all(m["pass"] for m in measurements)}


def _oracle_pieces(eps=None, with_scatter=False):
    model, geom, observed, freq = oracle_fixture()
    op = assemble(model, freq, DIRICHLET)
    fact = factorize(op)
    sampling = sampling_operator(geom, op)
    sources = source_matrix(geom, op)
    bundles, dh, cols = build_bundles(fact, sampling, sources, observed,
                                      eps=eps, with_scatter=with_scatter)
    return model, geom, observed, freq, op, fact, sampling, sources, bundles, dh, cols


def check_gradient() -> dict:
    """Adjoint-state gradient against central differences of the misfit."""
    model, geom, observed, freq, _, fact, sampling, _, bundles, _, _ = _oracle_pieces()
    g = gradient(bundles, fact, sampling)

    def fn(values):
        return misfit_of_values(values, model, geom, observed, freq, DIRICHLET)

    g_fd = fd_gradient(fn, model.values, rel_step=1e-6)
    err = np.max(np.abs(g - g_fd)) / np.max(np.abs(g_fd))
    return _report("gradient", [_measure("gradient_max_rel", err)])


def check_hessian() -> dict:
    """Full Hessian against the FD oracle, and the two R assembly routes."""
    model, geom, observed, freq, _, fact, sampling, _, bundles, _, cols = \
        _oracle_pieces()
    if cols is None:
        cols = receiver_columns(fact, sampling)
    gn = gn_hessian(bundles, fact, sampling, cols)
    r_direct = full_r_direct(bundles, fact, sampling)
    h_full = gn.values + r_direct
    h_fd = fd_hessian_oracle(model, geom, observed, freq, DIRICHLET).values
    err_fd = np.linalg.norm(h_full - h_fd) / np.linalg.norm(h_fd)
    r_dec, _ = full_r_decomposed(bundles, fact, sampling, eps=0.0,
                                 gram_derivative="analytic", receiver_cols=cols)
    err_routes = np.linalg.norm(r_direct - r_dec) / np.linalg.norm(r_direct)
    return _report("hessian", [_measure("full_vs_fd_fro_rel", err_fd),
                               _measure("r_routes_fro_rel", err_routes)])


def check_identity() -> dict:
    """Assimilated-wavefield identities on the scaled inclusion setup."""
    true_model, initial, geom, freq, pml = inclusion_small_fixture()
    observed = synthetic_data(true_model, geom, freq, pml)
    op = assemble(initial, freq, pml)
    fact = factorize(op)
    sampling = sampling_operator(geom, op)
    sources = source_matrix(geom, op)
    cols = receiver_columns(fact, sampling)
    mean_diag = float(np.mean(np.sum(np.abs(cols) ** 2, axis=0)))
    measurements = []
    for scale in (1e-4, 1e-2, 1.0):
        awf = wri_assimilated_wavefield(fact, sampling, observed, sources,
                                        mu=scale * mean_diag, check_identity=True)
        measurements.append(_measure(
            f"source_identity_rel@mu={scale:g}*mean",
            awf.diagnostics["source_identity_rel"]))
        measurements.append(_measure(
            f"field_identity_rel@mu={scale:g}*mean",
            awf.diagnostics["field_identity_rel"]))
    return _report("identity", measurements)


def check_equivalence(checked_iterations=(1, 5, 10)) -> dict:
    """Sequential-solve update against the penalty-method update along a run.

    Runs the scaled inclusion inversion with the sequential method; at the
    checked iterations both updates are computed from the same model (the
    penalty route goes through the normal-equation wavefield solve) and
    compared component by component.
    """
    true_model, initial, geom, freq, pml = inclusion_small_fixture()
    observed = synthetic_data(true_model, geom, freq, pml)
    model = initial.copy()
    eps = None
    measurements = []

    def eval_misfit(values):
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            return float("inf")
        mm = model.with_values(values)
        opx = assemble(mm, freq, pml)
        factx = factorize(opx)
        samplingx = sampling_operator(geom, opx)
        fields = factx.solve(source_matrix(geom, opx))
        return misfit_from_residuals(
            residuals(observed, predicted_data(samplingx, fields)))

    for k in range(1, max(checked_iterations) + 1):
        op = assemble(model, freq, pml)
        fact = factorize(op)
        sampling = sampling_operator(geom, op)
        sources = source_matrix(geom, op)
        bundles, dh, _ = build_bundles(fact, sampling, sources, observed,
                                       eps=eps, with_scatter=True)
        eps = dh.eps
        update = sequential_step([(bundles, op)])
        if k in checked_iterations:
            awf = wri_assimilated_wavefield(fact, sampling, observed, sources,
                                            mu=eps, check_identity=False)
            _, wri_upd = wri_update([(awf, sources, op)], model)
            err = (np.max(np.abs(update.delta_m - wri_upd.delta_m))
                   / np.max(np.abs(update.delta_m)))
            measurements.append(_measure(f"seq_wri_max_rel@iter={k}", err))
        misfit_now = misfit_from_residuals(
            np.stack([b.residual for b in bundles], axis=0))
        alpha = 1.0
        accepted = False
        for _ in range(13):
            f1 = eval_misfit(model.values + alpha * update.delta_m)
            if np.isfinite(f1) and f1 < misfit_now:
                accepted = True
                break
            alpha *= 0.5
        if accepted:
            model = model.with_values(model.values + alpha * update.delta_m)
    return _report("equivalence", measurements)


def check_limits() -> dict:
    """Large-damping limits: AGN collapses to GN and the scatter source
    decays at the 1/eps rate."""
    (model, geom, observed, freq, op, fact, sampling, sources,
     bundles_plain, _, cols) = _oracle_pieces()
    if cols is None:
        cols = receiver_columns(fact, sampling)
    gram = cols.T @ np.conj(cols)
    gram_norm = float(np.linalg.norm(gram, 2))

    eps_star = 1e8 * gram_norm
    bundles, _, _ = build_bundles(fact, sampling, sources, observed,
                                  eps=eps_star, with_scatter=True,
                                  receiver_cols=cols)
    h_gn = gn_hessian(bundles_plain, fact, sampling, cols).values
    h_agn = agn_hessian(bundles, fact, sampling, cols).values
    err_collapse = np.linalg.norm(h_agn - h_gn) / np.linalg.norm(h_gn)

    eps_rate = 1e6 * gram_norm
    bundles_rate, _, _ = build_bundles(fact, sampling, sources, observed,
                                       eps=eps_rate, with_scatter=True,
                                       receiver_cols=cols)
    scatter = np.stack([b.scatter_source for b in bundles_rate], axis=1)
    res = np.stack([b.residual for b in bundles_rate], axis=0)
    back = fact.solve(sampling.inject(res.T), adjoint=True)
    ratio = np.linalg.norm(scatter) * eps_rate / np.linalg.norm(back)
    return _report("limits", [
        _measure("agn_to_gn_fro_rel", err_collapse),
        _measure("scatter_decay_rel", abs(ratio - 1.0)),
    ])


_CHECK_FUNCTIONS = {
    "gradient": check_gradient,
    "hessian": check_hessian,
    "identity": check_identity,
    "equivalence": check_equivalence,
    "limits": check_limits,
}


def run_check(name: str) -> dict:
    if name not in _CHECK_FUNCTIONS:
        raise ConfigurationError(
            f"unknown check {name!r}; expected one of {CHECKS} or 'all'")
    return _CHECK_FUNCTIONS[name]()


def run_all() -> list[dict]:
    return [run_check(name) for name in CHECKS]
