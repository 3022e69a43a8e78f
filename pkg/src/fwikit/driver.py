"""Experiment orchestration: configs, synthetic data, the inversion loop,
the verification suite, and method comparison tables."""

from __future__ import annotations

import dataclasses
import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import datafiles
from .acquisition import AcquisitionGeometry, load_geometry_file, save_geometry_file
from .benchmarks import build_concrete_model, build_inclusion_model
from .errors import ConfigurationError, NumericalError
from .fixtures import inclusion_small_fixture, oracle_fixture, synthetic_data
from .grids import Model, load_velocity_model, save_velocity_model
from .helmholtz import (DIRICHLET, PMLConfig, assemble, factorize,
                        sampling_operator, source_matrix)
from .hessians import (agn_hessian, fd_gradient, fd_hessian, fd_hessian_oracle,
                       full_hessian, full_r_decomposed, full_r_direct,
                       gn_hessian, gradient, misfit_of_values, pseudo_hessian)
from .sensitivity import (build_bundles, data_hessian, misfit_from_residuals,
                          predicted_data, receiver_columns, residuals,
                          scatter_sources)
from .updaters import (ModelUpdate, newton_step, psd_step, sequential_step,
                       wri_assimilated_wavefield, wri_update)

METHODS = ("psd", "gn", "fn", "agn", "agn-seq", "wri")
EXPERIMENTS = ("inclusion", "concrete", "custom")


@dataclass
class InversionConfig:
    """Flat run configuration; field names double as config-file keys."""

    experiment: str = "inclusion"
    method: str | None = None
    frequencies_hz: tuple[float, ...] = (5.0,)
    iterations: int = 20
    eps: float | None = None          # data-space damping; None = auto
    mu: float | None = None           # penalty parameter; None = eps
    lambda0: float = 1e-2
    pml_width: int = 10
    pml_strength: float = 10.0
    seed: int = 0
    data_dir: str = "data"
    out_dir: str = "out"
    clamp: bool = False
    true_model: str | None = None     # custom-experiment paths
    initial_model: str | None = None
    geometry: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(
                f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.method is not None and self.method not in METHODS:
            raise ConfigurationError(
                f"unknown method {self.method!r}; expected one of {METHODS}")
        freqs = tuple(float(f) for f in self.frequencies_hz)
        if not freqs or any(f <= 0 for f in freqs):
            raise ConfigurationError("frequencies_hz must be positive")
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ConfigurationError("frequencies_hz must be strictly increasing")
        self.frequencies_hz = freqs
        if self.iterations < 0:
            raise ConfigurationError("iterations must be nonnegative")
        if self.eps is not None and self.eps < 0:
            raise ConfigurationError("eps must be nonnegative")
        if self.mu is not None and self.mu <= 0:
            raise ConfigurationError("mu must be positive")
        if self.lambda0 < 0:
            raise ConfigurationError("lambda0 must be nonnegative")
        if self.pml_width < 0:
            raise ConfigurationError("pml_width must be nonnegative")
        if self.experiment == "custom":
            missing = [k for k in ("true_model", "initial_model", "geometry")
                       if getattr(self, k) is None]
            # a custom run can do without the true model (no RMS tracking)
            if "initial_model" in missing or "geometry" in missing:
                raise ConfigurationError(
                    "custom experiment needs initial_model and geometry paths")

    @property
    def pml(self) -> PMLConfig:
        return PMLConfig(self.pml_width, self.pml_strength)


_LIST_KEYS = {"frequencies_hz"}
_INT_KEYS = {"iterations", "pml_width", "seed"}
_FLOAT_KEYS = {"eps", "mu", "lambda0", "pml_strength"}
_BOOL_KEYS = {"clamp"}
_STR_KEYS = {"experiment", "method", "data_dir", "out_dir",
             "true_model", "initial_model", "geometry"}
_ALL_KEYS = _LIST_KEYS | _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS


def parse_config(path) -> InversionConfig:
    """Read ``key = value`` lines; unknown keys are errors."""
    values: dict = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{ln}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _ALL_KEYS:
                raise ConfigurationError(f"{path}:{ln}: unknown config key {key!r}")
            if key in values:
                raise ConfigurationError(f"{path}:{ln}: duplicate config key {key!r}")
            try:
                if key in _LIST_KEYS:
                    values[key] = tuple(float(tok) for tok in val.replace(",", " ").split())
                elif key in _INT_KEYS:
                    values[key] = int(val)
                elif key in _FLOAT_KEYS:
                    values[key] = None if val.lower() in ("auto", "none") else float(val)
                elif key in _BOOL_KEYS:
                    if val.lower() not in ("true", "false", "0", "1"):
                        raise ValueError(val)
                    values[key] = val.lower() in ("true", "1")
                else:
                    values[key] = val
            except ValueError as exc:
                raise ConfigurationError(
                    f"{path}:{ln}: bad value {val!r} for {key}: {exc}") from exc
    return InversionConfig(**values)


def _experiment_models(config: InversionConfig):
    if config.experiment == "inclusion":
        return build_inclusion_model()
    if config.experiment == "concrete":
        return build_concrete_model()
    initial = load_velocity_model(config.initial_model)
    geom = load_geometry_file(config.geometry, initial.grid)
    true_model = (load_velocity_model(config.true_model)
                  if config.true_model else None)
    return true_model, initial, geom


def synthesize(config: InversionConfig, progress=None) -> list[str]:
    """Generate observed data for every configured frequency.

    Writes the true/initial velocity models, the geometry file, and one
    observed-data file per frequency into ``data_dir``. The data come from
    the same solver used for inversion (inverse crime by design: this toolkit
    studies optimizer behavior, not discretization error).
    """
    true_model, initial, geom = _experiment_models(config)
    if true_model is None:
        raise ConfigurationError("synthesis needs a true model")
    os.makedirs(config.data_dir, exist_ok=True)
    save_velocity_model(os.path.join(config.data_dir, "true_model.txt"), true_model)
    save_velocity_model(os.path.join(config.data_dir, "initial_model.txt"), initial)
    save_geometry_file(os.path.join(config.data_dir, "geometry.txt"), geom)
    paths = []
    for freq in config.frequencies_hz:
        data = synthetic_data(true_model, geom, freq, config.pml)
        path = datafiles.observed_path(config.data_dir, freq)
        datafiles.save_observed(path, freq, data)
        paths.append(path)
        if progress:
            progress(f"synthesized {geom.n_sources}x{geom.n_receivers} data at {freq:g} Hz")
    return paths


@dataclass
class InversionResult:
    """Per-iteration records plus the final model.

    ``records`` rows are (iter, freq_hz, misfit, model_rms) with a leading
    iteration-0 row per frequency block; ``steps`` holds one diagnostics dict
    per executed iteration.
    """

    records: list[tuple[int, float, float, float]] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    final_model: Model | None = None
    wall_time: float = 0.0

    @property
    def final_misfit(self) -> float:
        return self.records[-1][2]


def model_rms(model: Model, true_model: Model | None) -> float:
    """RMS velocity difference (m/s) over physical nodes; NaN without truth."""
    if true_model is None:
        return float("nan")
    dv = model.velocity() - true_model.velocity()
    return float(np.sqrt(np.mean(dv * dv)))


def _load_run_inputs(config: InversionConfig):
    data_dir = config.data_dir
    initial_path = os.path.join(data_dir, "initial_model.txt")
    geometry_path = os.path.join(data_dir, "geometry.txt")
    if not os.path.exists(initial_path) or not os.path.exists(geometry_path):
        raise ConfigurationError(
            f"{data_dir} is missing synthesized inputs; run synthesis first")
    initial = load_velocity_model(initial_path)
    geom = load_geometry_file(geometry_path, initial.grid)
    true_path = os.path.join(data_dir, "true_model.txt")
    true_model = load_velocity_model(true_path) if os.path.exists(true_path) else None
    observed = {}
    for freq in config.frequencies_hz:
        path = datafiles.observed_path(data_dir, freq)
        if not os.path.exists(path):
            raise ConfigurationError(f"missing observed data file {path}")
        file_freq, block = datafiles.load_observed(path)
        if abs(file_freq - freq) > 1e-9 * max(1.0, freq):
            raise ConfigurationError(
                f"{path}: header frequency {file_freq} does not match {freq}")
        if block.shape != (geom.n_sources, geom.n_receivers):
            raise ConfigurationError(
                f"{path}: data shape {block.shape} does not match acquisition "
                f"({geom.n_sources}, {geom.n_receivers})")
        observed[freq] = block
    return initial, geom, true_model, observed


def _clamp_values(values: np.ndarray, true_model: Model) -> np.ndarray:
    v_true = true_model.velocity()
    lo, hi = 0.5 * v_true.min(), 1.5 * v_true.max()
    vel = np.clip(1.0 / np.sqrt(values), lo, hi)
    return 1.0 / (vel * vel)


def _halving_accept(model: Model, delta: np.ndarray, f0: float, eval_misfit,
                    max_halvings: int = 12):
    """Scale back a raw pointwise step until the misfit decreases."""
    if not np.any(delta):
        return 0.0, f0, False
    alpha = 1.0
    for _ in range(max_halvings + 1):
        f1 = eval_misfit(model.values + alpha * delta)
        if np.isfinite(f1) and f1 < f0:
            return alpha, f1, False
        alpha *= 0.5
    return 0.0, f0, True


def invert(config: InversionConfig, progress=None) -> InversionResult:
    """Run the configured inversion and persist its outputs.

    For each frequency in order, runs ``iterations`` steps of the selected
    method from the current model (frequency continuation), recording misfit
    and model RMS error after every step. Writes curve.csv, final_model.txt,
    and inversion_log.txt into ``out_dir``; on numerical failure the partial
    results are persisted before the error propagates.
    """
    if config.method is None:
        raise ConfigurationError("invert needs a method")
    method = config.method
    initial, geom, true_model, observed_by_freq = _load_run_inputs(config)
    if config.clamp and true_model is None:
        raise ConfigurationError("clamp requires the true model in data_dir")
    pml = config.pml
    model = initial.copy()
    result = InversionResult()
    start = time.perf_counter()
    iter_index = 0

    def eval_misfit_factory(freq, observed):
        def eval_misfit(values):
            # infeasible squared slowness: reject the candidate, do not raise
            if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
                return float("inf")
            mm = model.with_values(values)
            op = assemble(mm, freq, pml)
            fact = factorize(op)
            sampling = sampling_operator(geom, op)
            fields = fact.solve(source_matrix(geom, op))
            return misfit_from_residuals(
                residuals(observed, predicted_data(sampling, fields)))
        return eval_misfit

    try:
        for freq in config.frequencies_hz:
            observed = observed_by_freq[freq]
            eval_misfit = eval_misfit_factory(freq, observed)
            eps_block = config.eps
            mu_block = config.mu
            lambda_start = config.lambda0
            need_scatter = method in ("agn", "agn-seq")
            for k in range(config.iterations + 1):
                op = assemble(model, freq, pml)
                fact = factorize(op)
                sampling = sampling_operator(geom, op)
                sources = source_matrix(geom, op)
                receiver_cols = None
                dh = None
                if method in ("gn", "fn", "agn") or need_scatter or method == "wri":
                    receiver_cols = receiver_columns(fact, sampling)
                if need_scatter or (method == "wri" and mu_block is None):
                    dh = data_hessian(fact, sampling, eps_block, receiver_cols)
                    eps_block = dh.eps
                if method == "wri" and mu_block is None:
                    mu_block = eps_block
                bundles, dh, receiver_cols = build_bundles(
                    fact, sampling, sources, observed, eps=eps_block,
                    with_scatter=need_scatter, receiver_cols=receiver_cols, dh=dh)
                misfit_now = misfit_from_residuals(
                    np.stack([b.residual for b in bundles], axis=0))
                result.records.append(
                    (iter_index, freq, misfit_now, model_rms(model, true_model)))
                if k == config.iterations:
                    break

                if method == "psd":
                    g = gradient(bundles, fact, sampling)
                    update = psd_step(pseudo_hessian(bundles), g, model,
                                      eval_misfit, misfit_before=misfit_now)
                elif method in ("gn", "fn", "agn"):
                    g = gradient(bundles, fact, sampling)
                    if not np.any(g):
                        # zero gradient: the Newton step is exactly zero, no
                        # need to assemble curvature
                        update = ModelUpdate(np.zeros_like(g), method, 0.0,
                                             False, misfit_now, misfit_now)
                    else:
                        if method == "gn":
                            hess = gn_hessian(bundles, fact, sampling, receiver_cols)
                        elif method == "agn":
                            hess = agn_hessian(bundles, fact, sampling, receiver_cols)
                        else:
                            hess = full_hessian(bundles, fact, sampling, receiver_cols)
                        update = newton_step(hess, g, model, eval_misfit,
                                             lambda0=lambda_start, method=method,
                                             misfit_before=misfit_now)
                        if not update.stagnated:
                            # warm-start the next backoff one decade below the
                            # accepted damping to avoid re-walking the ladder
                            lambda_start = max(config.lambda0,
                                               update.diagnostics["lambda"] / 10.0)
                elif method == "agn-seq":
                    update = sequential_step([(bundles, op)])
                    alpha, f1, stalled = _halving_accept(
                        model, update.delta_m, misfit_now, eval_misfit)
                    update.delta_m = alpha * update.delta_m
                    update.step_scale = alpha
                    update.stagnated = stalled
                    update.misfit_before, update.misfit_after = misfit_now, f1
                elif method == "wri":
                    awf = wri_assimilated_wavefield(
                        fact, sampling, observed, sources, mu_block,
                        check_identity=False)
                    _, update = wri_update([(awf, sources, op)], model)
                    alpha, f1, stalled = _halving_accept(
                        model, update.delta_m, misfit_now, eval_misfit)
                    update.delta_m = alpha * update.delta_m
                    update.step_scale = alpha
                    update.stagnated = stalled
                    update.misfit_before, update.misfit_after = misfit_now, f1
                else:  # pragma: no cover - guarded in __post_init__
                    raise ConfigurationError(f"unknown method {method!r}")

                new_values = model.values + update.delta_m
                if config.clamp:
                    new_values = _clamp_values(new_values, true_model)
                model = model.with_values(new_values)
                iter_index += 1
                result.steps.append({
                    "iter": iter_index, "freq_hz": freq, "method": method,
                    "step_scale": update.step_scale,
                    "stagnated": update.stagnated,
                    "misfit_before": update.misfit_before,
                    "misfit_after": update.misfit_after,
                    **update.diagnostics,
                })
                if progress:
                    progress(f"[{method}] f={freq:g} Hz iter {k + 1}/"
                             f"{config.iterations} misfit {update.misfit_after:.6e}"
                             + (" (stagnated)" if update.stagnated else ""))
            iter_index += 1
    finally:
        result.final_model = model
        result.wall_time = time.perf_counter() - start
        _persist_result(config, result)
    return result


def _persist_result(config: InversionConfig, result: InversionResult) -> None:
    os.makedirs(config.out_dir, exist_ok=True)
    datafiles.save_curve_csv(os.path.join(config.out_dir, "curve.csv"),
                             result.records)
    if result.final_model is not None:
        save_velocity_model(os.path.join(config.out_dir, "final_model.txt"),
                            result.final_model)
    with open(os.path.join(config.out_dir, "inversion_log.txt"), "w") as fh:
        fh.write(f"# method={config.method} wall_time={result.wall_time:.3f}s\n")
        for step in result.steps:
            fh.write(" ".join(f"{k}={v}" for k, v in step.items()) + "\n")


def compare(configs: list[InversionConfig], out_csv: str,
            progress=None) -> list[list]:
    """Run several configs on shared data and tabulate misfit per iteration.

    All configs must share experiment, data, frequency schedule, and
    iteration count; only the methods (and method parameters) may differ.
    Writes the aligned CSV and a standalone plotting script next to it.
    """
    if not configs:
        raise ConfigurationError("compare needs at least one config")
    base = configs[0]
    for other in configs[1:]:
        for key in ("experiment", "data_dir", "frequencies_hz", "iterations"):
            if getattr(other, key) != getattr(base, key):
                raise ConfigurationError(
                    f"compare configs disagree on {key}: "
                    f"{getattr(base, key)!r} vs {getattr(other, key)!r}")
    names, columns = [], []
    for config in configs:
        if config.method is None:
            raise ConfigurationError("compare configs need methods")
        name = config.method
        if name in names:
            name = f"{name}.{names.count(name) + 1}"
        names.append(name)
        result = invert(config, progress=progress)
        columns.append([rec[2] for rec in result.records])
    rows = len(columns[0])
    if any(len(col) != rows for col in columns):
        raise ConfigurationError("compare runs produced unequal record counts")
    os.makedirs(os.path.dirname(os.path.abspath(out_csv)), exist_ok=True)
    with open(out_csv, "w") as fh:
        fh.write("iter," + ",".join(names) + "\n")
        for i in range(rows):
            fh.write(str(i) + "," + ",".join(f"{col[i]:.17g}" for col in columns)
                     + "\n")
    _emit_plot_script(out_csv)
    return [names] + [[i] + [col[i] for col in columns] for i in range(rows)]


_PLOT_SCRIPT = '''#!/usr/bin/env python3
"""Plot misfit-vs-iteration curves from the comparison CSV (sibling file)."""
import csv
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

csv_path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
    os.path.dirname(os.path.abspath(__file__)), {csv_name!r})
with open(csv_path) as fh:
    reader = csv.reader(fh)
    header = next(reader)
    rows = [[float(tok) for tok in row] for row in reader]
iters = [row[0] for row in rows]
plt.figure(figsize=(6, 4))
for j, name in enumerate(header[1:], start=1):
    plt.semilogy(iters, [row[j] for row in rows], label=name)
plt.xlabel("iteration")
plt.ylabel("misfit")
plt.legend()
plt.tight_layout()
out_png = os.path.splitext(csv_path)[0] + ".png"
plt.savefig(out_png, dpi=150)
print("wrote", out_png)
'''


def _emit_plot_script(out_csv: str) -> str:
    stem, _ = os.path.splitext(out_csv)
    path = stem + "_plot.py"
    with open(path, "w") as fh:
        fh.write(_PLOT_SCRIPT.format(csv_name=os.path.basename(out_csv)))
    return path
