"""Experiment pipelines behind the command-line driver.

A run generates (or reads) data, optionally estimates gradients, identifies
every configured model, scores predictions, builds uncertainty envelopes for
one model and writes models, metrics, CSV traces and a manifest with content
hashes.  Nothing in the outputs depends on wall-clock time or the output path,
so identical configs give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .basis import monomial_basis
from .bounds import (
    build_envelope,
    estimate_lipschitz,
    estimate_noise_bound,
    envelope_batch,
    relabs_noise_bounds,
    residual_channels,
    write_envelope_csv,
)
from .config import ModelConfig, RunConfig, dump_config
from .data import Dataset, build_regression_matrices, read_csv
from .errors import ConfigError, SysIdError
from .examples import (
    ChuaParams,
    NoiseSpec,
    chua_io_coefficients,
    chua_true_derivatives,
    gen_univariate,
    simulate_chua,
    univariate_truth,
    univariate_truth_derivative,
)
from .gradest import GradEstConfig, estimate_gradients
from .identify import Model, NoiseBounds, check_ffs_membership, identify_method1, identify_method2
from .predict import (
    LagSpec,
    build_narx_dataset,
    direct_predictions,
    iterated_predictions,
    narx_index_table,
    rmse,
    write_trace_csv,
)
from .sobolev_metrics import AnalyticFunction, GridSpec, sobolev_error
from .solver import SolverConfig

log = logging.getLogger(__name__)

# Above this many design-matrix entries, regression blocks are rebuilt on demand.
LAZY_ENTRIES = 4_000_000


class StageError(SysIdError):
    """A pipeline stage failed; ``cause`` keeps the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name: str):
    log.info("stage: %s", name)
    try:
        yield
    except StageError:
        raise
    except (SysIdError, ValueError, ArithmeticError, KeyError, OSError) as exc:
        raise StageError(name, exc) from exc


def derive_seeds(seed: int, names) -> dict[str, int]:
    """Independent child seeds for each named random stream."""
    state = np.random.SeedSequence(seed).generate_state(len(names))
    return {n: int(s) for n, s in zip(names, state)}


@dataclass
class RunResult:
    metrics: dict
    files: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)


class _Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []

    def path(self, rel: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if rel not in self.files:
            self.files.append(rel)
        return p


def _solver_config(config: RunConfig) -> SolverConfig:
    s = config.solver
    return SolverConfig(max_iterations=s.max_iterations, tol=s.tol, plateau_window=s.plateau_window)


def _gradest_config(config: RunConfig) -> GradEstConfig:
    g = config.gradest
    return GradEstConfig(radius=g.radius, radius_fraction=g.radius_fraction,
                         min_neighbors=g.min_neighbors, smoothing=g.smoothing)


def _with_derivative_source(mc: ModelConfig, base: Dataset, cache: dict, key, config: RunConfig,
                            true_gradient=None) -> Dataset:
    if not mc.uses_derivatives:
        return base.without_derivatives()
    if mc.derivatives == "data":
        if not base.has_derivatives:
            raise ConfigError(f"model {mc.name}: the dataset has no derivative columns")
        return base
    if mc.derivatives == "true":
        return base.with_derivatives(true_gradient(base.x), "analytic")
    if (key, "estimated") not in cache:
        cache[(key, "estimated")] = estimate_gradients(base.without_derivatives(), _gradest_config(config))
    return cache[(key, "estimated")]


def _noise_bounds_for(mc: ModelConfig, ds: Dataset, config: RunConfig) -> NoiseBounds:
    q = math.inf if mc.q == "inf" else 2
    channels = [0] + (list(range(1, ds.n_x + 1)) if ds.has_derivatives else [])
    given = {0: mc.mu_value}
    for i in channels[1:]:
        given[i] = mc.mu_derivative
    if all(v is not None for v in given.values()):
        return NoiseBounds(given, q)
    # Missing radii: estimate per-sample levels with fhat = 0, then convert to the q-norm of the sequence.
    lip = estimate_lipschitz(ds, None, config.bounds.nu, _gradest_config(config), channels)
    mu = {}
    for i in channels:
        if given[i] is not None:
            mu[i] = given[i]
            continue
        cap = lip.gamma[0] if i > 0 else None
        level = estimate_noise_bound(ds, i, lip.gamma[i], config.bounds.nu, gamma_bar=cap)
        mu[i] = level if q == math.inf else level * math.sqrt(ds.L)
    return NoiseBounds(mu, q)


def fit_model(mc: ModelConfig, ds: Dataset, basis, config: RunConfig) -> tuple[Model, dict]:
    """Identify one model on ``ds`` (which already carries the derivative channels it needs)."""
    lazy = len(basis) * ds.L * (ds.n_x + 1) > LAZY_ENTRIES
    extra = {}
    if mc.method == 2:
        weights = {0: mc.value_weight}
        if mc.derivative_weight > 0:
            weights.update({i: mc.derivative_weight for i in range(1, ds.n_x + 1)})
        channels = [i for i, w in weights.items() if w > 0]
        mats = build_regression_matrices(ds, basis, channels, lazy=lazy)
        model = identify_method2(mats, weights, mc.Lambda, mc.r, _solver_config(config))
    else:
        mats = build_regression_matrices(ds, basis, lazy=lazy)
        bounds = _noise_bounds_for(mc, ds, config)
        model = identify_method1(mats, bounds, mc.r, _solver_config(config))
        residuals, member = check_ffs_membership(model, mats, bounds)
        extra = {"feasible_set_member": member, "mu": {str(i): m for i, m in bounds.mu.items()}}
    solve = model.info["solve"]
    extra.update({"iterations": solve["iterations"], "objective": solve["objective"],
                  "nonzero_coefficients": int(np.count_nonzero(model.coef))})
    return model, extra


def _envelope_for(model: Model, ds: Dataset, config: RunConfig, channels) -> tuple:
    """Lipschitz constants, noise bounds and envelope spec around ``model``."""
    b = config.bounds
    channels = sorted(set(channels) | {0})
    gcfg = _gradest_config(config)
    lip = estimate_lipschitz(ds, model, b.nu, gcfg, channels)
    mu = {}
    for i in channels:
        cap = lip.gamma[0] if i > 0 else None
        if ds.has_derivatives or i == 0:
            mu[i] = estimate_noise_bound(ds, i, lip.gamma[i], b.nu, model=model, gamma_bar=cap)
    if b.zeta_r is not None:
        res = residual_channels(ds, model, gcfg)
        per_sample = {}
        for i in mu:
            level = b.nu * float(np.linalg.norm(res[i]))
            per_sample[i] = relabs_noise_bounds(res[i], b.zeta_r, b.zeta_a, level)
        noise = NoiseBounds({i: b.nu * float(np.linalg.norm(res[i])) for i in mu}, 2, per_sample)
    else:
        noise = NoiseBounds(mu, math.inf)
    spec = build_envelope(ds, model, lip, noise, sorted(mu), gcfg)
    summary = {
        "gamma": {str(i): g for i, g in sorted(lip.gamma.items())},
        "mu": {str(i): m for i, m in sorted(noise.mu.items())},
        "q": "2" if b.zeta_r is not None else "inf",
    }
    return spec, summary


def _envelope_stats(lower, upper, truth) -> dict:
    inside = (lower <= truth) & (truth <= upper)
    return {"containment": float(np.mean(inside)), "mean_width": float(np.mean(upper - lower))}


def run_univariate(config: RunConfig, out: _Outputs) -> RunResult:
    uc = config.univariate
    seeds = derive_seeds(config.seed, ["noise"])
    with stage("generate"):
        ident, val = gen_univariate(uc.L, uc.domain, NoiseSpec(uc.noise_std, seeds["noise"]),
                                    include_derivatives=True, L_validation=uc.L_validation)
        basis = monomial_basis(1, uc.max_degree)
        truth = AnalyticFunction(1, lambda X: univariate_truth(X[:, 0]), [lambda X: univariate_truth_derivative(X[:, 0])])
        grid = GridSpec((uc.domain[0],), (uc.domain[1],), (uc.L_validation,))
    metrics = {"experiment": "univariate", "models": {}}
    models = {}
    for mc in config.models:
        with stage(f"identify:{mc.name}"):
            ds = _with_derivative_source(mc, ident, {}, "ident", config)
            model, extra = fit_model(mc, ds, basis, config)
            model.save(out.path(f"models/{mc.name}.json"))
            models[mc.name] = (model, ds)
        with stage(f"score:{mc.name}"):
            metrics["models"][mc.name] = {
                "rmse": rmse(model.value(val.x), val.z),
                "rmse_d1": rmse(model.partial(val.x, 1), val.dz[:, 0]),
                "sobolev_l2": sobolev_error(model, truth, grid, 2).to_dict(),
                "sobolev_linf": sobolev_error(model, truth, grid, math.inf).to_dict(),
                "coefficients": [float(a) for a in model.coef],
                **extra,
            }
    if config.bounds.enabled:
        with stage("bounds"):
            model, _ = models[config.bounds.model]
            spec, summary = _envelope_for(model, ident, config, config.bounds.channels)
            summary["channels"] = {}
            for i in spec.channels:
                lo, up = envelope_batch(spec, val.x, i)
                write_envelope_csv(out.path(f"envelopes/{config.bounds.model}_ch{i}.csv"), val.x, lo, up,
                                   model.channel(val.x, i))
                summary["channels"][str(i)] = _envelope_stats(lo, up, val.channel(i))
            metrics["bounds"] = {"model": config.bounds.model, **summary}
    return RunResult(metrics, seeds=seeds)


def _chua_lags(config: RunConfig, k: int = 1, direct: bool = False) -> LagSpec:
    c = config.chua
    return LagSpec(c.n_a, c.n_b, k, direct, c.input_delay)


def run_chua(config: RunConfig, out: _Outputs) -> RunResult:
    c = config.chua
    seeds = derive_seeds(config.seed, ["ident_input", "ident_disturbance", "val_input", "val_disturbance",
                                       "coefficients"])
    params = ChuaParams(c.alpha, c.beta, c.R, c.c1, c.c3, c.Ts)
    needs_true = any(m.derivatives == "true" and m.uses_derivatives for m in config.models)
    if needs_true and (c.n_a, c.n_b, c.input_delay) != (3, 2, 1):
        raise ConfigError("true Chua derivatives are defined for n_a=3, n_b=2, input_delay=1 only")
    if any(m.derivatives == "true" and m.structure == "direct" and m.uses_derivatives for m in config.models):
        raise ConfigError("true derivatives are available for one-step Chua models only")
    with stage("generate"):
        ident = simulate_chua(params, NoiseSpec(c.input_std, seeds["ident_input"]),
                              NoiseSpec(c.disturbance_std, seeds["ident_disturbance"]), c.duration, c.x0)
        val = simulate_chua(params, NoiseSpec(c.input_std, seeds["val_input"]),
                            NoiseSpec(c.disturbance_std, seeds["val_disturbance"]), c.duration, c.x0)
        metrics = {"experiment": "chua", "std": c.disturbance_std, "rmse_k": {}, "models": {}}
        true_grad = None
        if needs_true:
            b, fit_res = chua_io_coefficients(params, NoiseSpec(1.0, seeds["coefficients"]), c.duration, c.x0)
            metrics["io_coefficients"] = {"b": [float(v) for v in b], "fit_residual_rms": fit_res}
            true_grad = lambda X: chua_true_derivatives(params, b, X)  # noqa: E731
    cache: dict = {}
    fitted: dict = {}
    for mc in config.models:
        metrics["rmse_k"][mc.name] = {}
        metrics["models"][mc.name] = {}
        if mc.structure == "one_step":
            lags = _chua_lags(config)
            with stage(f"identify:{mc.name}"):
                base = build_narx_dataset(ident, lags)
                ds = _with_derivative_source(mc, base, cache, 1, config, true_grad)
                model, extra = fit_model(mc, ds, monomial_basis(lags.n_x, c.max_degree), config)
                model.save(out.path(f"models/{mc.name}.json"))
                metrics["models"][mc.name]["1"] = extra
                fitted[(mc.name, None)] = (model, ds, lags)
            for k in c.horizons:
                with stage(f"predict:{mc.name}:k={k}"):
                    t, pred = iterated_predictions(model, val, k, lags)
                    metrics["rmse_k"][mc.name][str(k)] = rmse(pred, val.y[t])
                    write_trace_csv(out.path(f"traces/{mc.name}_k{k}.csv"), t, val.y[t], pred)
        else:
            for k in c.horizons:
                lags = _chua_lags(config, k, True)
                with stage(f"identify:{mc.name}:k={k}"):
                    base = build_narx_dataset(ident, lags)
                    ds = _with_derivative_source(mc, base, cache, ("direct", k), config)
                    model, extra = fit_model(mc, ds, monomial_basis(lags.n_x, c.max_degree), config)
                    model.save(out.path(f"models/{mc.name}_k{k}.json"))
                    metrics["models"][mc.name][str(k)] = extra
                    fitted[(mc.name, k)] = (model, ds, lags)
                with stage(f"predict:{mc.name}:k={k}"):
                    t, pred = direct_predictions(model, val, lags)
                    metrics["rmse_k"][mc.name][str(k)] = rmse(pred, val.y[t])
                    write_trace_csv(out.path(f"traces/{mc.name}_k{k}.csv"), t, val.y[t], pred)
    if config.bounds.enabled:
        with stage("bounds"):
            b = config.bounds
            key = (b.model, b.horizon) if (b.model, b.horizon) in fitted else (b.model, None)
            model, ds, lags = fitted[key]
            spec, summary = _envelope_for(model, ds, config, (0,))
            vds = build_narx_dataset(val, lags)
            _, _, _, t = narx_index_table(len(val), lags)
            lo, up = envelope_batch(spec, vds.x, 0)
            pred = model.value(vds.x)
            tag = f"{b.model}_k{lags.step}"
            write_trace_csv(out.path(f"traces/{tag}_bounds.csv"), t, vds.z, pred, lo, up)
            metrics["bounds"] = {"model": b.model, "horizon": lags.step, **summary,
                                 "channels": {"0": _envelope_stats(lo, up, vds.z)}}
    return RunResult(metrics, seeds=seeds)


def run_custom(config: RunConfig, out: _Outputs) -> RunResult:
    cc = config.custom
    with stage("generate"):
        ident = read_csv(cc.data)
        val = read_csv(cc.validation)
        if val.n_x != ident.n_x:
            raise ConfigError("data and validation files have different regressor dimensions")
        basis = monomial_basis(ident.n_x, cc.max_degree)
    metrics = {"experiment": "custom", "models": {}}
    cache: dict = {}
    models = {}
    for mc in config.models:
        with stage(f"identify:{mc.name}"):
            ds = _with_derivative_source(mc, ident, cache, "ident", config)
            model, extra = fit_model(mc, ds, basis, config)
            model.save(out.path(f"models/{mc.name}.json"))
            models[mc.name] = (model, ds)
        with stage(f"score:{mc.name}"):
            entry = {"rmse": rmse(model.value(val.x), val.z), **extra}
            if val.has_derivatives:
                for i in range(1, val.n_x + 1):
                    entry[f"rmse_d{i}"] = rmse(model.partial(val.x, i), val.channel(i))
            metrics["models"][mc.name] = entry
    if config.bounds.enabled:
        with stage("bounds"):
            model, ds = models[config.bounds.model]
            if not ds.has_derivatives:
                ds = ident if ident.has_derivatives else estimate_gradients(ident, _gradest_config(config))
            spec, summary = _envelope_for(model, ds, config, config.bounds.channels)
            summary["channels"] = {}
            for i in spec.channels:
                lo, up = envelope_batch(spec, val.x, i)
                write_envelope_csv(out.path(f"envelopes/{config.bounds.model}_ch{i}.csv"), val.x, lo, up,
                                   model.channel(val.x, i))
                if i == 0 or val.has_derivatives:
                    summary["channels"][str(i)] = _envelope_stats(lo, up, val.channel(i))
            metrics["bounds"] = {"model": config.bounds.model, **summary}
    return RunResult(metrics)


RUNNERS = {"univariate": run_univariate, "chua": run_chua, "custom": run_custom}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def versions() -> dict:
    return {
        "sobolev_sysid": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pyyaml": yaml.__version__,
    }


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def run(config: RunConfig, out_dir) -> RunResult:
    """Execute ``config`` and write every output under ``out_dir``."""
    config.validate()
    out = _Outputs(Path(out_dir))
    out.root.mkdir(parents=True, exist_ok=True)
    result = RUNNERS[config.experiment](config, out)
    out.path("config.yaml").write_text(dump_config(config), encoding="utf-8")
    out.path("metrics.json").write_text(_json_text(result.metrics), encoding="utf-8")
    files = {rel: _sha256(out.root / rel) for rel in sorted(out.files)}
    manifest = {
        "config": config.to_dict(),
        "config_sha256": config.sha256(),
        "seed": config.seed,
        "derived_seeds": result.seeds,
        "rng": "numpy PCG64 via SeedSequence",
        "versions": versions(),
        "files": files,
    }
    (out.root / "manifest.json").write_text(_json_text(manifest), encoding="utf-8")
    result.files = files
    return result
