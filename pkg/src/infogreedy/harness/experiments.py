"""Config-driven simulation studies and their CSV/JSON outputs.

Every trial draws its problem instance from the stream ``(seed, trial)``
and each method's measurement noise from ``(seed, trial, method + 1)``, so
results do not depend on execution order and methods see the same
instances.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..bisection import (bisect_recover, ceil_log2, expected_count_lower_bound,
                         info_rate_lower_bound, noisy_oracle, random_sparse_signal,
                         theorem_success_probability)
from ..errors import ValidationError
from ..gaussian import (ColoredAfter, ColoredBefore, GaussianBelief, WhiteAfter, WhiteBefore,
                        generalized_eigenvalues, measurement_budget, posterior_update, run_session)
from ..gmm import GmmBelief, GradientAscentConfig, run_gmm_session, sample_gmm
from ..linalg import make_rng, sample_mvn, sym_eig
from ..sparse_design import brute_force_sparse_optimum, sparse_direction
from .config import ExperimentConfig, ExperimentKind, parse_float_list, parse_methods
from .data import fit_gaussian, fit_gmm_from_labels, load_csv_series, load_mnist
from .generators import gen_colored_noise_cov, gen_lowrank_cov, gen_rank_cov

#: tolerance small enough that the information-threshold stop never fires
NO_STOP_EPS = 1e-12

CSV_HEADER = ("trial", "error", "measurements", "power", "label_true", "label_pred")
STEPS_HEADER = ("trial", "step", "info_gain", "error")


@dataclass
class TrialResult:
    trial: int
    error: float
    measurements: int
    power: float
    label_true: int | None = None
    label_pred: int | None = None
    info_gains: list = field(default_factory=list)
    step_errors: list = field(default_factory=list)

    def __post_init__(self):
        if not self.error >= 0:
            raise ValidationError(f"trial {self.trial}: recovery error must be >= 0, got {self.error}")


@dataclass
class ExperimentOutcome:
    config: ExperimentConfig
    results: dict
    """Method name to the list of :class:`TrialResult` in trial order."""
    summary: dict


def _instance_rng(cfg: ExperimentConfig, trial: int) -> np.random.Generator:
    return make_rng([cfg.seed, trial])


def _method_rng(cfg: ExperimentConfig, trial: int, method: int) -> np.random.Generator:
    return make_rng([cfg.seed, trial, method + 1])


def _unit_rows(rng, m, n):
    d = rng.standard_normal((m, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _measure_along(x, prior: GaussianBelief, directions, powers, noise_var, rng, scale=1.0):
    """Fixed-direction sensing with per-step errors; ``noise_var`` may depend on the direction."""
    belief, gains, errs = prior, [], []
    for d, beta in zip(directions, powers):
        var = float(noise_var(d)) if callable(noise_var) else float(noise_var)
        a = math.sqrt(beta) * np.asarray(d, dtype=float)
        q = float(a @ belief.cov @ a)
        gains.append(0.5 * math.log1p(max(q, 0.0) / var) if var > 0 else math.inf)
        y = float(a @ x) + math.sqrt(var) * float(rng.standard_normal())
        belief = posterior_update(belief, a, y, var)
        errs.append(float(np.linalg.norm(x - belief.mean)) / scale)
    return belief, gains, errs


def _gaussian_budget_study(cfg: ExperimentConfig, colored: bool):
    n = cfg.n
    names = ("info_greedy", "random")
    results = {k: [] for k in names}
    budgets, within = [], []
    zero = np.zeros(n)
    for t in range(cfg.trials):
        rng = _instance_rng(cfg, t)
        cov = gen_lowrank_cov(n, cfg.threshold, rng)
        if colored:
            wcov = cfg.noise_scale * gen_colored_noise_cov(n, rng)
            noise = ColoredBefore(wcov) if cfg.noise == "before" else ColoredAfter(wcov)
            spectrum = (generalized_eigenvalues(cov, wcov) if cfg.noise == "before"
                        else sym_eig(cov).eigenvalues)
        else:
            noise = WhiteAfter(cfg.sigma) if cfg.noise == "after" else WhiteBefore(cfg.sigma)
            spectrum = sym_eig(cov).eigenvalues
        x = sample_mvn(zero, cov, rng)
        prior = GaussianBelief(zero, cov)
        budget = measurement_budget(np.clip(spectrum, 0.0, None), noise, cfg.eps, cfg.p, dim=n)
        tr = run_session(x, prior, noise, cfg.eps, cfg.p, max_iter=4 * n, rng=_method_rng(cfg, t, 0))
        used = tr.total_power
        count = tr.num_steps if cfg.noise == "after" else int(round(used))
        budgets.append(float(budget))
        within.append(used <= float(budget) * (1 + 1e-9) + 1e-12)
        results["info_greedy"].append(TrialResult(
            t, float(np.linalg.norm(x - tr.estimate)), count, used,
            info_gains=[r.info_gain for r in tr.records]))

        # random unit directions with the same per-step resources
        rrng = _method_rng(cfg, t, 1)
        powers = [r.power for r in tr.records]
        dirs = _unit_rows(rrng, len(powers), n)
        if colored:
            if cfg.noise == "before":
                var = lambda d: float(d @ wcov @ d)  # noqa: E731
            else:
                var = float(wcov[0, 0])
        else:
            var = cfg.sigma ** 2
        belief, gains, _ = _measure_along(x, prior, dirs, powers, var, rrng)
        results["random"].append(TrialResult(
            t, float(np.linalg.norm(x - belief.mean)), count, used, info_gains=gains))
    extra = {"theorem_budget_mean": float(np.mean(budgets)),
             "within_theorem_budget": float(np.mean(within)),
             "budget_unit": "power" if cfg.noise == "after" else "measurements"}
    return results, extra


def _mismatch_study(cfg: ExperimentConfig):
    n, m, var = cfg.n, cfg.measurements, cfg.sigma ** 2
    results = {k: [] for k in ("info_greedy", "batch", "random")}
    zero = np.zeros(n)
    for t in range(cfg.trials):
        rng = _instance_rng(cfg, t)
        cov_true = gen_rank_cov(n, cfg.rank, rng)
        e = rng.standard_normal(n)
        cov_assumed = cov_true + np.outer(e, e)
        x = sample_mvn(zero, cov_true, rng)
        prior = GaussianBelief(zero, cov_assumed)

        errs = []
        tr = run_session(x, prior, WhiteAfter(cfg.sigma), NO_STOP_EPS, 0.5, max_iter=m,
                         rng=_method_rng(cfg, t, 0), fixed_power=1.0,
                         on_step=lambda rec, b: errs.append(float(np.linalg.norm(x - b.mean))))
        results["info_greedy"].append(TrialResult(
            t, float(np.linalg.norm(x - tr.estimate)), tr.num_steps, tr.total_power,
            info_gains=[r.info_gain for r in tr.records], step_errors=errs))

        batch_dirs = sym_eig(cov_assumed).eigenvectors[:, :m].T
        for name, j, dirs in (("batch", 1, batch_dirs), ("random", 2, None)):
            mrng = _method_rng(cfg, t, j)
            if dirs is None:
                dirs = _unit_rows(mrng, m, n)
            belief, gains, errs = _measure_along(x, prior, dirs, [1.0] * m, var, mrng)
            results[name].append(TrialResult(
                t, float(np.linalg.norm(x - belief.mean)), m, float(m),
                info_gains=gains, step_errors=errs))
    return results, {}


def _gmm_results(cfg, draw, methods, sigma, m):
    gcfg = GradientAscentConfig(cfg.step_size, cfg.eta, cfg.mc_samples, cfg.max_steps)
    results = {k: [] for k in methods}
    for t in range(cfg.trials):
        label, x, model = draw(t)
        for j, name in enumerate(methods):
            tr = run_gmm_session(x, model, sigma, m, name, _method_rng(cfg, t, j), gcfg)
            results[name].append(TrialResult(
                t, float(np.linalg.norm(x - tr.estimate)), m, float(m), label, tr.label,
                info_gains=tr.info_gains.tolist()))
    return results


def _gmm_study(cfg: ExperimentConfig):
    n, c = cfg.n, cfg.components
    true_w = np.array(parse_float_list(cfg.true_weights))

    def draw(t):
        rng = _instance_rng(cfg, t)
        covs = np.stack([gen_lowrank_cov(n, cfg.threshold, rng) for _ in range(c)])
        means = cfg.mean_scale * rng.standard_normal((c, n))
        model = GmmBelief(np.full(c, 1.0 / c), means, covs)
        label, x = sample_gmm(model, rng, weights=true_w)
        return label, x, model

    methods = parse_methods(cfg.methods)
    results = _gmm_results(cfg, draw, methods, cfg.sigma, cfg.measurements)
    return results, {"assumed_weights": "uniform", "true_weights": true_w.tolist()}


def _sparse_study(cfg: ExperimentConfig):
    n, k0, m, sigma = cfg.n, cfg.k0, cfg.measurements, cfg.sigma
    var = sigma * sigma
    results = {k: [] for k in ("sparse_info_greedy", "info_greedy", "random_sparse")}
    rel_gaps, certified, gaps = [], [], []
    zero = np.zeros(n)
    for t in range(cfg.trials):
        rng = _instance_rng(cfg, t)
        cov = gen_lowrank_cov(n, cfg.threshold, rng)
        x = sample_mvn(zero, cov, rng)
        prior = GaussianBelief(zero, cov)
        for j, name in enumerate(results):
            mrng = _method_rng(cfg, t, j)
            belief, gains = prior, []
            for step in range(m):
                if name == "sparse_info_greedy":
                    res = sparse_direction(belief.cov, sigma, k0, tol=cfg.tol, max_iter=cfg.max_iter)
                    d = res.direction
                    if step == 0:
                        best, _ = brute_force_sparse_optimum(belief.cov, sigma, k0)
                        rel_gaps.append((best - res.objective) / best if best > 0 else 0.0)
                        certified.append(res.certified)
                        gaps.append(res.gap)
                elif name == "info_greedy":
                    d = sym_eig(belief.cov).eigenvectors[:, 0]
                else:
                    d = np.zeros(n)
                    support = mrng.choice(n, size=k0, replace=False)
                    d[support] = mrng.standard_normal(k0)
                    d /= np.linalg.norm(d)
                q = float(d @ belief.cov @ d)
                gains.append(0.5 * math.log1p(max(q, 0.0) / var))
                y = float(d @ x) + sigma * float(mrng.standard_normal())
                belief = posterior_update(belief, d, y, var)
            results[name].append(TrialResult(
                t, float(np.linalg.norm(x - belief.mean)), m, float(m), info_gains=gains))
    extra = {"first_step_oracle_rel_gap_max": float(np.max(rel_gaps)),
             "first_step_oracle_rel_gap_mean": float(np.mean(rel_gaps)),
             "first_step_certified_fraction": float(np.mean(certified)),
             "first_step_min_gap": float(np.min(gaps))}
    return results, extra


def _bisection_study(cfg: ExperimentConfig):
    n, k = cfg.n, cfg.k
    rows = []
    high = cfg.amplitude_high if cfg.amplitude_high > cfg.amplitude_low else None
    for t in range(cfg.trials):
        rng = _instance_rng(cfg, t)
        x = random_sparse_signal(n, k, rng, cfg.amplitude_low, high)
        oracle = noisy_oracle(x, cfg.sigma, _method_rng(cfg, t, 0))
        if cfg.mode == "info_rate":
            out = bisect_recover(oracle, n, 0.0, cfg.eps, infer_siblings=True, total=float(x.sum()))
        else:
            out = bisect_recover(oracle, n, cfg.sigma, cfg.eps)
        rows.append(TrialResult(t, float(np.linalg.norm(x - out.estimate)), out.measurement_count,
                                float(out.measurement_count)))
    counts = np.array([r.measurements for r in rows], dtype=float)
    errs = np.array([r.error for r in rows])
    logn = ceil_log2(n)
    extra = {"max_measurements": int(counts.max())}
    if cfg.mode == "info_rate":
        h = (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)) / math.log(2)
        extra.update({"bits_per_measurement": h / counts.mean() if counts.mean() > 0 else 0.0,
                      "info_rate_lower_bound": info_rate_lower_bound(n, k) if n > 1 else 0.0,
                      "expected_count_lower_bound": expected_count_lower_bound(n, k) if n > 1 else 0.0})
    else:
        tol = math.sqrt(k) * cfg.eps
        extra.update({
            "success_tolerance": tol,
            "success_rate_at_tolerance": float(np.mean(errs <= tol)),
            "exact_recovery_rate": float(np.mean(errs == 0.0)),
            "theorem_success_bound": theorem_success_probability(n, k, cfg.sigma, cfg.eps),
            "measurement_bound": 2 * k * logn * (logn if cfg.sigma > 0 else 1),
        })
    return {"bisection": rows}, extra


def _resolve(cfg: ExperimentConfig, path: str) -> str:
    if os.path.isabs(path) or cfg.source is None:
        return path
    return os.path.join(os.path.dirname(os.path.abspath(cfg.source)), path)


def _mnist_study(cfg: ExperimentConfig):
    xtr, ytr = load_mnist(_resolve(cfg, cfg.train_images), _resolve(cfg, cfg.train_labels),
                          limit=cfg.train_count)
    xte, yte = load_mnist(_resolve(cfg, cfg.test_images), _resolve(cfg, cfg.test_labels),
                          limit=cfg.trials)
    model = fit_gmm_from_labels(xtr, ytr, cfg.ridge, num_classes=10)

    def draw(t):
        return int(yte[t]), xte[t], model

    methods = parse_methods(cfg.methods)
    results = _gmm_results(cfg, draw, methods, cfg.sigma, cfg.measurements)
    protocol = {"pixel_scaling": "[0,1]", "ridge": cfg.ridge, "train_images_used": int(xtr.shape[0]),
                "test_images_used": int(xte.shape[0]), "train_subset": "first rows of training file",
                "test_subset": "first rows of test file"}
    return results, {"protocol": protocol}


def _csv_study(cfg: ExperimentConfig):
    data = load_csv_series(_resolve(cfg, cfg.csv_path))
    test = cfg.test_row if cfg.test_row >= 0 else data.shape[0] + cfg.test_row
    if not 0 <= test < data.shape[0]:
        raise ValidationError(f"test_row {cfg.test_row} outside the {data.shape[0]} data rows")
    train_idx = [i for i in range(data.shape[0]) if i != test]
    if cfg.train_rows > 0:
        train_idx = train_idx[: cfg.train_rows]
    if not train_idx:
        raise ValidationError("no training rows left for the Gaussian fit")
    prior = fit_gaussian(data[train_idx], cfg.ridge)
    x = data[test]
    scale = float(np.max(np.abs(x))) or 1.0
    n, m, var = prior.dim, cfg.measurements, cfg.sigma ** 2
    results = {"info_greedy": [], "random": []}
    for t in range(cfg.trials):
        errs = []
        tr = run_session(x, prior, WhiteAfter(cfg.sigma), NO_STOP_EPS, 0.5, max_iter=m,
                         rng=_method_rng(cfg, t, 0), fixed_power=1.0,
                         on_step=lambda rec, b: errs.append(float(np.linalg.norm(x - b.mean)) / scale))
        results["info_greedy"].append(TrialResult(
            t, float(np.linalg.norm(x - tr.estimate)) / scale, tr.num_steps, tr.total_power,
            info_gains=[r.info_gain for r in tr.records], step_errors=errs))
        mrng = _method_rng(cfg, t, 1)
        belief, gains, errs = _measure_along(x, prior, _unit_rows(mrng, m, n), [1.0] * m, var, mrng, scale)
        results["random"].append(TrialResult(
            t, float(np.linalg.norm(x - belief.mean)) / scale, m, float(m), info_gains=gains,
            step_errors=errs))
    return results, {"error_metric": "||x - x_hat||_2 / ||x||_inf", "train_rows": len(train_idx),
                     "test_row": test}


_RUNNERS = {
    ExperimentKind.GAUSSIAN_WHITE: lambda c: _gaussian_budget_study(c, colored=False),
    ExperimentKind.GAUSSIAN_COLORED: lambda c: _gaussian_budget_study(c, colored=True),
    ExperimentKind.GAUSSIAN_MISMATCH: _mismatch_study,
    ExperimentKind.GMM_COMPARE: _gmm_study,
    ExperimentKind.SPARSE_COMPARE: _sparse_study,
    ExperimentKind.BISECTION_STUDY: _bisection_study,
    ExperimentKind.MNIST_CLASSIFY: _mnist_study,
    ExperimentKind.CSV_RECOVERY: _csv_study,
}


def _finite(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _finite(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_finite(x) for x in v]
    return v


def summarize(cfg: ExperimentConfig, results: dict, extra: dict) -> dict:
    """Per-method success rate at ``eps``, median error and mean resources, plus kind extras."""
    eps = cfg.params.get("eps")
    methods = {}
    for name, rows in results.items():
        errs = np.array([r.error for r in rows])
        entry = {
            "trials": len(rows),
            "median_error": float(np.median(errs)),
            "mean_error": float(np.mean(errs)),
            "mean_measurements": float(np.mean([r.measurements for r in rows])),
            "mean_power": float(np.mean([r.power for r in rows])),
        }
        if eps is not None and cfg.kind is not ExperimentKind.BISECTION_STUDY:
            entry["success_rate"] = float(np.mean(errs <= eps))
        if rows and rows[0].label_true is not None:
            entry["classification_error"] = float(np.mean([r.label_pred != r.label_true for r in rows]))
        if rows and rows[0].info_gains:
            entry["mean_cumulative_info"] = float(np.mean([np.sum(r.info_gains) for r in rows]))
        methods[name] = entry
    return _finite({"config": cfg.as_dict(), "methods": methods, **extra})


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentOutcome:
    """Run every trial of ``cfg``; write CSV and ``summary.json`` files when ``out_dir`` is given."""
    results, extra = _RUNNERS[cfg.kind](cfg)
    outcome = ExperimentOutcome(cfg, results, summarize(cfg, results, extra))
    if out_dir is not None:
        write_outputs(outcome, out_dir)
    return outcome


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def trials_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(r.trial), _fmt(r.error), _fmt(r.measurements), _fmt(r.power),
                    _fmt(r.label_true), _fmt(r.label_pred)])
    return buf.getvalue()


def steps_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STEPS_HEADER)
    for r in rows:
        for i, g in enumerate(r.info_gains):
            err = r.step_errors[i] if i < len(r.step_errors) else None
            w.writerow([_fmt(r.trial), _fmt(i + 1), _fmt(g), _fmt(err)])
    return buf.getvalue()


def write_outputs(outcome: ExperimentOutcome, out_dir) -> list:
    """Write ``<method>.csv``, ``<method>_steps.csv`` and ``summary.json``; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, rows in outcome.results.items():
        for fname, text in ((f"{name}.csv", trials_csv(rows)), (f"{name}_steps.csv", steps_csv(rows))):
            path = os.path.join(out_dir, fname)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            paths.append(path)
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(outcome.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(path)
    return paths
