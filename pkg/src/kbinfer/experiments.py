"""Experiment drivers behind the CLI.

Each driver maps a validated config to a list of result rows
``{replicate, series, x, metric, value}``.  Replicates run as independent
tasks with their own random streams, so the emitted rows are identical
regardless of the thread count.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ._linalg import spd_factor
from .filtering import (
    FilterModel,
    ModelBasedTransition,
    fkbf_model,
    run_filter,
    write_run_csv,
    write_weight_snapshots,
)
from .kernels import GaussianKernel, gram, kernel_from_config
from .means import EmpiricalMean
from .noise_models import cross_gram_model
from .oracles import (
    ChainTruth,
    GaussianMixture,
    LinearGaussianModel,
    OutputTruth,
    SSMConfig,
    cross_validate,
    rate_check,
    simulate_ssm,
    ssm_transition_model,
)
from .rules import RegParams, TrainingPairs
from .seeding import derive_seed, rng_stream

__all__ = ["run_experiment", "thread_count"]


def thread_count():
    raw = os.environ.get("KB_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"KB_THREADS must be an integer, got {raw!r}")
    return max(1, os.cpu_count() or 1)


def _run_tasks(tasks):
    """Run zero-argument tasks, preserving order in the results."""
    workers = min(thread_count(), len(tasks)) if tasks else 1
    if workers <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda task: task(), tasks))


def _row(replicate, series, x, metric, value):
    return {
        "replicate": replicate,
        "series": series,
        "x": x,
        "metric": metric,
        "value": float(value),
    }


def _model_from_cfg(obj):
    return LinearGaussianModel(
        np.asarray(obj["A"], dtype=float), np.asarray(obj["Sigma"], dtype=float)
    )


def _mixture_from_cfg(obj):
    return GaussianMixture(obj["weights"], obj["means"], obj["covs"])


def _uniform_sample(rng, train_input, size):
    low = np.asarray(train_input["low"], dtype=float)
    high = np.asarray(train_input["high"], dtype=float)
    return rng.uniform(low, high, size=(size, low.shape[0]))


def _ols_fit(xs, ys):
    """Least-squares linear map plus residual covariance."""
    a_hat, *_ = np.linalg.lstsq(xs, ys, rcond=None)
    resid = ys - xs @ a_hat
    sigma_hat = resid.T @ resid / xs.shape[0]
    sigma_hat = 0.5 * (sigma_hat + sigma_hat.T)
    sigma_hat += 1e-12 * np.eye(sigma_hat.shape[0])
    return a_hat.T, sigma_hat


# ---------------------------------------------------------------------------
# one-stage ground truth
# ---------------------------------------------------------------------------

def _run_ground_truth(cfg):
    model = _model_from_cfg(cfg["model"])
    mixture = _mixture_from_cfg(cfg["input_mixture"])
    kernel_x = kernel_from_config(cfg["kernel_x"])
    kernel_y = kernel_from_config(cfg["kernel_y"])
    truth = OutputTruth(model, mixture, kernel_y)
    n, l = cfg["n_train"], cfg["n_input"]
    epsilons = cfg["epsilons"]
    estimators = cfg["estimators"]
    noise_model = model.to_noise_model()

    def task(rep):
        def run():
            rng = rng_stream(cfg["seed"], "rep", rep)
            xs = _uniform_sample(rng, cfg["train_input"], n)
            ys = noise_model.sample_outputs(xs, rng)
            xt = mixture.sample(rng, l)
            gamma = np.full(l, 1.0 / l)
            rows = []
            if "non_ksr" in estimators:
                g_x = gram(kernel_x, xs)
                rhs = gram(kernel_x, xs, xt) @ gamma
                g_y = gram(kernel_y, ys)
                mean_vec = truth.eval(ys)
                for eps in epsilons:
                    factor = spd_factor(g_x + n * eps * np.eye(n))
                    w = factor.solve(rhs)
                    err_sq = truth.nonksr_error_sq(w, ys, g_y, mean_vec)
                    rows.append(_row(rep, "non_ksr", eps, "rkhs_error",
                                     np.sqrt(err_sq)))
            if "mb_ksr" in estimators:
                locs = xt @ model.A.T
                err_sq = truth.mb_error_sq(gamma, locs, model.Sigma)
                rows.append(_row(rep, "mb_ksr", None, "rkhs_error",
                                 np.sqrt(err_sq)))
            if "mb_ksr_est" in estimators:
                a_hat, sigma_hat = _ols_fit(xs, ys)
                err_sq = truth.mb_error_sq(gamma, xt @ a_hat.T, sigma_hat)
                rows.append(_row(rep, "mb_ksr_est", None, "rkhs_error",
                                 np.sqrt(err_sq)))
            return rows

        return run

    results = _run_tasks([task(rep) for rep in range(cfg["replicates"])])
    return [row for rows in results for row in rows]


def _run_misspecification(cfg):
    model = _model_from_cfg(cfg["model"])
    mixture = _mixture_from_cfg(cfg["input_mixture"])
    kernel_y = kernel_from_config(cfg["kernel_y"])
    truth = OutputTruth(model, mixture, kernel_y)
    l = cfg["n_input"]

    def task(rep):
        def run():
            rng = rng_stream(cfg["seed"], "rep", rep)
            xt = mixture.sample(rng, l)
            gamma = np.full(l, 1.0 / l)
            rows = []
            for s1 in cfg["sigma1_grid"]:
                locs = xt @ (s1 * model.A).T
                err_sq = truth.mb_error_sq(gamma, locs, model.Sigma)
                rows.append(_row(rep, "mb_sigma1", s1, "rkhs_error",
                                 np.sqrt(err_sq)))
            locs_exact = xt @ model.A.T
            for s2 in cfg["sigma2_grid"]:
                err_sq = truth.mb_error_sq(gamma, locs_exact, s2 * model.Sigma)
                rows.append(_row(rep, "mb_sigma2", s2, "rkhs_error",
                                 np.sqrt(err_sq)))
            return rows

        return run

    results = _run_tasks([task(rep) for rep in range(cfg["replicates"])])
    return [row for rows in results for row in rows]


# ---------------------------------------------------------------------------
# two-stage chain
# ---------------------------------------------------------------------------

def _run_chain(cfg):
    model1 = _model_from_cfg(cfg["model1"])
    model2 = _model_from_cfg(cfg["model2"])
    mixture = _mixture_from_cfg(cfg["input_mixture"])
    kernel_x = kernel_from_config(cfg["kernel_x"])
    kernel_y = kernel_from_config(cfg["kernel_y"])
    kernel_z = kernel_from_config(cfg["kernel_z"])
    truth = ChainTruth(model1, model2, mixture, kernel_z)
    n, l = cfg["n_train"], cfg["n_input"]
    epsilons = cfg["epsilons"]
    estimators = cfg["estimators"]
    nm1 = model1.to_noise_model()
    nm2 = model2.to_noise_model()

    def task(rep):
        def run():
            rng = rng_stream(cfg["seed"], "rep", rep)
            xs = _uniform_sample(rng, cfg["train_input"], n)
            ys = nm1.sample_outputs(xs, rng)
            zs = nm2.sample_outputs(ys, rng)
            xt = mixture.sample(rng, l)
            gamma = np.full(l, 1.0 / l)

            g_x = gram(kernel_x, xs)
            g_y = gram(kernel_y, ys)
            g_z = gram(kernel_z, zs)
            rhs1 = gram(kernel_x, xs, xt) @ gamma
            mean_vec = truth.eval(zs)
            need_mb_n = "mb_n" in estimators
            if need_mb_n:
                rhs_model = cross_gram_model(nm1, xt, ys, kernel_y) @ gamma
            f_mat = h_mat = None
            rows = []
            for eps in epsilons:
                factor_x = spd_factor(g_x + n * eps * np.eye(n))
                factor_y = spd_factor(g_y + n * eps * np.eye(n))
                w1 = factor_x.solve(rhs1)
                if "nn" in estimators:
                    w2 = factor_y.solve(g_y @ w1)
                    err_sq = truth.nonksr_error_sq(w2, zs, g_z, mean_vec)
                    rows.append(_row(rep, "nn", eps, "rkhs_error", np.sqrt(err_sq)))
                if "n_mb" in estimators:
                    if f_mat is None:
                        f_mat, h_mat = truth.n_mb_matrices(ys)
                    err_sq = truth.n_mb_error_sq(w1, ys, f_mat, h_mat)
                    rows.append(_row(rep, "n_mb", eps, "rkhs_error", np.sqrt(err_sq)))
                if need_mb_n:
                    wq = factor_y.solve(rhs_model)
                    err_sq = truth.nonksr_error_sq(wq, zs, g_z, mean_vec)
                    rows.append(_row(rep, "mb_n", eps, "rkhs_error", np.sqrt(err_sq)))
            return rows

        return run

    results = _run_tasks([task(rep) for rep in range(cfg["replicates"])])
    return [row for rows in results for row in rows]


# ---------------------------------------------------------------------------
# filtering benchmark
# ---------------------------------------------------------------------------

def _filter_model(alg, states, obs, params, ssm_cfg, point_eta):
    kernel_x = GaussianKernel(params["sigma_x"] ** 2 * np.eye(2))
    kernel_z = GaussianKernel(params["sigma_z"] ** 2 * np.eye(2))
    reg = RegParams(params["epsilon"], params["delta"])
    if alg == "model_based":
        train = TrainingPairs(states, obs, kernel_x, kernel_z)
        transition = ModelBasedTransition(ssm_transition_model(ssm_cfg, eta=point_eta))
        prior = EmpiricalMean.from_points(kernel_x, states)
        return FilterModel(train, transition, reg, prior)
    return fkbf_model(states, obs, kernel_x, kernel_z, reg)


def _trajectory_mse(truths, estimates):
    diff = truths - estimates
    return float(np.mean(np.sum(diff * diff, axis=1)))


def _cv_filter(alg, data, cfg, ssm_cfg):
    cv = cfg["cv"]
    horizon = cv.get("horizon", 40)
    grid = {k: cv[k] for k in ("epsilon", "delta", "sigma_x", "sigma_z")}
    states, obs = data.train_states, data.train_obs
    point_estimate = cfg.get("point_estimate", "preimage")

    def metric(params, train_sl, val_sl):
        model = _filter_model(
            alg, states[train_sl], obs[train_sl], params, ssm_cfg, ssm_cfg.eta
        )
        val_obs = obs[val_sl][:horizon]
        val_truth = states[val_sl][:horizon]
        run = run_filter(model, val_obs, point_estimate=point_estimate)
        return _trajectory_mse(val_truth, run.estimates)

    best, _ = cross_validate(grid, states.shape[0], metric)
    return best


def _run_filter_bench(cfg):
    ssm = cfg["ssm"]
    from .config import parse_ssm_noise

    noise = parse_ssm_noise(ssm.get("noise"))
    algorithms = cfg["algorithms"]
    point_estimate = cfg.get("point_estimate", "preimage")
    traj_dir = cfg.get("trajectory_dir")

    def task(n, rep):
        def run():
            ssm_cfg = SSMConfig(
                b=ssm["b"], M=ssm["M"], eta=ssm["eta"],
                sigma_h=ssm["sigma_h"], sigma_o=ssm["sigma_o"],
                T=cfg["t_test"], n_train=n,
                seed=derive_seed(cfg["seed"], "ssm", n, rep),
                noise=noise, eta_train=ssm.get("eta_train"),
            )
            data = simulate_ssm(ssm_cfg)
            rows = []
            for alg in algorithms:
                best = _cv_filter(alg, data, cfg, ssm_cfg)
                model = _filter_model(
                    alg, data.train_states, data.train_obs, best, ssm_cfg,
                    ssm_cfg.eta,
                )
                run_out = run_filter(
                    model, data.test_obs, point_estimate=point_estimate
                )
                mse = _trajectory_mse(data.test_states, run_out.estimates)
                rows.append(_row(rep, alg, n, "mse", mse))
                for key in ("epsilon", "delta", "sigma_x", "sigma_z"):
                    rows.append(_row(rep, alg, n, f"cv_{key}", best[key]))
                if traj_dir:
                    Path(traj_dir).mkdir(parents=True, exist_ok=True)
                    write_run_csv(
                        Path(traj_dir) / f"{alg}_n{n}_rep{rep}.csv",
                        data.test_states, run_out.estimates,
                    )
                    if cfg.get("dump_weights"):
                        write_weight_snapshots(
                            Path(traj_dir) / f"{alg}_n{n}_rep{rep}_weights.csv",
                            model, run_out,
                        )
            return rows

        return run

    tasks = [task(n, rep)
             for n in cfg["n_train"]
             for rep in range(cfg["replicates"])]
    results = _run_tasks(tasks)
    return [row for rows in results for row in rows]


# ---------------------------------------------------------------------------
# convergence rate
# ---------------------------------------------------------------------------

def _run_rate_check(cfg):
    model = _model_from_cfg(cfg["model"])
    mixture = _mixture_from_cfg(cfg["input_mixture"])
    kernel_y = kernel_from_config(cfg["kernel_y"])
    truth = OutputTruth(model, mixture, kernel_y)

    def error_fn(size, rng):
        xt = mixture.sample(rng, size)
        gamma = np.full(size, 1.0 / size)
        return np.sqrt(truth.mb_error_sq(gamma, xt @ model.A.T, model.Sigma))

    result = rate_check(
        error_fn, cfg["sizes"], cfg["replicates"], cfg["seed"], label="rate"
    )
    rows = []
    for size, mean_err in zip(result.sizes, result.mean_errors):
        rows.append(_row("", "mb_ksr", size, "mean_rkhs_error", mean_err))
    rows.append(_row("", "mb_ksr", None, "slope", result.slope))
    return rows


_DRIVERS = {
    "ground-truth": _run_ground_truth,
    "misspecification": _run_misspecification,
    "chain": _run_chain,
    "filter-bench": _run_filter_bench,
    "rate-check": _run_rate_check,
}


def run_experiment(cfg):
    """Dispatch a validated config to its driver; returns result rows."""
    return _DRIVERS[cfg["experiment"]](cfg)
