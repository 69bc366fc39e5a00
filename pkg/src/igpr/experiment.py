"""Repeated simulation runs, RMSGE aggregation and covariance diagnostics."""

import csv
import logging
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .baselines import MGPR, WrappedGPR
from .covariance import CovarianceModel, KernelSpec
from .estimators import IntrinsicGPR
from .exceptions import IGPRError
from .gp import kernel_gram_grid
from .metrics import rmsge
from .scenarios import ScenarioSpec, generate_scenario, split_indices

REPORT_FORMAT = "igpr-report-v1"
METHODS = ("igpr", "wgpr-approx", "mgpr")
MAX_FAILURE_FRACTION = 0.10
GRID_SIZE = 50

logger = logging.getLogger(__name__)


class ExperimentAborted(IGPRError, RuntimeError):
    """Too many repetitions failed for the aggregate to be meaningful."""


def make_estimator(method, options=None, curve=None):
    """Estimator for a method label.

    ``options`` are estimator keyword arguments. A ``bpf`` option of
    ``'true'`` (the default for simulations) is replaced by ``curve``.
    """
    opts = dict(options or {})
    if opts.get("bpf", "true") == "true":
        opts["bpf"] = curve if curve is not None else "geodesic"
    if method == "igpr":
        opts.setdefault("frame", "elementary")
        return IntrinsicGPR(**opts)
    if method == "wgpr-approx":
        return WrappedGPR(**opts)
    if method == "mgpr":
        opts.pop("bpf", None)
        return MGPR(**opts)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def run_rep(spec, methods, method_options, rep):
    """Generate, split, fit and score one repetition. Returns {method: (rmsge, error)}."""
    ds = generate_scenario(spec, rep)
    train, test = split_indices(spec, ds.t, rep)
    a, b = ds.subset(train), ds.subset(test)
    out = {}
    for method in methods:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est = make_estimator(method, method_options.get(method), ds.curve)
                est.fit(a.X, a.Y, a.t)
                pred = est.predict(b.X, b.t)
            out[method] = (float(rmsge(ds.manifold, pred, b.Y)), None)
        except (IGPRError, ValueError, np.linalg.LinAlgError) as exc:
            logger.warning("rep %d, %s failed: %s", rep, method, exc)
            out[method] = (None, f"{type(exc).__name__}: {exc}")
    return rep, out


def _run_rep_star(args):
    return run_rep(*args)


def thread_count():
    """Worker count from ``IGPR_THREADS`` (default 1)."""
    raw = os.environ.get("IGPR_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"IGPR_THREADS must be an integer, got {raw!r}") from None


def summarize(values):
    """Mean, standard error and standard deviation of per-rep values."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return {"mean": None, "stderr": None, "sd": None, "min": None, "max": None}
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return {
        "mean": float(np.mean(v)),
        "stderr": sd / np.sqrt(v.size),
        "sd": sd,
        "min": float(v[0]),
        "max": float(v[-1]),
    }


def run_experiment(spec, methods=METHODS, method_options=None, threads=None):
    """Run ``spec.reps`` repetitions of a scenario for each method.

    Parameters
    ----------
    spec : ScenarioSpec
    methods : sequence of str
        Labels from ``igpr``, ``wgpr-approx`` and ``mgpr``.
    method_options : dict, optional
        Per-method estimator keyword arguments.
    threads : int, optional
        Worker processes; defaults to ``IGPR_THREADS``.

    Returns
    -------
    dict
        Report with format tag ``igpr-report-v1``. Everything except the
        ``meta`` entry is deterministic given the configuration.

    Raises
    ------
    ExperimentAborted
        If more than 10% of the repetitions of any method fail.
    """
    methods = list(methods)
    if not methods:
        raise ValueError("at least one method is required")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    method_options = dict(method_options or {})
    threads = thread_count() if threads is None else max(1, int(threads))

    start = time.perf_counter()
    jobs = [(spec, methods, method_options, rep) for rep in range(spec.reps)]
    if threads > 1 and spec.reps > 1:
        with ProcessPoolExecutor(max_workers=min(threads, spec.reps)) as pool:
            results = list(pool.map(_run_rep_star, jobs))
    else:
        results = [_run_rep_star(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    summary = {}
    for m in methods:
        per_rep = [res[m][0] for _, res in results]
        failures = [{"rep": rep, "error": res[m][1]} for rep, res in results if res[m][1] is not None]
        ok = [v for v in per_rep if v is not None]
        summary[m] = {**summarize(ok), "per_rep": per_rep, "n_ok": len(ok), "n_failed": len(failures),
                      "failures": failures}
        if len(failures) > MAX_FAILURE_FRACTION * spec.reps:
            raise ExperimentAborted(
                f"{m}: {len(failures)} of {spec.reps} repetitions failed; first error: {failures[0]['error']}"
            )
    return {
        "format": REPORT_FORMAT,
        "config": {"scenario": spec.to_dict(), "methods": methods, "method_options": method_options},
        "results": summary,
        "meta": {"runtime_seconds": time.perf_counter() - start, "threads": threads,
                 "created": time.strftime("%Y-%m-%dT%H:%M:%S")},
    }


def write_rep_csv(report, path):
    """Flat ``rep,method,rmsge,status`` table of a report."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rep", "method", "rmsge", "status"])
        for m, res in report["results"].items():
            for rep, v in enumerate(res["per_rep"]):
                w.writerow([rep, m, "" if v is None else repr(v), "ok" if v is not None else "failed"])


def covariance_recovery_report(spec, n=None, reps=None, options=None, grid_size=GRID_SIZE):
    """Fitted vs true per-coordinate kernel Gram matrices for scenario S1.

    Each repetition fits the intrinsic model on all samples of a fresh S1
    dataset. The estimated grid uses the mean fitted parameters.

    Returns
    -------
    dict
        ``theta_true``, ``theta_mean``, ``theta_per_rep``, ``amplitude_mean``,
        ``grid`` and the ``true_gram`` / ``estimated_gram`` tables of shape
        (3, grid_size, grid_size).
    """
    if spec.name != "s1":
        raise ValueError("covariance recovery is defined for scenario s1 only")
    n = spec.n if n is None else int(n)
    reps = spec.reps if reps is None else int(reps)
    spec = ScenarioSpec(**{**spec.to_dict(), "n": n, "reps": reps})
    opts = {"frame": "elementary", **(options or {})}
    thetas, amps = [], []
    for rep in range(reps):
        ds = generate_scenario(spec, rep)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = make_estimator("igpr", opts, ds.curve).fit(ds.X, ds.Y, ds.t)
        cov = est.covariance_
        if cov.kernel.family != "diag_rbf":
            raise ValueError("covariance recovery needs the diag_rbf kernel")
        thetas.append(cov.kernel.theta)
        amps.append(cov.kernel.amplitude)
    thetas, amps = np.array(thetas), np.array(amps)
    grid = np.linspace(0.0, 1.0, grid_size)
    true_cov = CovarianceModel(KernelSpec("diag_rbf", spec.theta, spec.amplitude))
    est_cov = CovarianceModel(KernelSpec("diag_rbf", thetas.mean(0), amps.mean(0)))
    return {
        "format": REPORT_FORMAT,
        "kind": "covariance-recovery",
        "config": {"scenario": spec.to_dict(), "options": opts},
        "theta_true": list(spec.theta),
        "theta_mean": thetas.mean(0).tolist(),
        "theta_per_rep": thetas.tolist(),
        "amplitude_mean": amps.mean(0).tolist(),
        "grid": grid.tolist(),
        "true_gram": kernel_gram_grid(true_cov, grid).tolist(),
        "estimated_gram": kernel_gram_grid(est_cov, grid).tolist(),
    }
