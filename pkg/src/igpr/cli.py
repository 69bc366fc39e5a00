"""Command line interface: ``igpr {simulate,fit,predict,eval,cov-report}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .exceptions import (
    ConditioningError,
    ConvergenceError,
    DataError,
    InitializationError,
    InvalidPointError,
    OptimizationError,
    SingularityError,
)
from .experiment import ExperimentAborted, covariance_recovery_report, make_estimator, run_experiment, write_rep_csv
from .io import detect_format, load_dataset, load_model, read_generic_csv, save_model, write_generic_csv
from .manifolds import parse_manifold
from .metrics import rmsge
from .scenarios import S2_NOISE_PRESETS, ScenarioSpec

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

logger = logging.getLogger("igpr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _noise(text):
    if text in S2_NOISE_PRESETS:
        return text
    return _floats(text)


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _set(d, key, value):
    if value is not None:
        d[key] = value


def _write_json(obj, path):
    text = json.dumps(obj, indent=1, sort_keys=False)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _scenario(sc):
    try:
        return ScenarioSpec(**sc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad scenario config: {exc}") from None


def cmd_simulate(args):
    cfg = load_config(args.config)
    sc = dict(cfg.get("scenario", {}))
    _set(sc, "name", args.scenario)
    _set(sc, "n", args.n)
    _set(sc, "scheme", args.scheme)
    _set(sc, "theta", args.theta)
    _set(sc, "amplitude", args.amplitude)
    _set(sc, "noise_sd", args.noise_sd)
    _set(sc, "reps", args.reps)
    _set(sc, "seed", args.seed)
    spec = _scenario(sc)
    methods = args.methods.split(",") if args.methods else cfg.get("methods", ["igpr", "wgpr-approx", "mgpr"])
    threads = args.threads if args.threads is not None else cfg.get("threads")
    report = run_experiment(spec, methods, cfg.get("method_options", {}), threads=threads)
    out = args.out or cfg.get("out", "report.json")
    _write_json(report, out)
    csv_path = args.csv or (str(Path(out).with_suffix(".csv")) if out not in (None, "-") else None)
    if csv_path:
        write_rep_csv(report, csv_path)
    for m, res in report["results"].items():
        logger.info("%-12s mean RMSGE %.6g (se %.3g, %d failed)", m, res["mean"], res["stderr"], res["n_failed"])
    return EXIT_OK


def _data_options(args, cfg):
    d = dict(cfg.get("data", {}))
    _set(d, "format", args.format)
    _set(d, "manifold", args.manifold)
    if args.presmooth:
        d["presmooth"] = True
    _set(d, "bandwidth", args.bandwidth)
    if args.clamp_spd:
        d["clamp_spd"] = True
    return d


def _load(path, d):
    man = d.get("manifold")
    return load_dataset(
        path,
        fmt=d.get("format", "auto"),
        manifold=parse_manifold(man) if man else None,
        presmooth=d.get("presmooth", False),
        bandwidth=d.get("bandwidth"),
        clamp_spd=d.get("clamp_spd", False),
    )


def cmd_fit(args):
    cfg = load_config(args.config)
    d = _data_options(args, cfg)
    ds = _load(args.data, d)
    method = args.method or cfg.get("method", "igpr")
    opts = dict(cfg.get("model", {}))
    _set(opts, "kernel", args.kernel)
    _set(opts, "bpf", args.bpf)
    _set(opts, "noise_var", args.noise_var)
    if args.theta is not None:
        opts["theta"] = args.theta if len(args.theta) > 1 else args.theta[0]
    _set(opts, "n_restarts", args.n_restarts)
    _set(opts, "random_state", args.seed)
    if args.fix_noise:
        opts["optimize_noise"] = False
    if args.no_optimize:
        opts["optimize"] = False
    if args.fit_amplitude:
        opts["fit_amplitude"] = True
    if method in ("igpr", "wgpr-approx") and "bpf" not in opts:
        opts["bpf"] = "mean" if ds.X.shape[1] > 1 else "geodesic"
    if method == "igpr":
        opts.setdefault("frame", "default")
    if method != "igpr":
        for key in ("kernel", "frame", "optimize_noise", "include_noise", "fit_amplitude", "anchor", "coreg"):
            opts.pop(key, None)
        if method == "mgpr":
            opts.pop("bpf", None)
    opts["manifold"] = ds.manifold
    try:
        est = make_estimator(method, opts)
    except TypeError as exc:
        raise UsageError(f"bad model option: {exc}") from None
    est.fit(ds.X, ds.Y, ds.t)
    out = args.out or cfg.get("out", "model.json")
    save_model(est, out)
    logger.info("fitted %s on %d samples -> %s", method, len(ds), out)
    return EXIT_OK


def _inputs(path, manifold, fmt):
    if fmt in (None, "auto"):
        fmt = detect_format(path)
    if fmt == "generic":
        X, t, _ = read_generic_csv(path, manifold, require_y=False)
        return X, t
    ds = load_dataset(path, fmt=fmt)
    return ds.X, ds.t


def cmd_predict(args):
    est = load_model(args.model)
    X, t = _inputs(args.inputs, est.manifold_, args.format)
    if t is None and X.shape[1] == 1:
        t = X[:, 0]
    P = est.predict(X, t)
    write_generic_csv(args.out, est.manifold_, X, P, t)
    logger.info("wrote %d predictions to %s", len(P), args.out)
    return EXIT_OK


def cmd_eval(args):
    man = parse_manifold(args.manifold) if args.manifold else None

    def points(path):
        if detect_format(path) != "generic":
            return load_dataset(path).Y
        if man is None:
            raise UsageError("--manifold is required for generic CSV files")
        return read_generic_csv(path, man)[2]

    P, T = points(args.pred), points(args.truth)
    if len(P) != len(T):
        raise DataError(f"predictions have {len(P)} rows but truth has {len(T)}")
    manifold = man if man is not None else (parse_manifold("sphere:2") if P.ndim == 2 else parse_manifold("spd:3"))
    result = {"rmsge": float(rmsge(manifold, P, T)), "n": int(len(P))}
    _write_json(result, args.out)
    return EXIT_OK


def cmd_cov_report(args):
    cfg = load_config(args.config)
    sc = dict(cfg.get("scenario", {}))
    sc["name"] = "s1"
    _set(sc, "theta", args.theta)
    _set(sc, "n", args.n)
    _set(sc, "reps", args.reps)
    _set(sc, "seed", args.seed)
    spec = _scenario(sc)
    report = covariance_recovery_report(spec, options=cfg.get("method_options", {}).get("igpr"))
    _write_json(report, args.out or cfg.get("out", "cov_report.json"))
    logger.info("theta mean %s (true %s)", np.round(report["theta_mean"], 4).tolist(), report["theta_true"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="igpr", description="Intrinsic Gaussian process regression on manifolds.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a simulation scenario and write a report")
    s.add_argument("--config")
    s.add_argument("--scenario", choices=["s1", "s2"])
    s.add_argument("--theta", type=_floats)
    s.add_argument("--n", type=int)
    s.add_argument("--scheme", choices=["random", "sort"])
    s.add_argument("--amplitude", type=float)
    s.add_argument("--noise-sd", type=_noise, dest="noise_sd")
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--methods")
    s.add_argument("--threads", type=int)
    s.add_argument("--out")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a model to a data file")
    f.add_argument("--config")
    f.add_argument("--data", required=True)
    f.add_argument("--format", choices=["auto", "generic", "flight", "dti"])
    f.add_argument("--manifold")
    f.add_argument("--presmooth", action="store_true")
    f.add_argument("--bandwidth", type=float)
    f.add_argument("--clamp-spd", action="store_true", dest="clamp_spd")
    f.add_argument("--method", choices=["igpr", "wgpr-approx", "mgpr"])
    f.add_argument("--kernel", choices=["diag_rbf", "rbf"])
    f.add_argument("--bpf", choices=["geodesic", "mean"])
    f.add_argument("--theta", type=_floats)
    f.add_argument("--noise-var", type=float, dest="noise_var")
    f.add_argument("--fix-noise", action="store_true", dest="fix_noise")
    f.add_argument("--no-optimize", action="store_true", dest="no_optimize")
    f.add_argument("--fit-amplitude", action="store_true", dest="fit_amplitude",
                   help="fit per-coordinate kernel amplitudes (diag_rbf, igpr only)")
    f.add_argument("--n-restarts", type=int, dest="n_restarts")
    f.add_argument("--seed", type=int)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("predict", help="predict with a saved model")
    r.add_argument("--model", required=True)
    r.add_argument("--inputs", required=True)
    r.add_argument("--format", choices=["auto", "generic", "flight", "dti"])
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="RMSGE between predictions and truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--manifold")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("cov-report", help="covariance recovery diagnostics for S1")
    c.add_argument("--config")
    c.add_argument("--theta", type=_floats)
    c.add_argument("--n", type=int)
    c.add_argument("--reps", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_cov_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConditioningError, OptimizationError, ConvergenceError, InitializationError, SingularityError,
            ExperimentAborted, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, InvalidPointError, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
