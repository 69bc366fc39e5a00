"""Point serialization, CSV readers/writers and model documents."""

import csv
import json
import math

import numpy as np

from . import gp
from .baselines import MGPR, AmbientEmbedding, WrappedGPR, _IndependentGP
from .bpf import curve_from_dict, local_linear_smooth
from .covariance import Coregionalization, CovarianceModel, KernelSpec
from .estimators import IntrinsicGPR
from .exceptions import DataError, InvalidPointError
from .manifolds import SPD, Frame, Sphere, manifold_from_descriptor
from .scenarios import Dataset

MODEL_FORMAT = "igpr-model-v1"
FLIGHT_HEADER = ["t", "lat_deg", "lon_deg"]
DTI_HEADER = ["i", "j", "d11", "d12", "d13", "d22", "d23", "d33"]
SPD_CLAMP = 1e-8


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------


def point_size(manifold):
    """Number of serialized values per point."""
    if isinstance(manifold, Sphere):
        return manifold.ambient_dim
    return manifold.n * (manifold.n + 1) // 2


def format_point(manifold, p):
    """Serialized values: sphere coordinates or SPD upper triangle (row-major)."""
    p = np.asarray(p, dtype=float)
    if isinstance(manifold, Sphere):
        return p.tolist()
    return p[np.triu_indices(manifold.n)].tolist()


def parse_point(manifold, values, validate=True):
    """Inverse of :func:`format_point`. Accepts a sequence or a whitespace/comma string."""
    if isinstance(values, str):
        values = values.replace(",", " ").split()
    v = np.asarray([float(x) for x in values], dtype=float)
    if v.size != point_size(manifold):
        raise InvalidPointError(f"expected {point_size(manifold)} values, got {v.size}")
    if isinstance(manifold, Sphere):
        p = v
    else:
        n = manifold.n
        p = np.zeros((n, n))
        p[np.triu_indices(n)] = v
        p = p + np.triu(p, 1).T
    return manifold.check_point(p) if validate else p


def _num(s):
    """Shortest round-tripping text for a float."""
    return repr(float(s))


def _open_rows(path):
    """Yield ``(line_number, row)`` of a CSV file; the header is line 1."""
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            yield k, [c.strip() for c in row]


def read_header(path):
    for _, row in _open_rows(path):
        return row
    raise DataError(f"{path}: file is empty")


def _floats(row, k, names):
    try:
        return [float(v) for v in row]
    except ValueError:
        raise DataError(f"line {k}: non-numeric value in {', '.join(names)}", line=k) from None


# ---------------------------------------------------------------------------
# flight trajectories on S^2
# ---------------------------------------------------------------------------


def latlon_to_point(lat_deg, lon_deg):
    """Unit vector ``(cos lat cos lon, cos lat sin lon, sin lat)``."""
    phi, lam = np.radians(lat_deg), np.radians(lon_deg)
    p = np.stack([np.cos(phi) * np.cos(lam), np.cos(phi) * np.sin(lam), np.sin(phi)], axis=-1)
    return p / np.linalg.norm(p, axis=-1, keepdims=True)


def point_to_latlon(p):
    """Latitude and longitude in degrees of unit vectors ``p`` (..., 3)."""
    p = np.asarray(p, dtype=float)
    lat = np.degrees(np.arctan2(p[..., 2], np.hypot(p[..., 0], p[..., 1])))
    lon = np.degrees(np.arctan2(p[..., 1], p[..., 0]))
    return lat, lon


def read_flight_csv(path):
    """Raw ``(t, lat_deg, lon_deg)`` arrays of a flight CSV.

    Raises
    ------
    DataError
        Wrong header, non-numeric fields or ``|lat| > 90``, naming the line.
    """
    rows = list(_open_rows(path))
    if not rows or [c.lower() for c in rows[0][1]] != FLIGHT_HEADER:
        raise DataError(f"{path}: expected header {','.join(FLIGHT_HEADER)}", line=1)
    out = []
    for k, row in rows[1:]:
        if len(row) != 3:
            raise DataError(f"line {k}: expected 3 fields, got {len(row)}", line=k)
        t, lat, lon = _floats(row, k, FLIGHT_HEADER)
        if not all(math.isfinite(x) for x in (t, lat, lon)):
            raise DataError(f"line {k}: non-finite value", line=k)
        if abs(lat) > 90:
            raise DataError(f"line {k}: latitude {lat} outside [-90, 90]", line=k)
        out.append((t, lat, lon))
    if len(out) < 2:
        raise DataError(f"{path}: need at least 2 observations")
    a = np.array(out)
    return a[:, 0], a[:, 1], a[:, 2]


def flight_dataset(t, lat, lon, presmooth=False, bandwidth=None):
    """Dataset on S^2 with ``t`` rescaled to ``[0, 1]`` (first to last time).

    With ``presmooth``, latitude and (unwrapped) longitude are smoothed by
    :func:`local_linear_smooth` before mapping to the sphere.
    """
    t = np.asarray(t, dtype=float)
    order = np.argsort(t, kind="stable")
    t, lat, lon = t[order], np.asarray(lat, dtype=float)[order], np.asarray(lon, dtype=float)[order]
    span = t[-1] - t[0]
    if not span > 0:
        raise DataError("flight times must not all be equal")
    s = (t - t[0]) / span
    if presmooth:
        lon = np.unwrap(lon, period=360.0)
        lat = np.clip(local_linear_smooth(s, lat, bandwidth), -90.0, 90.0)
        lon = local_linear_smooth(s, lon, bandwidth)
    Y = latlon_to_point(lat, lon)
    return Dataset(Sphere(2), s[:, None], Y, s)


def ingest_flight_csv(path, presmooth=False, bandwidth=None):
    return flight_dataset(*read_flight_csv(path), presmooth=presmooth, bandwidth=bandwidth)


def write_flight_csv(path, t, lat, lon):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FLIGHT_HEADER)
        for row in zip(t, lat, lon):
            w.writerow([_num(v) for v in row])


# ---------------------------------------------------------------------------
# DTI tensor grids on SPD(3)
# ---------------------------------------------------------------------------


def _normalize_axis(v):
    lo, hi = v.min(), v.max()
    return np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)


def _clamp_spd(P, floor=SPD_CLAMP):
    w, U = np.linalg.eigh(0.5 * (P + P.T))
    P = (U * np.maximum(w, floor)) @ U.T
    return 0.5 * (P + P.T)


def read_dti_csv(path, clamp_spd=False):
    """Raw grid indices (n, 2) and tensors (n, 3, 3) of a DTI CSV.

    Raises
    ------
    DataError
        Wrong header, non-numeric fields, duplicate ``(i, j)`` or a tensor
        that is not positive definite (unless ``clamp_spd``).
    """
    rows = list(_open_rows(path))
    if not rows or [c.lower() for c in rows[0][1]] != DTI_HEADER:
        raise DataError(f"{path}: expected header {','.join(DTI_HEADER)}", line=1)
    m = SPD(3)
    seen = {}
    ij, tensors = [], []
    for k, row in rows[1:]:
        if len(row) != 8:
            raise DataError(f"line {k}: expected 8 fields, got {len(row)}", line=k)
        vals = _floats(row, k, DTI_HEADER)
        if not all(math.isfinite(x) for x in vals):
            raise DataError(f"line {k}: non-finite value", line=k)
        key = (vals[0], vals[1])
        if key in seen:
            raise DataError(f"line {k}: duplicate grid index {key} (first on line {seen[key]})", line=k)
        seen[key] = k
        P = parse_point(m, vals[2:], validate=False)
        try:
            P = m.check_point(P)
        except InvalidPointError as exc:
            if not clamp_spd:
                raise DataError(f"line {k}: tensor at index {key} is not SPD ({exc})", line=k) from None
            P = _clamp_spd(P)
        ij.append(key)
        tensors.append(P)
    if not tensors:
        raise DataError(f"{path}: no tensors")
    return np.array(ij), np.array(tensors)


def dti_dataset(ij, tensors):
    """Dataset on SPD(3) with predictors ``(i, j)`` normalized to ``[0, 1]^2``.

    The curve index ``t`` is the normalized row-major scan position.
    """
    ij = np.asarray(ij, dtype=float)
    X = np.column_stack([_normalize_axis(ij[:, 0]), _normalize_axis(ij[:, 1])])
    order = np.lexsort((ij[:, 1], ij[:, 0]))
    rank = np.empty(len(ij))
    rank[order] = np.arange(len(ij))
    t = rank / max(len(ij) - 1, 1)
    ds = Dataset(SPD(3), X, np.asarray(tensors, dtype=float), t)
    ds.grid_index = ij
    return ds


def ingest_dti_csv(path, clamp_spd=False):
    return dti_dataset(*read_dti_csv(path, clamp_spd=clamp_spd))


def write_dti_csv(path, ij, tensors):
    m = SPD(3)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DTI_HEADER)
        for (i, j), P in zip(ij, tensors):
            idx = [int(v) if float(v).is_integer() else _num(v) for v in (i, j)]
            w.writerow(idx + [_num(v) for v in format_point(m, P)])


# ---------------------------------------------------------------------------
# generic datasets and predictions
# ---------------------------------------------------------------------------


def _split_header(header):
    xs = [c for c in header if c.startswith("x")]
    ys = [c for c in header if c.startswith("y")]
    has_t = "t" in header
    expected = xs + (["t"] if has_t else []) + ys
    if header != expected:
        raise DataError("generic CSV header must be x1..xQ[,t][,y1..yK]", line=1)
    return len(xs), has_t, len(ys)


def read_generic_csv(path, manifold=None, require_y=True):
    """Read a ``x1..xQ[,t][,y1..yK]`` table.

    Returns
    -------
    X : ndarray (n, Q)
    t : ndarray (n,) or None
    Y : ndarray of points or None
    """
    rows = list(_open_rows(path))
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = [c.lower() for c in rows[0][1]]
    q, has_t, k = _split_header(header)
    if q == 0:
        raise DataError("generic CSV needs at least one predictor column x1", line=1)
    if k and manifold is None:
        raise DataError("a manifold (e.g. sphere:2 or spd:2) is required to read y columns")
    if k and k != point_size(manifold):
        raise DataError(f"{k} y columns do not match {manifold!r} ({point_size(manifold)} values)", line=1)
    if require_y and not k:
        raise DataError("response columns y1..yK are required", line=1)
    X, t, Y = [], [], []
    for line, row in rows[1:]:
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}", line=line)
        vals = _floats(row, line, header)
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"line {line}: non-finite value", line=line)
        X.append(vals[:q])
        if has_t:
            t.append(vals[q])
        if k:
            try:
                Y.append(parse_point(manifold, vals[len(vals) - k:]))
            except InvalidPointError as exc:
                raise DataError(f"line {line}: invalid point ({exc})", line=line) from None
    if not X:
        raise DataError(f"{path}: no data rows")
    return np.array(X), (np.array(t) if has_t else None), (np.array(Y) if k else None)


def write_generic_csv(path, manifold, X, Y=None, t=None):
    X = np.asarray(X, dtype=float)
    X = X[:, None] if X.ndim == 1 else X
    header = [f"x{i + 1}" for i in range(X.shape[1])]
    if t is not None:
        header.append("t")
    if Y is not None:
        header += [f"y{i + 1}" for i in range(point_size(manifold))]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(X)):
            row = [_num(v) for v in X[i]]
            if t is not None:
                row.append(_num(t[i]))
            if Y is not None:
                row += [_num(v) for v in format_point(manifold, Y[i])]
            w.writerow(row)


def detect_format(path):
    header = [c.lower() for c in read_header(path)]
    if header == FLIGHT_HEADER:
        return "flight"
    if header == DTI_HEADER:
        return "dti"
    return "generic"


def load_dataset(path, fmt="auto", manifold=None, presmooth=False, bandwidth=None, clamp_spd=False):
    """Read any supported CSV into a :class:`Dataset`."""
    fmt = detect_format(path) if fmt == "auto" else fmt
    if fmt == "flight":
        return ingest_flight_csv(path, presmooth=presmooth, bandwidth=bandwidth)
    if fmt == "dti":
        return ingest_dti_csv(path, clamp_spd=clamp_spd)
    if fmt == "generic":
        X, t, Y = read_generic_csv(path, manifold)
        if t is None:
            t = X[:, 0] if X.shape[1] == 1 else np.zeros(len(X))
        return Dataset(manifold, X, Y, t)
    raise ValueError(f"unknown data format {fmt!r}")


# ---------------------------------------------------------------------------
# model documents
# ---------------------------------------------------------------------------


def _cov_to_dict(cov):
    k = cov.kernel
    return {
        "family": k.family,
        "theta": np.atleast_1d(k.theta).tolist(),
        "amplitude": np.atleast_1d(k.amplitude).tolist(),
        "B": None if cov.coreg is None else cov.coreg.B.tolist(),
        "L": None if cov.coreg is None else cov.coreg.L.tolist(),
        "noise_var": float(cov.noise_var),
        "rotation": None if cov.rotation is None else np.asarray(cov.rotation).tolist(),
    }


def _cov_from_dict(d):
    fam = d["family"]
    theta = d["theta"] if fam == "diag_rbf" else d["theta"][0]
    amp = d["amplitude"] if fam == "diag_rbf" else d["amplitude"][0]
    coreg = None if d.get("L") is None else Coregionalization(np.array(d["L"]))
    rot = None if d.get("rotation") is None else np.array(d["rotation"])
    return CovarianceModel(KernelSpec(fam, theta, amp), coreg, d["noise_var"], rot)


def _independent_to_dict(g):
    return {
        "X": g.X.tolist(),
        "offset": g.offset.tolist(),
        "columns": [None if c is None else _cov_to_dict(c) for c in g.covs],
        "alpha": [None if a is None else a.tolist() for a in g.alphas],
    }


def _independent_from_dict(d):
    g = _IndependentGP(False, None, None, None, False, 0, 0, 0.0, 0)
    g.X = np.array(d["X"], dtype=float)
    g.offset = np.array(d["offset"], dtype=float)
    g.covs = [None if c is None else _cov_from_dict(c) for c in d["columns"]]
    g.alphas = [None if a is None else np.array(a) for a in d["alpha"]]
    return g


def model_to_dict(est):
    """JSON-ready document of a fitted estimator (any of the three methods)."""
    if isinstance(est, IntrinsicGPR):
        m = est.model_
        man = m.manifold
        return {
            "format": MODEL_FORMAT,
            "method": "igpr",
            "manifold": man.descriptor(),
            "bpf": m.bpf.to_dict(),
            "anchor_t": m.anchor_t,
            "frame": {"base": format_point(man, m.frame.base), "basis": m.frame.basis.tolist()},
            "hyperparameters": _cov_to_dict(m.cov),
            "X": m.X.tolist(),
            "t": m.t.tolist(),
            "residual_coords": m.residual_coords.tolist(),
            "include_noise": bool(est.include_noise),
        }
    if isinstance(est, (MGPR, WrappedGPR)):
        doc = {
            "format": MODEL_FORMAT,
            "method": est.label,
            "manifold": est.manifold_.descriptor(),
            "gp": _independent_to_dict(est.gp_),
        }
        if isinstance(est, WrappedGPR):
            doc["bpf"] = est.bpf_.to_dict()
        return doc
    raise TypeError(f"cannot serialize {type(est).__name__}")


def model_from_dict(doc):
    """Rebuild a fitted estimator from :func:`model_to_dict` output."""
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"not an {MODEL_FORMAT} document (format={doc.get('format')!r})")
    man = manifold_from_descriptor(doc["manifold"])
    method = doc.get("method", "igpr")
    if method == "igpr":
        curve = curve_from_dict(man, doc["bpf"])
        frame = Frame(man, parse_point(man, doc["frame"]["base"], validate=False), np.array(doc["frame"]["basis"]))
        cov = _cov_from_dict(doc["hyperparameters"])
        model = gp.FittedModel(man, curve, float(doc["anchor_t"]), frame, cov, np.array(doc["X"], dtype=float),
                               np.array(doc["t"], dtype=float), np.array(doc["residual_coords"], dtype=float))
        est = IntrinsicGPR(manifold=man, bpf=curve, kernel=cov.kernel.family, frame=frame,
                           include_noise=doc.get("include_noise", False))
        est.manifold_ = man
        est.bpf_ = curve
        est.model_ = model
        est.fit_info_ = {}
        return est
    if method in ("mgpr", "wgpr-approx"):
        est = MGPR(manifold=man) if method == "mgpr" else WrappedGPR(manifold=man)
        est.manifold_ = man
        est.embedding_ = AmbientEmbedding(man)
        est.gp_ = _independent_from_dict(doc["gp"])
        if method == "wgpr-approx":
            est.bpf_ = curve_from_dict(man, doc["bpf"])
            est.bpf = est.bpf_
        return est
    raise DataError(f"unknown method {method!r} in model document")


def save_model(est, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(est), fh, indent=1)


def load_model(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(doc)
