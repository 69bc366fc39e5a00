"""Input validation shared by the estimators."""

import numpy as np

from .exceptions import InvalidPointError
from .manifolds import SPD, Sphere


def check_inputs(X, n=None):
    """Return predictors as a finite float array of shape (n, Q)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"X must be 1-d or 2-d, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if n is not None and len(X) != n:
        raise ValueError(f"X has {len(X)} rows, expected {n}")
    return X


def infer_manifold(Y):
    """Sphere for (n, k) responses, SPD for (n, d, d)."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 2:
        return Sphere(Y.shape[1] - 1)
    if Y.ndim == 3 and Y.shape[1] == Y.shape[2]:
        return SPD(Y.shape[1])
    raise ValueError(f"cannot infer a manifold from responses of shape {Y.shape}")


def check_points(manifold, Y):
    """Validate every response; raises InvalidPointError naming the index."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape[1:] != manifold.point_shape:
        raise InvalidPointError(f"responses have shape {Y.shape[1:]}, expected {manifold.point_shape}")
    out = np.empty_like(Y)
    for i, y in enumerate(Y):
        try:
            out[i] = manifold.check_point(y)
        except InvalidPointError as exc:
            raise InvalidPointError(f"response {i}: {exc}") from exc
    return out


def check_index(t, X, required=True):
    """Curve index for each sample; defaults to X[:, 0] when Q == 1."""
    if t is None:
        if X.shape[1] == 1:
            return X[:, 0].copy()
        if required:
            raise ValueError("t is required when predictors have more than one column")
        return np.zeros(len(X))
    t = np.asarray(t, dtype=float).ravel()
    if t.size == 1 and len(X) > 1:
        t = np.full(len(X), t[0])
    if t.size != len(X) or not np.all(np.isfinite(t)):
        raise ValueError("t must hold one finite value per sample")
    return t
