"""Basepoint curves: geodesics, geodesic regression and presmoothing."""

import warnings

import numpy as np

from .exceptions import ConvergenceError, ConvergenceWarning


class GeodesicCurve:
    """Geodesic basepoint curve ``mu(t) = Exp(p0, t * v0)``.

    Parameters
    ----------
    manifold : Manifold
    p0 : ndarray
        Point at ``t = 0``.
    v0 : ndarray
        Velocity at ``p0``. A zero velocity gives a constant curve.
    """

    kind = "geodesic"
    reference_t = 0.0

    def __init__(self, manifold, p0, v0=None):
        self.manifold = manifold
        self.p0 = np.asarray(p0, dtype=float)
        self.v0 = manifold.zero(self.p0) if v0 is None else np.asarray(v0, dtype=float)
        self.converged = True
        self.n_iter = 0

    def __repr__(self):
        return f"GeodesicCurve({self.manifold!r}, speed={self.speed:.4g})"

    @property
    def speed(self):
        return self.manifold.norm(self.p0, self.v0)

    def __call__(self, t):
        return self.point(t)

    def point(self, t):
        return self.manifold.exp(self.p0, float(t) * self.v0)

    def transport(self, t_from, t_to, w):
        """Parallel transport ``w`` from ``mu(t_from)`` to ``mu(t_to)`` along the curve."""
        if t_from == t_to:
            return np.array(w, dtype=float)
        return self.manifold.transport_along(self.p0, self.v0, float(t_from), float(t_to), w)

    def to_dict(self):
        return {"kind": self.kind, "p0": self.p0.tolist(), "v0": self.v0.tolist()}


class PiecewiseGeodesicCurve:
    """Curve through ``(ts[k], points[k])`` joined by minimizing geodesics.

    Evaluation outside ``[ts[0], ts[-1]]`` is clamped with a warning.
    Transport runs knot to knot, so it follows the curve exactly.
    """

    kind = "piecewise"

    def __init__(self, manifold, ts, points):
        ts = np.asarray(ts, dtype=float)
        if ts.ndim != 1 or ts.size < 2 or np.any(np.diff(ts) <= 0):
            raise ValueError("piecewise curve needs a strictly increasing grid of >= 2 times")
        pts = np.asarray(points, dtype=float)
        if len(pts) != ts.size:
            raise ValueError("one point per grid time is required")
        self.manifold = manifold
        self.ts = ts
        self.points = pts

    @property
    def reference_t(self):
        return float(self.ts[0])

    def __call__(self, t):
        return self.point(t)

    def _clamp(self, t):
        t = float(t)
        if t < self.ts[0] or t > self.ts[-1]:
            warnings.warn(f"t={t} outside curve grid; clamped", RuntimeWarning, stacklevel=3)
            t = min(max(t, self.ts[0]), self.ts[-1])
        return t

    def point(self, t):
        t = self._clamp(t)
        k = int(np.clip(np.searchsorted(self.ts, t, side="right") - 1, 0, self.ts.size - 2))
        s = (t - self.ts[k]) / (self.ts[k + 1] - self.ts[k])
        if s == 0.0:
            return self.points[k].copy()
        return self.manifold.geodesic(self.points[k], self.points[k + 1], s)

    def transport(self, t_from, t_to, w):
        t_from, t_to = self._clamp(t_from), self._clamp(t_to)
        w = np.array(w, dtype=float)
        if t_from == t_to:
            return w
        lo, hi = sorted((t_from, t_to))
        knots = [t for t in self.ts if lo < t < hi]
        if t_to < t_from:
            knots = knots[::-1]
        path = [t_from, *knots, t_to]
        m = self.manifold
        here = self.point(path[0])
        for t in path[1:]:
            there = self.point(t)
            w = m.transport(here, there, w)
            here = there
        return w

    def to_dict(self):
        return {"kind": self.kind, "ts": self.ts.tolist(), "points": self.points.tolist()}


def curve_from_dict(manifold, d):
    if d["kind"] == "geodesic":
        return GeodesicCurve(manifold, np.array(d["p0"]), np.array(d["v0"]))
    if d["kind"] == "piecewise":
        return PiecewiseGeodesicCurve(manifold, d["ts"], d["points"])
    raise ValueError(f"unknown curve kind {d['kind']!r}")


def constant_curve(manifold, points):
    """Constant curve at the intrinsic mean of ``points``."""
    return GeodesicCurve(manifold, _safe_mean(manifold, points))


def _safe_mean(manifold, points):
    try:
        return manifold.mean(points)
    except ConvergenceError:
        warnings.warn("intrinsic mean did not converge; using last iterate", ConvergenceWarning)
        return manifold.mean(points, max_iter=1000, tol=1e-6)


def fit_geodesic_regression(manifold, t, Y, max_iter=500, tol=1e-12):
    """Least-squares geodesic fit ``min sum_i d^2(Exp(p0, t_i v0), y_i)``.

    Uses Riemannian descent with the first-order gradient that ignores
    Jacobi-field corrections (residual Log vectors transported back to the
    anchor), with a Gauss-Newton step scaling and backtracking. The problem is
    solved around the mean time and reparameterized to ``t = 0`` at the end.

    Parameters
    ----------
    manifold : Manifold
    t : array-like, shape (n,)
    Y : sequence of points, length n
    max_iter : int, default=500
    tol : float, default=1e-12
        Stop when the accepted step has Riemannian norm below ``tol``.

    Returns
    -------
    GeodesicCurve
        With extra attributes ``converged``, ``n_iter`` and ``objective``.
    """
    t = np.asarray(t, dtype=float)
    Y = [np.asarray(y, dtype=float) for y in Y]
    if t.ndim != 1 or len(Y) != t.size:
        raise ValueError("t and Y must have the same length")
    if t.size < 2:
        raise ValueError("geodesic regression needs at least 2 points")
    if np.ptp(t) == 0:
        raise ValueError("geodesic regression needs at least two distinct t values")

    m = manifold
    tbar = float(t.mean())
    s = t - tbar
    ss = float(np.sum(s**2))
    n = t.size

    p = _safe_mean(m, Y)
    v = sum(si * m.log(p, y) for si, y in zip(s, Y)) / ss

    def evaluate(p, v):
        mus = [m.exp(p, si * v) for si in s]
        res = [m.log(mu, y) for mu, y in zip(mus, Y)]
        return res, 0.5 * sum(m.inner(mu, e, e) for mu, e in zip(mus, res))

    res, obj = evaluate(p, v)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        back = [m.transport_along(p, v, si, 0.0, e) for si, e in zip(s, res)]
        dp = sum(back) / n
        dv = sum(si * w for si, w in zip(s, back)) / ss
        step = 1.0
        accepted = False
        for _ in range(40):
            p_new = m.exp(p, step * dp)
            v_new = m.transport(p, p_new, v + step * dv)
            try:
                res_new, obj_new = evaluate(p_new, v_new)
            except Exception:
                step *= 0.5
                continue
            if obj_new <= obj:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        size = step * (m.norm(p, dp) + m.norm(p, dv))
        p, v, res, obj = p_new, v_new, res_new, obj_new
        if size < tol or obj < 1e-28:
            converged = True
            break

    if not converged:
        warnings.warn(
            f"geodesic regression stopped after {max_iter} iterations", ConvergenceWarning
        )
    curve = GeodesicCurve(m, m.exp(p, -tbar * v), m.exp_velocity(p, v, -tbar))
    curve.converged = converged
    curve.n_iter = it
    curve.objective = float(obj)
    return curve


def default_bandwidth(t):
    """Reference-rule bandwidth ``1.06 * sd(t) * n^(-1/5)``."""
    t = np.asarray(t, dtype=float)
    return 1.06 * float(np.std(t, ddof=1)) * t.size ** (-0.2)


def local_linear_smooth(t, y, bandwidth=None):
    """Gaussian-kernel local linear smoother evaluated at the design points.

    Parameters
    ----------
    t : array-like, shape (n,)
    y : array-like, shape (n,)
    bandwidth : float, optional
        Kernel standard deviation; defaults to :func:`default_bandwidth`.

    Returns
    -------
    ndarray, shape (n,)
        Smoothed values. Points with fewer than two neighbours within five
        bandwidths fall back to their nearest observation (with a warning).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and y must be 1-d arrays of equal length")
    if t.size < 2:
        raise ValueError("smoothing needs at least 2 points")
    h = default_bandwidth(t) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")

    d = t[None, :] - t[:, None]
    w = np.exp(-0.5 * (d / h) ** 2)
    s0 = w.sum(1)
    s1 = (w * d).sum(1)
    s2 = (w * d**2).sum(1)
    t0 = w @ y
    t1 = (w * d) @ y
    den = s0 * s2 - s1**2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (s2 * t0 - s1 * t1) / den
    sparse = (np.abs(d) <= 5 * h).sum(1) < 2
    bad = sparse | ~np.isfinite(out) | (den <= 1e-300)
    if np.any(sparse):
        warnings.warn(
            f"{int(sparse.sum())} points have < 2 neighbours within 5h; widen the bandwidth",
            RuntimeWarning,
        )
    out[bad] = y[bad]
    return out
