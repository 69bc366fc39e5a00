"""Intrinsic GP regression engine.

Training responses are turned into tangent coordinates by taking
``Log(mu(t_i), y_i)``, transporting it along the basepoint curve to the anchor
``mu(t_a)`` and reading coordinates in an anchor frame ``E``. Those coordinates
get a zero-mean Gaussian process prior with covariance ``kron(K, B) + s2 I``;
predictions are mapped back through the transported frame and ``Exp``.
"""

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .covariance import (
    Coregionalization,
    CovarianceModel,
    KernelSpec,
    assemble_cross_cov,
    assemble_test_cov,
    assemble_train_cov,
    kernel_matrix,
)
from .exceptions import (
    ConditioningError,
    ConditioningWarning,
    InitializationError,
    OptimizationError,
    SingularityError,
)
from .manifolds import Frame

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
JITTER = 1e-10
FD_STEP = 1e-5


# ---------------------------------------------------------------------------
# linear algebra helpers
# ---------------------------------------------------------------------------


def robust_cholesky(A, jitter=JITTER, max_tries=7, warn=True):
    """Lower Cholesky factor, adding escalating diagonal jitter on failure.

    Jitter starts at ``jitter * mean(diag(A))`` and grows tenfold per try.

    Raises
    ------
    ConditioningError
        If no jitter level up to ``jitter * 10**(max_tries-1)`` works; the
        exception carries the smallest eigenvalue of ``A``.
    """
    try:
        return cholesky(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    scale = max(float(np.mean(np.diag(A))), 1e-300)
    eps = jitter * scale
    for _ in range(max_tries):
        try:
            L = cholesky(A + eps * np.eye(len(A)), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            eps *= 10.0
            continue
        if warn:
            warnings.warn(
                f"covariance is numerically singular; added jitter {eps:.2e}",
                ConditioningWarning,
                stacklevel=2,
            )
        return L
    min_eig = float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])
    raise ConditioningError(
        f"Cholesky factorization failed (smallest eigenvalue {min_eig:.3e})", min_eig
    )


def _gauss_lml(L, r):
    alpha = cho_solve((L, True), r, check_finite=False)
    return -0.5 * float(r @ alpha) - float(np.sum(np.log(np.diag(L)))) - 0.5 * r.size * LOG_2PI


# ---------------------------------------------------------------------------
# residuals and likelihood
# ---------------------------------------------------------------------------


def compute_residuals(manifold, Y, t, bpf, anchor_t, frame):
    """Anchor-frame coordinates of transported log residuals.

    Returns the flat vector (length n*D, sample-major) whose block i is
    ``frame.coords(Gamma_{mu(t_i) -> mu(anchor_t)}(Log(mu(t_i), y_i)))``.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty((len(Y), frame.dim))
    for i, (ti, yi) in enumerate(zip(t, Y)):
        mu = bpf.point(ti)
        try:
            g = manifold.log(mu, yi)
            out[i] = frame.coords(bpf.transport(ti, anchor_t, g))
        except SingularityError as exc:
            raise SingularityError(str(exc), index=i) from exc
    return out.ravel()


def log_marginal_likelihood(cov, X, r):
    """Gaussian log evidence of the stacked residual vector ``r``.

    ``-1/2 r^T C^{-1} r - 1/2 log|C| - (nD/2) log(2 pi)`` with
    ``C = assemble_train_cov(cov, X)``.
    """
    r = np.asarray(r, dtype=float).ravel()
    C = assemble_train_cov(cov, X)
    L = robust_cholesky(C)
    return _gauss_lml(L, r)


class _LMLEvaluator:
    """Structured log evidence used inside the optimizer.

    ``diag_rbf`` decouples into one n x n problem per coordinate; ``rbf``
    uses ``kron(K, B) = (U x V) diag(l_i s_d) (U x V)^T``.
    """

    def __init__(self, X, R, family, D, fit_amplitude, optimize_noise, fixed):
        self.X = X
        self.R = R  # (n, D)
        self.family = family
        self.D = D
        self.fit_amplitude = fit_amplitude
        self.optimize_noise = optimize_noise
        self.fixed = fixed
        n = len(X)
        d2 = np.sum(X**2, 1)
        self.r2 = np.maximum(d2[:, None] + d2[None, :] - 2 * X @ X.T, 0.0)
        np.fill_diagonal(self.r2, 0.0)
        self.n = n
        self._eig_cache = {}

    # -- parameter packing ------------------------------------------------
    def unpack(self, x):
        D = self.D
        i = 0
        if self.family == "diag_rbf":
            theta = np.exp(x[i : i + D])
            i += D
            if self.fit_amplitude:
                amp = np.exp(x[i : i + D])
                i += D
            else:
                amp = self.fixed["amplitude"]
            coreg_params = None
        else:
            theta = np.exp(x[i : i + 1])
            i += 1
            amp = np.ones(1)
            k = D * (D + 1) // 2
            coreg_params = x[i : i + k]
            i += k
        s2 = float(np.exp(x[i])) if self.optimize_noise else self.fixed["noise_var"]
        return theta, amp, coreg_params, s2

    def to_model(self, x):
        theta, amp, cp, s2 = self.unpack(x)
        if self.family == "diag_rbf":
            return CovarianceModel(KernelSpec("diag_rbf", theta, amp), None, s2)
        coreg = Coregionalization.from_params(cp, self.D)
        return CovarianceModel(KernelSpec("rbf", theta, 1.0), coreg, s2)

    # -- evaluation ---------------------------------------------------------
    def _coord_term(self, theta_d, amp_d, s2, d):
        K = amp_d * np.exp(-self.r2 / theta_d)
        K[np.diag_indices_from(K)] += s2 + JITTER * amp_d
        L = cholesky(K, lower=True, check_finite=False)
        return _gauss_lml(L, self.R[:, d])

    def _eig(self, theta):
        key = float(theta)
        hit = self._eig_cache.get(key)
        if hit is None:
            lam, U = np.linalg.eigh(np.exp(-self.r2 / theta))
            hit = (np.maximum(lam, 0.0), U)
            if len(self._eig_cache) > 64:
                self._eig_cache.clear()
            self._eig_cache[key] = hit
        return hit

    def _rbf_lml(self, theta, cp, s2):
        lam, U = self._eig(theta)
        B = Coregionalization.from_params(cp, self.D).B
        s, V = np.linalg.eigh(B)
        s = np.maximum(s, 0.0)
        z = U.T @ self.R @ V  # (n, D) coefficients in the joint eigenbasis
        ev = lam[:, None] * s[None, :] + s2 + JITTER * max(float(np.mean(s)), 1e-300)
        if np.any(ev <= 0):
            raise np.linalg.LinAlgError("non-positive eigenvalue")
        return -0.5 * float(np.sum(z**2 / ev)) - 0.5 * float(np.sum(np.log(ev))) - 0.5 * ev.size * LOG_2PI

    def value(self, x):
        theta, amp, cp, s2 = self.unpack(x)
        if self.family == "diag_rbf":
            return sum(self._coord_term(theta[d], amp[d], s2, d) for d in range(self.D))
        return self._rbf_lml(theta[0], cp, s2)

    def value_and_grad(self, x):
        """Negative log evidence and its central finite-difference gradient."""
        try:
            if self.family == "diag_rbf":
                return self._diag_value_and_grad(x)
            f = -self.value(x)
            g = np.empty_like(x)
            for j in range(x.size):
                e = np.zeros_like(x)
                e[j] = FD_STEP
                g[j] = (-self.value(x + e) + self.value(x - e)) / (2 * FD_STEP)
            return f, g
        except (np.linalg.LinAlgError, FloatingPointError, ValueError):
            return np.inf, np.zeros_like(x)

    def _diag_value_and_grad(self, x):
        D = self.D
        theta, amp, _, s2 = self.unpack(x)
        terms = np.array([self._coord_term(theta[d], amp[d], s2, d) for d in range(D)])
        f = -float(terms.sum())
        g = np.zeros_like(x)
        h = FD_STEP
        eh = np.exp(h)
        for d in range(D):
            up = self._coord_term(theta[d] * eh, amp[d], s2, d)
            dn = self._coord_term(theta[d] / eh, amp[d], s2, d)
            g[d] = -(up - dn) / (2 * h)
            if self.fit_amplitude:
                up = self._coord_term(theta[d], amp[d] * eh, s2, d)
                dn = self._coord_term(theta[d], amp[d] / eh, s2, d)
                g[D + d] = -(up - dn) / (2 * h)
        if self.optimize_noise:
            up = sum(self._coord_term(theta[d], amp[d], s2 * eh, d) for d in range(D))
            dn = sum(self._coord_term(theta[d], amp[d], s2 / eh, d) for d in range(D))
            g[-1] = -(up - dn) / (2 * h)
        return f, g


def default_init(X, R, family, noise_floor=1e-10):
    """Data-driven starting point for the hyperparameter search.

    theta: median squared pairwise input distance; B: sample covariance of
    the residual blocks (its diagonal for ``diag_rbf`` amplitudes); noise:
    ``0.1 * trace(B) / D``.
    """
    X = np.asarray(X, dtype=float)
    n, D = R.shape
    if n > 1:
        d2 = np.sum((X[:, None, :] - X[None, :, :]) ** 2, -1)[np.triu_indices(n, 1)]
        pos = d2[d2 > 0]
        theta0 = float(np.median(pos)) if pos.size else 1.0
    else:
        theta0 = 1.0
    if n > 1:
        B0 = np.atleast_2d(np.cov(R, rowvar=False, bias=True))
    else:
        B0 = np.atleast_2d(np.outer(R[0], R[0]))
    scale = float(np.trace(B0)) / D
    if not scale > 0:
        scale = 1.0
        B0 = np.eye(D)
    B0 = B0 + 1e-6 * scale * np.eye(D)
    noise0 = max(0.1 * scale, noise_floor)
    if family == "diag_rbf":
        kernel = KernelSpec("diag_rbf", np.full(D, theta0), np.maximum(np.diag(B0), 1e-12 * scale))
        return CovarianceModel(kernel, None, noise0)
    return CovarianceModel(KernelSpec("rbf", theta0, 1.0), Coregionalization.from_matrix(B0), noise0)


def _pack(cov, fit_amplitude, optimize_noise, noise_floor):
    parts = [np.log(cov.kernel.theta)]
    if cov.kernel.family == "diag_rbf":
        if fit_amplitude:
            parts.append(np.log(cov.kernel.amplitude))
    else:
        parts.append(cov.coreg.to_params())
    if optimize_noise:
        parts.append([np.log(max(cov.noise_var, noise_floor))])
    return np.concatenate(parts)


def fit_hyperparameters(
    X,
    R,
    family="diag_rbf",
    init=None,
    optimize_noise=True,
    fit_amplitude=False,
    n_restarts=5,
    max_iter=200,
    noise_floor=1e-10,
    random_state=0,
):
    """Maximize the log marginal likelihood over kernel, B and noise.

    Parameters
    ----------
    X : ndarray, shape (n, Q)
    R : ndarray, shape (n, D)
        Residual coordinates, one row per sample.
    family : {'diag_rbf', 'rbf'}
    init : CovarianceModel, optional
        Starting point; defaults to :func:`default_init`. For ``diag_rbf``
        with ``fit_amplitude=False`` the amplitudes of ``init`` stay fixed
        (``default_init`` amplitudes are replaced by ones in that case).
    optimize_noise : bool, default=True
        If False, ``init.noise_var`` is kept.
    n_restarts : int, default=5
        Total number of starts; the first is ``init``, the others are random
        log-space perturbations of it.
    max_iter : int, default=200
        L-BFGS-B iteration cap per start.

    Returns
    -------
    cov : CovarianceModel
    info : dict
        ``lml_init``, ``lml``, ``converged`` and a per-start ``trace``.
    """
    X = np.asarray(X, dtype=float)
    R = np.asarray(R, dtype=float)
    n, D = R.shape
    if init is None:
        init = default_init(X, R, family, noise_floor)
        if family == "diag_rbf" and not fit_amplitude:
            init = replace(init, kernel=KernelSpec("diag_rbf", init.kernel.theta, 1.0))
    if init.kernel.family != family:
        raise ValueError("init covariance has the wrong kernel family")
    if init.rotation is not None:
        raise ValueError("hyperparameters are fitted in the anchor frame; init must not be rotated")

    fixed = {"amplitude": init.kernel.amplitude, "noise_var": init.noise_var}
    ev = _LMLEvaluator(X, R, family, D, fit_amplitude, optimize_noise, fixed)
    x0 = _pack(init, fit_amplitude, optimize_noise, noise_floor)

    f0, _ = ev.value_and_grad(x0)
    if not np.isfinite(f0):
        try:
            lml0 = log_marginal_likelihood(init, X, R.ravel())
        except ConditioningError as exc:
            raise InitializationError(f"log marginal likelihood is not finite at init: {exc}") from exc
        if not np.isfinite(lml0):
            raise InitializationError("log marginal likelihood is not finite at init")
        f0 = -lml0
    bounds = _bounds(init, x0, fit_amplitude, optimize_noise, noise_floor, R)
    x0 = np.clip(x0, [b[0] if b[0] is not None else -np.inf for b in bounds],
                 [b[1] if b[1] is not None else np.inf for b in bounds])

    rng = np.random.default_rng(random_state)
    starts = [x0]
    for _ in range(max(n_restarts, 1) - 1):
        xs = x0 + rng.normal(0.0, 1.0, size=x0.size)
        lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
        hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])
        starts.append(np.clip(xs, lo, hi))

    best_x, best_f = x0, f0
    trace = []
    for k, xs in enumerate(starts):
        try:
            res = minimize(
                ev.value_and_grad,
                xs,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": max_iter},
            )
        except Exception as exc:  # noqa: BLE001 - a failed restart is recorded, not fatal
            trace.append({"start": k, "status": "failed", "message": str(exc)})
            continue
        ok = bool(np.isfinite(res.fun))
        trace.append(
            {
                "start": k,
                "status": "ok" if ok else "failed",
                "lml": float(-res.fun) if ok else None,
                "n_iter": int(res.nit),
                "converged": bool(res.success),
                "grad_norm": float(np.linalg.norm(res.jac)) if ok else None,
            }
        )
        if ok and res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    if not any(tr["status"] == "ok" for tr in trace):
        raise OptimizationError("all hyperparameter restarts failed", best=ev.to_model(best_x))

    cov = ev.to_model(best_x)
    info = {
        "lml_init": float(-f0),
        "lml": float(-best_f),
        "converged": any(tr.get("converged") for tr in trace),
        "trace": trace,
    }
    logger.debug("hyperparameter fit: lml %.6g -> %.6g", info["lml_init"], info["lml"])
    return cov, info


def _bounds(init, x0, fit_amplitude, optimize_noise, noise_floor, R):
    scale = max(float(np.mean(R**2)), 1e-12)
    b = []
    lt = x0[0] if init.kernel.family == "rbf" else None
    D = init.dim
    if init.kernel.family == "diag_rbf":
        b += [(xt - 7.0, xt + 7.0) for xt in x0[:D]]
        if fit_amplitude:
            b += [(np.log(scale) - 12.0, np.log(scale) + 12.0)] * D
    else:
        b.append((lt - 7.0, lt + 7.0))
        b += [(np.log(scale) / 2 - 10.0, np.log(scale) / 2 + 10.0)] * D
        b += [(None, None)] * (D * (D - 1) // 2)
    if optimize_noise:
        b.append((np.log(noise_floor), max(np.log(10.0 * scale), np.log(noise_floor) + 1.0)))
    return b


# ---------------------------------------------------------------------------
# fitted model and prediction
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PosteriorPrediction:
    """Predictive distribution at one test input.

    ``mean_coords`` and ``cov`` are coordinates in ``frame`` (at ``base``,
    the basepoint-curve point of the test index); ``map_point`` is
    ``Exp(base, tangent_mean)``.
    """

    t: float
    base: np.ndarray
    frame: Frame
    mean_coords: np.ndarray
    cov: np.ndarray
    tangent_mean: np.ndarray
    map_point: np.ndarray

    def rebased(self):
        """Approximate intrinsic Gaussian centred at the MAP point.

        Returns the frame transported to ``map_point`` along the connecting
        geodesic; the coordinate covariance is unchanged in that frame.
        """
        return self.frame.transport(self.map_point), self.cov.copy()


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Everything needed to predict: curve, anchor frame, covariance, weights."""

    manifold: object
    bpf: object
    anchor_t: float
    frame: Frame
    cov: CovarianceModel
    X: np.ndarray
    t: np.ndarray
    residual_coords: np.ndarray
    Y: np.ndarray = None
    chol: np.ndarray = field(init=False, repr=False)
    alpha: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        C = assemble_train_cov(self.cov, self.X)
        L = robust_cholesky(C)
        object.__setattr__(self, "chol", L)
        object.__setattr__(self, "alpha", cho_solve((L, True), self.residual_coords, check_finite=False))

    @property
    def dim(self):
        return self.frame.dim

    def frame_at(self, t):
        """Anchor frame transported along the curve to ``mu(t)``."""
        t = float(t)
        if t == self.anchor_t:
            return self.frame
        basis = np.array([self.bpf.transport(self.anchor_t, t, e) for e in self.frame.basis])
        return Frame(self.manifold, self.bpf.point(t), basis)

    def log_marginal_likelihood(self):
        return _gauss_lml(self.chol, self.residual_coords)


def fit_model(manifold, X, Y, t, bpf, anchor_t, frame, cov):
    """Assemble a :class:`FittedModel` for fixed hyperparameters."""
    r = compute_residuals(manifold, Y, t, bpf, anchor_t, frame)
    return FittedModel(manifold, bpf, float(anchor_t), frame, cov, np.asarray(X, dtype=float),
                       np.asarray(t, dtype=float), r, np.asarray(Y, dtype=float))


def predict_coords(model, Xstar, include_noise=False):
    """Posterior means (m, D) and covariances (m, D, D) in anchor coordinates."""
    Xs = np.asarray(Xstar, dtype=float)
    Xs = Xs[:, None] if Xs.ndim == 1 else Xs
    D = model.dim
    m = len(Xs)
    Ks = assemble_cross_cov(model.cov, model.X, Xs)  # (nD, mD)
    mean = (Ks.T @ model.alpha).reshape(m, D)
    V = solve_triangular(model.chol, Ks, lower=True, check_finite=False)
    covs = np.empty((m, D, D))
    for j in range(m):
        Vj = V[:, j * D : (j + 1) * D]
        S = assemble_test_cov(model.cov, Xs[j]) - Vj.T @ Vj
        if include_noise:
            S = S + model.cov.noise_var * np.eye(D)
        covs[j] = 0.5 * (S + S.T)
    return mean, covs


def predict(model, xstar, tstar=None, include_noise=False):
    """Posterior at one test input, expressed at ``mu(tstar)``.

    Coordinates computed in the anchor frame are carried to the transported
    frame at ``mu(tstar)`` unchanged (transport is an isometry along the
    curve), which is the anchor-invariance property of the model.
    """
    xstar = np.atleast_1d(np.asarray(xstar, dtype=float))
    if xstar.shape != (model.X.shape[1],):
        raise ValueError(f"test input must have {model.X.shape[1]} entries, got shape {xstar.shape}")
    tstar = model.anchor_t if tstar is None else float(tstar)
    mean, covs = predict_coords(model, xstar[None, :], include_noise)
    return _to_prediction(model, tstar, mean[0], covs[0])


def _to_prediction(model, tstar, beta, S):
    frame = model.frame_at(tstar)
    tangent = frame.from_coords(beta)
    base = frame.base
    return PosteriorPrediction(tstar, base, frame, beta, S, tangent, model.manifold.exp(base, tangent))


def predict_many(model, Xstar, tstar, include_noise=False):
    """List of :class:`PosteriorPrediction`, one per row of ``Xstar``."""
    mean, covs = predict_coords(model, Xstar, include_noise)
    tstar = np.broadcast_to(np.asarray(tstar, dtype=float), (len(mean),))
    return [_to_prediction(model, ts, b, S) for ts, b, S in zip(tstar, mean, covs)]


def rebase_anchor(model, t_new):
    """Same model with the common tangent space moved to ``mu(t_new)``.

    The new anchor frame is the old one transported along the curve, and the
    residuals are recomputed against it.
    """
    t_new = float(t_new)
    if t_new == model.anchor_t:
        return model
    frame = model.frame_at(t_new)
    if model.Y is not None:
        r = compute_residuals(model.manifold, model.Y, model.t, model.bpf, t_new, frame)
    else:
        vecs = [model.frame.from_coords(c) for c in model.residual_coords.reshape(-1, model.dim)]
        r = np.concatenate([frame.coords(model.bpf.transport(model.anchor_t, t_new, v)) for v in vecs])
    return FittedModel(model.manifold, model.bpf, t_new, frame, model.cov, model.X, model.t, r, model.Y)


def change_frame(model, O):
    """Re-express the model in the frame ``W_k = sum_j O[k, j] E_j``.

    Coordinates become ``O @ c`` and covariance blocks ``O block O^T``.
    """
    O = np.asarray(O, dtype=float)
    frame = model.frame.rotated(O)
    if model.Y is not None:
        r = compute_residuals(model.manifold, model.Y, model.t, model.bpf, model.anchor_t, frame)
    else:
        r = (model.residual_coords.reshape(-1, model.dim) @ O.T).ravel()
    return FittedModel(model.manifold, model.bpf, model.anchor_t, frame, model.cov.with_rotation(O.T),
                       model.X, model.t, r, model.Y)


def transport_prediction(pred, bpf, t_to):
    """Carry a prediction's tangent mean to ``mu(t_to)`` along the curve.

    Returns ``(tangent, cov, map_point)`` where ``cov`` is expressed in the
    transported frame (so it is numerically unchanged).
    """
    m = pred.frame.manifold
    v = bpf.transport(pred.t, t_to, pred.tangent_mean)
    base = bpf.point(t_to)
    return v, pred.cov.copy(), m.exp(base, v)


def sample_prior(manifold, bpf, cov, t_grid, frame, frame_t=None, X=None, random_state=None, return_coords=False):
    """Draw one path of the intrinsic GP prior on a grid of indices.

    Coordinates ``v ~ N(0, kron(K, B))`` are mapped to ``Exp(mu(t_j),
    from_coords(v_j, E_{t_j}))`` with ``E_{t_j}`` the frame transported along
    the curve from ``frame_t`` (defaults to the curve's reference time).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    X = t_grid[:, None] if X is None else np.asarray(X, dtype=float)
    frame_t = bpf.reference_t if frame_t is None else float(frame_t)
    rng = np.random.default_rng(random_state)
    C = assemble_train_cov(replace(cov, noise_var=0.0), X)
    L = robust_cholesky(C, warn=False)
    v = (L @ rng.standard_normal(len(C))).reshape(len(t_grid), -1)
    pts = []
    for tj, vj in zip(t_grid, v):
        basis = np.array([bpf.transport(frame_t, tj, e) for e in frame.basis])
        mu = bpf.point(tj)
        pts.append(manifold.exp(mu, np.tensordot(vj, basis, axes=1)))
    pts = np.array(pts)
    return (pts, v) if return_coords else pts


def kernel_gram_grid(cov, grid):
    """Per-coordinate kernel Gram matrices on a 1-d grid, shape (D, m, m)."""
    grid = np.asarray(grid, dtype=float)[:, None]
    if cov.kernel.family == "diag_rbf":
        return kernel_matrix(cov.kernel, grid)
    K = kernel_matrix(cov.kernel, grid)
    return np.array([b * K for b in np.diag(cov.coreg.B)])
