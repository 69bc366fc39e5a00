"""scikit-learn style front end for intrinsic GP regression."""

import warnings
from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import gp
from .bpf import GeodesicCurve, PiecewiseGeodesicCurve, constant_curve, fit_geodesic_regression
from .covariance import Coregionalization, CovarianceModel, KernelSpec
from .exceptions import ConditioningWarning
from .manifolds import Frame
from .metrics import rmsge
from .validation import check_index, check_inputs, check_points, infer_manifold


def resolve_bpf(bpf, manifold, t, Y):
    """Turn a ``bpf`` setting into a curve object."""
    if isinstance(bpf, (GeodesicCurve, PiecewiseGeodesicCurve)):
        return bpf
    if bpf is None or bpf == "geodesic":
        return fit_geodesic_regression(manifold, t, Y)
    if bpf == "mean":
        return constant_curve(manifold, Y)
    raise ValueError(f"unknown bpf {bpf!r}; use 'geodesic', 'mean' or a curve object")


def resolve_frame(frame, manifold, curve, anchor_t):
    """Anchor frame at ``curve.point(anchor_t)``.

    Named frames are built at the curve's reference point and transported
    along the curve, so coordinates stay aligned with how data generated on
    that curve would be expressed.
    """
    if isinstance(frame, Frame):
        return frame
    ref = curve.reference_t
    base = curve.point(ref)
    if frame in (None, "default"):
        f = manifold.default_frame(base)
    elif frame == "elementary":
        if not hasattr(manifold, "elementary_frame"):
            raise ValueError("frame 'elementary' is only defined for SPD manifolds")
        f = manifold.elementary_frame(base)
    else:
        raise ValueError(f"unknown frame {frame!r}")
    if anchor_t == ref:
        return f
    basis = np.array([curve.transport(ref, anchor_t, e) for e in f.basis])
    return Frame(manifold, curve.point(anchor_t), basis)


def initial_covariance(kernel, D, theta=None, amplitude=None, coreg=None, noise_var=None):
    """Covariance model from user-supplied hyperparameters (None where unset)."""
    if kernel == "diag_rbf":
        th = np.ones(D) if theta is None else np.broadcast_to(np.asarray(theta, dtype=float), (D,))
        amp = 1.0 if amplitude is None else amplitude
        return CovarianceModel(KernelSpec("diag_rbf", th, amp), None, 0.0 if noise_var is None else noise_var)
    if kernel == "rbf":
        th = 1.0 if theta is None else float(np.asarray(theta).ravel()[0])
        B = np.eye(D) if coreg is None else np.asarray(coreg, dtype=float)
        return CovarianceModel(KernelSpec("rbf", th, 1.0), Coregionalization.from_matrix(B),
                               0.0 if noise_var is None else noise_var)
    raise ValueError(f"unknown kernel {kernel!r}; use 'diag_rbf' or 'rbf'")


class IntrinsicGPR(BaseEstimator):
    """Intrinsic Gaussian process regression for manifold-valued responses.

    Residuals ``Log(mu(t_i), y_i)`` around a basepoint curve are parallel
    transported to a common tangent space, written in an orthonormal (or
    named) frame and modelled with a coregionalized GP. Predictions are
    mapped back with ``Exp``.

    Parameters
    ----------
    manifold : Sphere or SPD, optional
        Inferred from the response shape when omitted.
    bpf : {'geodesic', 'mean'} or curve, default='geodesic'
        Basepoint curve: geodesic regression on ``t``, a constant curve at the
        intrinsic mean, or a fixed curve object.
    kernel : {'diag_rbf', 'rbf'}, default='diag_rbf'
        ``diag_rbf`` gives each coordinate its own length parameter with
        ``B = I``; ``rbf`` shares one kernel and fits a full PSD ``B``.
    frame : {'default', 'elementary'} or Frame, default='default'
    anchor : float, optional
        Curve index of the common tangent space (default: curve reference).
    theta, amplitude, coreg, noise_var : optional
        Initial (or, with ``optimize=False``, fixed) hyperparameters.
    optimize : bool, default=True
    optimize_noise : bool, default=True
    fit_amplitude : bool, default=False
        Fit per-coordinate amplitudes for ``diag_rbf``.
    n_restarts : int, default=5
    max_iter : int, default=200
    noise_floor : float, default=1e-10
    include_noise : bool, default=False
        Add the noise variance to predictive covariances.
    random_state : int, default=0
    """

    def __init__(
        self,
        manifold=None,
        bpf="geodesic",
        kernel="diag_rbf",
        frame="default",
        anchor=None,
        theta=None,
        amplitude=None,
        coreg=None,
        noise_var=None,
        optimize=True,
        optimize_noise=True,
        fit_amplitude=False,
        n_restarts=5,
        max_iter=200,
        noise_floor=1e-10,
        include_noise=False,
        random_state=0,
    ):
        self.manifold = manifold
        self.bpf = bpf
        self.kernel = kernel
        self.frame = frame
        self.anchor = anchor
        self.theta = theta
        self.amplitude = amplitude
        self.coreg = coreg
        self.noise_var = noise_var
        self.optimize = optimize
        self.optimize_noise = optimize_noise
        self.fit_amplitude = fit_amplitude
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.noise_floor = noise_floor
        self.include_noise = include_noise
        self.random_state = random_state

    def fit(self, X, Y, t=None):
        """Fit the basepoint curve, residual coordinates and hyperparameters.

        Parameters
        ----------
        X : array-like, shape (n, Q) or (n,)
        Y : array-like, shape (n,) + point_shape
        t : array-like, shape (n,), optional
            Curve index per sample; defaults to ``X[:, 0]`` for Q == 1.
        """
        manifold = self.manifold if self.manifold is not None else infer_manifold(Y)
        Y = check_points(manifold, Y)
        X = check_inputs(X, len(Y))
        needs_t = not (isinstance(self.bpf, str) and self.bpf == "mean")
        t = check_index(t, X, required=needs_t)

        curve = resolve_bpf(self.bpf, manifold, t, Y)
        anchor = curve.reference_t if self.anchor is None else float(self.anchor)
        frame = resolve_frame(self.frame, manifold, curve, anchor)
        D = frame.dim
        r = gp.compute_residuals(manifold, Y, t, curve, anchor, frame)
        R = r.reshape(len(Y), D)

        user_set = any(v is not None for v in (self.theta, self.amplitude, self.coreg, self.noise_var))
        init = None
        if user_set or not self.optimize:
            init = gp.default_init(X, R, self.kernel, self.noise_floor)
            if self.kernel == "diag_rbf" and not self.fit_amplitude:
                init = initial_covariance("diag_rbf", D, init.kernel.theta, 1.0, None, init.noise_var)
            init = _override(init, self.theta, self.amplitude, self.coreg, self.noise_var)

        info = {}
        if self.optimize and len(Y) >= 2:
            cov, info = gp.fit_hyperparameters(
                X, R, self.kernel, init=init,
                optimize_noise=self.optimize_noise,
                fit_amplitude=self.fit_amplitude,
                n_restarts=self.n_restarts,
                max_iter=self.max_iter,
                noise_floor=self.noise_floor,
                random_state=self.random_state,
            )
        else:
            cov = init if init is not None else gp.default_init(X, R, self.kernel, self.noise_floor)

        if cov.noise_var <= self.noise_floor and _has_duplicates(X):
            warnings.warn("duplicate inputs with (near) zero noise variance", ConditioningWarning)

        self.manifold_ = manifold
        self.bpf_ = curve
        self.model_ = gp.FittedModel(manifold, curve, anchor, frame, cov, X, t, r, Y)
        self.fit_info_ = info
        return self

    def _test_index(self, X, t):
        if t is None and X.shape[1] != 1:
            return np.full(len(X), self.model_.anchor_t)
        return check_index(t, X)

    def predict_distribution(self, X, t=None):
        """Posterior distribution per test input (list of PosteriorPrediction)."""
        check_is_fitted(self, "model_")
        X = check_inputs(X)
        return gp.predict_many(self.model_, X, self._test_index(X, t), self.include_noise)

    def predict(self, X, t=None):
        """MAP points ``Exp(mu(t*), beta*)``, shape (m,) + point_shape."""
        return np.array([p.map_point for p in self.predict_distribution(X, t)])

    def score(self, X, Y, t=None):
        """Negative root-mean-square geodesic error."""
        check_is_fitted(self, "model_")
        return -rmsge(self.manifold_, self.predict(X, t), Y)

    def log_marginal_likelihood(self):
        check_is_fitted(self, "model_")
        return self.model_.log_marginal_likelihood()

    @property
    def covariance_(self):
        check_is_fitted(self, "model_")
        return self.model_.cov


def _override(cov, theta, amplitude, coreg, noise_var):
    k = cov.kernel
    if theta is not None:
        th = np.asarray(theta, dtype=float)
        k = KernelSpec(k.family, np.broadcast_to(th, k.theta.shape) if k.family == "diag_rbf" else th, k.amplitude)
    if amplitude is not None and k.family == "diag_rbf":
        k = KernelSpec(k.family, k.theta, np.broadcast_to(np.asarray(amplitude, dtype=float), k.theta.shape))
    out = replace(cov, kernel=k)
    if coreg is not None and k.family == "rbf":
        out = replace(out, coreg=Coregionalization.from_matrix(coreg))
    if noise_var is not None:
        out = replace(out, noise_var=float(noise_var))
    return out


def _has_duplicates(X):
    return len(np.unique(np.round(X, 12), axis=0)) < len(X)
