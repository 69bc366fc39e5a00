"""Ambient-space comparison methods.

``MGPR`` runs independent GPs on the ambient coordinates of the responses.
``WrappedGPR`` (reported as ``wgpr-approx``) takes log residuals around the
basepoint curve but keeps them in ambient coordinates, without parallel
transport, before fitting independent GPs. Both are simplified ambient-space
baselines that share the kernel and optimizer of the intrinsic model.
"""

import numpy as np
from scipy.linalg import cho_solve
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .covariance import CovarianceModel, KernelSpec, kernel_matrix
from .estimators import resolve_bpf
from .gp import fit_hyperparameters, robust_cholesky
from .manifolds import SPD, Sphere
from .metrics import rmsge
from .validation import check_index, check_inputs, check_points, infer_manifold

SPD_CLAMP = 1e-8


class AmbientEmbedding:
    """Vectorization of points and tangent vectors in the ambient space.

    Sphere: the ambient coordinates themselves. SPD: upper-triangular entries
    in row-major order with off-diagonals scaled by sqrt(2), so the
    Frobenius inner product (the metric at the identity) is the dot product.
    """

    def __init__(self, manifold):
        self.manifold = manifold
        if isinstance(manifold, SPD):
            n = manifold.n
            self._iu = np.triu_indices(n)
            self._w = np.where(self._iu[0] == self._iu[1], 1.0, np.sqrt(2.0))
            self.dim = len(self._w)
        elif isinstance(manifold, Sphere):
            self.dim = manifold.ambient_dim
        else:
            raise TypeError(f"no ambient embedding for {manifold!r}")

    def embed(self, p):
        p = np.asarray(p, dtype=float)
        if isinstance(self.manifold, Sphere):
            return p.copy()
        return p[self._iu] * self._w

    embed_tangent = embed

    def unembed(self, z):
        z = np.asarray(z, dtype=float)
        if isinstance(self.manifold, Sphere):
            return z.copy()
        n = self.manifold.n
        A = np.zeros((n, n))
        A[self._iu] = z / self._w
        return A + np.triu(A, 1).T

    def project(self, z):
        """Nearest valid point: normalize (sphere) or clamp eigenvalues (SPD)."""
        A = self.unembed(z)
        if isinstance(self.manifold, Sphere):
            return self.manifold.project(A)
        w, U = np.linalg.eigh(0.5 * (A + A.T))
        A = (U * np.maximum(w, SPD_CLAMP)) @ U.T
        return 0.5 * (A + A.T)


class _IndependentGP:
    """One zero-mean GP per output column, optionally after centering."""

    def __init__(self, center, theta, amplitude, noise_var, optimize, n_restarts, max_iter,
                 noise_floor, random_state):
        self.center = center
        self.theta = theta
        self.amplitude = amplitude
        self.noise_var = noise_var
        self.optimize = optimize
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.noise_floor = noise_floor
        self.random_state = random_state

    def fit(self, X, Z):
        self.X = X
        self.offset = Z.mean(0) if self.center else np.zeros(Z.shape[1])
        Zc = Z - self.offset
        self.covs, self.alphas = [], []
        if not self.optimize and self.theta is None:
            raise ValueError("theta is required when optimize=False")
        for k in range(Z.shape[1]):
            z = Zc[:, k]
            if not self.optimize:
                cov = CovarianceModel(
                    KernelSpec("diag_rbf", [self.theta], [1.0 if self.amplitude is None else self.amplitude]),
                    None, 0.0 if self.noise_var is None else self.noise_var)
            elif np.max(np.abs(z)) <= 1e-14 * max(1.0, np.max(np.abs(Z[:, k]))):
                cov = None
            else:
                init = None
                if any(v is not None for v in (self.theta, self.amplitude, self.noise_var)):
                    init = CovarianceModel(
                        KernelSpec("diag_rbf", [self.theta or np.median(np.diff(np.sort(X[:, 0]))) or 1.0],
                                   [self.amplitude or max(float(np.var(z)), 1e-12)]),
                        None, self.noise_var if self.noise_var is not None else 0.1 * float(np.var(z)))
                cov, _ = fit_hyperparameters(
                    X, z[:, None], "diag_rbf", init=init, fit_amplitude=True,
                    n_restarts=self.n_restarts, max_iter=self.max_iter,
                    noise_floor=self.noise_floor, random_state=self.random_state + k)
            self.covs.append(cov)
            if cov is None:
                self.alphas.append(None)
                continue
            K = kernel_matrix(cov.kernel, X)[0]
            K[np.diag_indices_from(K)] += cov.noise_var
            L = robust_cholesky(K)
            self.alphas.append(cho_solve((L, True), z))
        return self

    def predict(self, Xs):
        out = np.tile(self.offset, (len(Xs), 1))
        for k, (cov, alpha) in enumerate(zip(self.covs, self.alphas)):
            if cov is not None:
                out[:, k] += kernel_matrix(cov.kernel, Xs, self.X)[0] @ alpha
        return out


class _AmbientBase(BaseEstimator):
    def _gp(self, center):
        return _IndependentGP(center, self.theta, self.amplitude, self.noise_var, self.optimize,
                              self.n_restarts, self.max_iter, self.noise_floor, self.random_state)

    def score(self, X, Y, t=None):
        """Negative root-mean-square geodesic error."""
        check_is_fitted(self, "gp_")
        return -rmsge(self.manifold_, self.predict(X, t), Y)


class MGPR(_AmbientBase):
    """Vector-valued GP on ambient response coordinates, projected back.

    Parameters
    ----------
    manifold : Sphere or SPD, optional
    theta, amplitude, noise_var : float, optional
        Initial (or fixed, with ``optimize=False``) per-column hyperparameters.
    optimize : bool, default=True
    n_restarts : int, default=3
    max_iter : int, default=200
    noise_floor : float, default=1e-10
    random_state : int, default=0
    """

    label = "mgpr"

    def __init__(self, manifold=None, theta=None, amplitude=None, noise_var=None, optimize=True,
                 n_restarts=3, max_iter=200, noise_floor=1e-10, random_state=0):
        self.manifold = manifold
        self.theta = theta
        self.amplitude = amplitude
        self.noise_var = noise_var
        self.optimize = optimize
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.noise_floor = noise_floor
        self.random_state = random_state

    def fit(self, X, Y, t=None):
        manifold = self.manifold if self.manifold is not None else infer_manifold(Y)
        Y = check_points(manifold, Y)
        X = check_inputs(X, len(Y))
        self.manifold_ = manifold
        self.embedding_ = AmbientEmbedding(manifold)
        Z = np.array([self.embedding_.embed(y) for y in Y])
        self.gp_ = self._gp(center=True).fit(X, Z)
        return self

    def predict(self, X, t=None):
        check_is_fitted(self, "gp_")
        Z = self.gp_.predict(check_inputs(X))
        return np.array([self.embedding_.project(z) for z in Z])


class WrappedGPR(_AmbientBase):
    """Log residuals around the basepoint curve, modelled in ambient coordinates.

    No parallel transport is applied: residual vectors from different tangent
    spaces are treated as living in one vector space. The prediction is
    projected onto the tangent space at ``mu(t*)`` and mapped with ``Exp``.

    Parameters
    ----------
    manifold : Sphere or SPD, optional
    bpf : {'geodesic', 'mean'} or curve, default='geodesic'
    theta, amplitude, noise_var, optimize, n_restarts, max_iter, noise_floor, random_state
        As for :class:`MGPR`.
    """

    label = "wgpr-approx"

    def __init__(self, manifold=None, bpf="geodesic", theta=None, amplitude=None, noise_var=None,
                 optimize=True, n_restarts=3, max_iter=200, noise_floor=1e-10, random_state=0):
        self.manifold = manifold
        self.bpf = bpf
        self.theta = theta
        self.amplitude = amplitude
        self.noise_var = noise_var
        self.optimize = optimize
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.noise_floor = noise_floor
        self.random_state = random_state

    def fit(self, X, Y, t=None):
        manifold = self.manifold if self.manifold is not None else infer_manifold(Y)
        Y = check_points(manifold, Y)
        X = check_inputs(X, len(Y))
        needs_t = not (isinstance(self.bpf, str) and self.bpf == "mean")
        t = check_index(t, X, required=needs_t)
        self.manifold_ = manifold
        self.embedding_ = AmbientEmbedding(manifold)
        self.bpf_ = resolve_bpf(self.bpf, manifold, t, Y)
        Z = np.array([self.embedding_.embed_tangent(manifold.log(self.bpf_.point(ti), y))
                      for ti, y in zip(t, Y)])
        self.gp_ = self._gp(center=False).fit(X, Z)
        return self

    def predict(self, X, t=None):
        check_is_fitted(self, "gp_")
        X = check_inputs(X)
        if t is None and X.shape[1] != 1:
            t = np.full(len(X), self.bpf_.reference_t)
        t = check_index(t, X)
        Z = self.gp_.predict(X)
        m = self.manifold_
        out = []
        for ti, z in zip(t, Z):
            mu = self.bpf_.point(ti)
            v = m.to_tangent(mu, self.embedding_.unembed(z))
            out.append(m.exp(mu, v))
        return np.array(out)
