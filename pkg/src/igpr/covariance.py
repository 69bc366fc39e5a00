"""Scalar kernels, coregionalization and stacked covariance assembly.

Stacking convention used everywhere in igpr: a response vector for n samples
with D tangent coordinates is sample-major with the coordinate index running
fastest, i.e. entry ``i * D + d``. Under this ordering the coregionalized
training covariance is ``kron(K, B)``.
"""

from dataclasses import dataclass, replace

import numpy as np

COREG_JITTER = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    """Squared-exponential kernel ``amplitude * exp(-||x - x'||^2 / theta)``.

    ``family='rbf'`` has scalar ``theta`` and ``amplitude``; ``family='diag_rbf'``
    carries one ``theta`` and one ``amplitude`` per output coordinate.
    """

    family: str = "rbf"
    theta: np.ndarray = 1.0
    amplitude: np.ndarray = 1.0

    def __post_init__(self):
        if self.family not in ("rbf", "diag_rbf"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        amp = np.atleast_1d(np.asarray(self.amplitude, dtype=float))
        if self.family == "rbf":
            if theta.size != 1 or amp.size != 1:
                raise ValueError("rbf kernel takes a scalar theta and amplitude")
        else:
            if amp.size == 1:
                amp = np.full(theta.size, amp[0])
            if amp.size != theta.size:
                raise ValueError("diag_rbf needs one amplitude per theta")
        if np.any(theta <= 0) or np.any(amp <= 0):
            raise ValueError("kernel parameters must be positive")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "amplitude", amp)

    @property
    def n_outputs(self):
        return self.theta.size if self.family == "diag_rbf" else None


def _sqdist(X1, X2):
    X1 = np.atleast_2d(X1)
    X2 = np.atleast_2d(X2)
    d = np.sum(X1**2, 1)[:, None] + np.sum(X2**2, 1)[None, :] - 2.0 * X1 @ X2.T
    return np.maximum(d, 0.0)


def kernel_eval(spec, x1, x2):
    """Kernel value between two input vectors.

    Returns a float for ``rbf`` and a length-D array for ``diag_rbf``.
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x1.shape != x2.shape:
        raise ValueError(f"input dimension mismatch: {x1.shape} vs {x2.shape}")
    r2 = float(np.sum((x1 - x2) ** 2))
    k = spec.amplitude * np.exp(-r2 / spec.theta)
    return float(k[0]) if spec.family == "rbf" else k


def kernel_matrix(spec, X1, X2=None):
    """Gram matrices: shape (n1, n2) for rbf, (D, n1, n2) for diag_rbf."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = X1 if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != X2.shape[1]:
        raise ValueError("input dimension mismatch")
    r2 = _sqdist(X1, X2)
    if X2 is X1:
        np.fill_diagonal(r2, 0.0)
    if spec.family == "rbf":
        return spec.amplitude[0] * np.exp(-r2 / spec.theta[0])
    return spec.amplitude[:, None, None] * np.exp(-r2[None] / spec.theta[:, None, None])


@dataclass(frozen=True)
class Coregionalization:
    """PSD coregionalization matrix ``B = L L^T + jitter * I``."""

    L: np.ndarray

    def __post_init__(self):
        L = np.tril(np.atleast_2d(np.asarray(self.L, dtype=float)))
        if L.shape[0] != L.shape[1]:
            raise ValueError("Cholesky factor must be square")
        object.__setattr__(self, "L", L)

    @property
    def dim(self):
        return self.L.shape[0]

    @property
    def B(self):
        return self.L @ self.L.T + COREG_JITTER * np.eye(self.dim)

    @classmethod
    def from_matrix(cls, B):
        B = 0.5 * (np.asarray(B, dtype=float) + np.asarray(B, dtype=float).T)
        D = B.shape[0]
        eps = 0.0
        for _ in range(12):
            try:
                return cls(np.linalg.cholesky(B + eps * np.eye(D)))
            except np.linalg.LinAlgError:
                eps = max(10 * eps, 1e-12 * max(1.0, np.trace(B) / D))
        raise ValueError("coregionalization matrix is not positive semi-definite")

    @classmethod
    def identity(cls, D, scale=1.0):
        return cls(np.sqrt(scale) * np.eye(D))

    def to_params(self):
        """Unconstrained vector: log of the diagonal, then strict lower part."""
        D = self.dim
        il = np.tril_indices(D, -1)
        diag = np.maximum(np.abs(np.diag(self.L)), 1e-150)
        return np.concatenate([np.log(diag), self.L[il]])

    @classmethod
    def from_params(cls, params, D):
        params = np.asarray(params, dtype=float)
        L = np.diag(np.exp(params[:D]))
        L[np.tril_indices(D, -1)] = params[D:]
        return cls(L)


@dataclass(frozen=True)
class CovarianceModel:
    """Matrix-valued covariance of tangent coordinates plus isotropic noise.

    The block for inputs ``(x, x')`` is ``k(x, x') * B`` for ``rbf`` and
    ``diag(a_d k_d(x, x'))`` for ``diag_rbf``. If ``rotation`` (orthogonal
    O) is set, blocks are expressed in a rotated frame: ``O^T block O``.
    """

    kernel: KernelSpec
    coreg: Coregionalization = None
    noise_var: float = 0.0
    rotation: np.ndarray = None

    def __post_init__(self):
        if self.noise_var < 0:
            raise ValueError("noise variance must be non-negative")
        if self.kernel.family == "rbf" and self.coreg is None:
            raise ValueError("rbf covariance needs a coregionalization matrix")
        if self.kernel.family == "diag_rbf" and self.coreg is not None:
            raise ValueError("diag_rbf covariance has no coregionalization matrix")
        if self.rotation is not None:
            O = np.asarray(self.rotation, dtype=float)
            if O.shape != (self.dim, self.dim) or not np.allclose(O @ O.T, np.eye(self.dim), atol=1e-8):
                raise ValueError("rotation must be an orthogonal D x D matrix")
            object.__setattr__(self, "rotation", O)

    @property
    def dim(self):
        if self.kernel.family == "rbf":
            return self.coreg.dim
        return self.kernel.theta.size

    def with_rotation(self, O):
        """Same covariance expressed in a frame rotated by ``O``."""
        O = np.asarray(O, dtype=float)
        R = O if self.rotation is None else self.rotation @ O
        return replace(self, rotation=R)

    def block(self, x1, x2):
        """D x D covariance block between two inputs (no noise)."""
        if self.kernel.family == "rbf":
            blk = kernel_eval(self.kernel, x1, x2) * self.coreg.B
        else:
            blk = np.diag(kernel_eval(self.kernel, x1, x2))
        if self.rotation is not None:
            blk = self.rotation.T @ blk @ self.rotation
        return blk


def _stack_blocks(model, X1, X2):
    D = model.dim
    n1, n2 = len(X1), len(X2)
    if model.kernel.family == "rbf":
        full = np.kron(kernel_matrix(model.kernel, X1, X2), model.coreg.B)
    else:
        Ks = kernel_matrix(model.kernel, X1, X2)  # (D, n1, n2)
        full4 = np.zeros((n1, D, n2, D))
        for d in range(D):
            full4[:, d, :, d] = Ks[d]
        full = full4.reshape(n1 * D, n2 * D)
    if model.rotation is not None:
        O = model.rotation
        f4 = full.reshape(n1, D, n2, D)
        full = np.einsum("da,idje,eb->iajb", O, f4, O).reshape(n1 * D, n2 * D)
    return full


def _as_inputs(X):
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def assemble_train_cov(model, X):
    """Training covariance ``kron(K, B) + noise_var * I`` of shape (nD, nD)."""
    X = _as_inputs(X)
    full = _stack_blocks(model, X, X)
    full = 0.5 * (full + full.T)
    full[np.diag_indices_from(full)] += model.noise_var
    return full


def assemble_cross_cov(model, X, Xstar):
    """Cross covariance between training inputs and test input(s).

    ``Xstar`` of shape (Q,) gives an (nD, D) matrix; shape (m, Q) gives (nD, mD).
    """
    X = _as_inputs(X)
    Xs = np.asarray(Xstar, dtype=float)
    single = Xs.ndim == 1 and X.shape[1] == Xs.size
    Xs = Xs[None, :] if single else _as_inputs(Xs)
    return _stack_blocks(model, X, Xs)


def assemble_test_cov(model, xstar):
    """D x D prior covariance at a test input (noise excluded)."""
    return model.block(xstar, xstar)


def transport_covariance(cov, frame_p, q, frame_q=None, tol=1e-8):
    """Move a coordinate covariance from the tangent space at p to q.

    Parameters
    ----------
    cov : ndarray, shape (D, D)
        Covariance of coordinates in ``frame_p``.
    frame_p : Frame
        Frame at p.
    q : ndarray
        Target point.
    frame_q : Frame, optional
        Frame at q in which to express the result. Defaults to the transported
        frame, in which the coordinates are unchanged.

    Returns
    -------
    ndarray, shape (D, D)
    """
    cov = np.asarray(cov, dtype=float)
    if np.max(np.abs(cov - cov.T)) > tol * max(1.0, np.abs(cov).max()):
        raise ValueError("covariance is not symmetric")
    if np.linalg.eigvalsh(0.5 * (cov + cov.T))[0] < -tol:
        raise ValueError("covariance is not positive semi-definite")
    moved = frame_p.transport(q)
    if frame_q is None:
        return cov.copy()
    M = moved.change_matrix(frame_q)
    return M @ cov @ M.T
