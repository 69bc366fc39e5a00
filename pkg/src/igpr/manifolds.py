"""Riemannian primitives for the unit sphere and the SPD cone.

Points and tangent vectors are plain ``numpy`` arrays. A manifold object
carries the geometry (exponential/logarithm maps, distance, parallel
transport, inner product) and a :class:`Frame` holds an ordered basis of one
tangent space for coordinate representations.

Both manifolds are treated as having infinite injectivity radius; the only
cut-locus case handled is the antipodal pair on the sphere, which raises
:class:`~igpr.exceptions.SingularityError`.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError, InvalidPointError, SingularityError

POINT_TOL = 1e-10
TANGENT_TOL = 1e-9
PD_EIG_FLOOR = 1e-12
ANTIPODAL_TOL = 1e-10


# ---------------------------------------------------------------------------
# symmetric matrix functions
# ---------------------------------------------------------------------------


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def sym_funcm(A, func):
    """Apply a scalar function to a symmetric matrix through its eigenvalues.

    Parameters
    ----------
    A : ndarray, shape (n, n)
        Symmetric matrix.
    func : callable
        Vectorized scalar function applied to the eigenvalues.

    Returns
    -------
    ndarray, shape (n, n)
        ``U diag(func(w)) U^T`` where ``A = U diag(w) U^T``.
    """
    w, U = np.linalg.eigh(_sym(A))
    return _sym((U * func(w)) @ U.T)


def _pd_eigh(P):
    w, U = np.linalg.eigh(_sym(P))
    if not np.all(np.isfinite(w)) or w[0] <= PD_EIG_FLOOR:
        raise InvalidPointError(
            f"matrix is not positive definite (smallest eigenvalue {w[0]:.3e})"
        )
    return w, U


def sqrtm(P):
    """Principal square root of an SPD matrix."""
    w, U = _pd_eigh(P)
    return _sym((U * np.sqrt(w)) @ U.T)


def invsqrtm(P):
    """Inverse principal square root of an SPD matrix."""
    w, U = _pd_eigh(P)
    return _sym((U / np.sqrt(w)) @ U.T)


def logm(P):
    """Principal logarithm of an SPD matrix."""
    w, U = _pd_eigh(P)
    return _sym((U * np.log(w)) @ U.T)


def expm(S):
    """Exponential of a symmetric matrix."""
    return sym_funcm(S, np.exp)


def _sqrt_and_invsqrt(P):
    w, U = _pd_eigh(P)
    s = np.sqrt(w)
    return _sym((U * s) @ U.T), _sym((U / s) @ U.T)


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Frame:
    """Ordered basis of the tangent space at ``base``.

    Coordinates are taken in the dual-basis sense: ``coords(v)`` returns the
    unique ``c`` with ``v = sum_k c[k] * basis[k]``. For an orthonormal frame
    this reduces to ``c[k] = <v, basis[k]>``.

    Attributes
    ----------
    manifold : Manifold
    base : ndarray
        Base point.
    basis : ndarray, shape (tangent_dim,) + point_shape
        Stacked basis vectors.
    """

    manifold: "Manifold"
    base: np.ndarray
    basis: np.ndarray
    gram: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        m = self.manifold
        if basis.shape != (m.tangent_dim,) + m.point_shape:
            raise ValueError(
                f"frame needs {m.tangent_dim} vectors of shape {m.point_shape}, "
                f"got array of shape {basis.shape}"
            )
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float))
        G = np.array([[m.inner(self.base, a, b) for b in basis] for a in basis])
        object.__setattr__(self, "gram", _sym(G))

    @property
    def dim(self):
        return self.basis.shape[0]

    def is_orthonormal(self, tol=1e-8):
        return bool(np.max(np.abs(self.gram - np.eye(self.dim))) <= tol)

    def coords(self, v):
        """Coordinates of tangent vector ``v`` (at ``base``) in this frame."""
        v = np.asarray(v, dtype=float)
        if v.shape != self.manifold.point_shape:
            raise ValueError(f"tangent vector shape {v.shape} does not match frame")
        b = np.array([self.manifold.inner(self.base, v, e) for e in self.basis])
        return np.linalg.solve(self.gram, b)

    def from_coords(self, c):
        """Tangent vector with coordinates ``c`` in this frame."""
        c = np.asarray(c, dtype=float)
        if c.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coordinates, got shape {c.shape}")
        return np.tensordot(c, self.basis, axes=1)

    def rotated(self, O):
        """Frame whose k-th vector is ``sum_j O[k, j] * basis[j]``.

        Coordinates transform as ``c_new = O @ c`` when ``O`` is orthogonal.
        """
        O = np.asarray(O, dtype=float)
        return Frame(self.manifold, self.base, np.tensordot(O, self.basis, axes=1))

    def transport(self, q):
        """Parallel transport every basis vector to ``q``."""
        return transport_frame(self, q)

    def change_matrix(self, other):
        """Matrix ``M`` with ``other.coords(v) == M @ self.coords(v)``."""
        return np.column_stack([other.coords(e) for e in self.basis])


def transport_frame(frame, q):
    """Transport ``frame`` along the minimizing geodesic to ``q``."""
    m = frame.manifold
    basis = np.array([m.transport(frame.base, q, e) for e in frame.basis])
    return Frame(m, q, basis)


# ---------------------------------------------------------------------------
# manifolds
# ---------------------------------------------------------------------------


class Manifold:
    """Shared behaviour of the supported manifolds."""

    kind = None
    injectivity_radius = np.inf

    def norm(self, p, v):
        return float(np.sqrt(max(self.inner(p, v, v), 0.0)))

    def zero(self, p):
        return np.zeros(self.point_shape)

    def frame_from_coords(self, p, coords):
        """Frame at ``p`` from a (tangent_dim, tangent_dim) coordinate matrix
        expressed in :meth:`default_frame`."""
        return self.default_frame(p).rotated(coords)

    def geodesic(self, p, q, s):
        """Point at fraction ``s`` along the minimizing geodesic from p to q."""
        return self.exp(p, s * self.log(p, q))

    def transport_along(self, p0, v0, t_from, t_to, w):
        """Transport ``w`` along the geodesic ``t -> Exp(p0, t * v0)``."""
        return self.transport(self.exp(p0, t_from * v0), self.exp(p0, t_to * v0), w)

    def mean(self, points, max_iter=200, tol=1e-10):
        """Intrinsic (Frechet) mean by iterated Log-average-Exp.

        Parameters
        ----------
        points : sequence of ndarray
        max_iter : int, default=200
        tol : float, default=1e-10
            Stop once the Riemannian norm of the mean Log vector is below tol.

        Raises
        ------
        ConvergenceError
            If the iteration limit is reached.
        """
        pts = [np.asarray(y, dtype=float) for y in points]
        if not pts:
            raise ValueError("intrinsic mean of an empty set")
        m = self._mean_init(pts)
        for _ in range(max_iter):
            g = sum(self.log(m, y) for y in pts) / len(pts)
            if self.norm(m, g) <= tol:
                return m
            m = self.exp(m, g)
        raise ConvergenceError(f"intrinsic mean did not converge in {max_iter} iterations")

    def _mean_init(self, pts):
        return pts[0]

    def descriptor(self):
        return {
            "kind": self.kind,
            "ambient_dim": self.ambient_dim,
            "tangent_dim": self.tangent_dim,
            "injectivity_radius": "inf",
        }

    def __eq__(self, other):
        return type(self) is type(other) and self.descriptor() == other.descriptor()

    def __hash__(self):
        return hash((type(self), self.ambient_dim))


class Sphere(Manifold):
    """Unit sphere S^dim embedded in R^(dim+1) with the round metric.

    Parameters
    ----------
    dim : int
        Intrinsic dimension D; points are unit vectors in R^(D+1).
    """

    kind = "sphere"

    def __init__(self, dim=2):
        if dim < 1:
            raise ValueError("sphere dimension must be positive")
        self.dim = int(dim)
        self.ambient_dim = self.dim + 1
        self.tangent_dim = self.dim
        self.point_shape = (self.ambient_dim,)

    def __repr__(self):
        return f"Sphere(dim={self.dim})"

    def check_point(self, p, tol=POINT_TOL):
        p = np.asarray(p, dtype=float)
        if p.shape != self.point_shape:
            raise InvalidPointError(f"expected shape {self.point_shape}, got {p.shape}")
        if not np.all(np.isfinite(p)) or abs(np.linalg.norm(p) - 1.0) > tol:
            raise InvalidPointError(f"not a unit vector: norm {np.linalg.norm(p)!r}")
        return p

    def check_tangent(self, p, v, tol=TANGENT_TOL):
        v = np.asarray(v, dtype=float)
        if v.shape != self.point_shape:
            raise InvalidPointError(f"expected shape {self.point_shape}, got {v.shape}")
        if abs(np.dot(p, v)) > tol:
            raise InvalidPointError(f"vector is not tangent at p: <p, v> = {np.dot(p, v):.3e}")
        return v

    def project(self, x):
        n = np.linalg.norm(x)
        if n == 0:
            raise InvalidPointError("cannot project the zero vector onto the sphere")
        return x / n

    def to_tangent(self, p, w):
        return w - np.dot(p, w) * p

    def inner(self, p, u, v):
        return float(np.dot(u, v))

    def _shape_check(self, *arrays):
        for a in arrays:
            if np.shape(a) != self.point_shape:
                raise ValueError(f"dimension mismatch: expected {self.point_shape}, got {np.shape(a)}")

    def exp(self, p, v):
        self._shape_check(p, v)
        n = np.linalg.norm(v)
        if n == 0.0:
            return np.array(p, dtype=float)
        q = np.cos(n) * p + np.sin(n) * (v / n)
        return q / np.linalg.norm(q)

    def log(self, p, q):
        self._shape_check(p, q)
        c = float(np.dot(p, q))
        if c <= -1.0 + ANTIPODAL_TOL:
            raise SingularityError("Log is undefined for antipodal sphere points")
        u = q - c * p
        s = np.linalg.norm(u)
        if s == 0.0:
            return np.zeros_like(u)
        theta = np.arctan2(s, c)
        return theta * u / s

    def dist(self, p, q):
        self._shape_check(p, q)
        # chord formula is accurate near 0 and pi; equals arccos(<p, q>)
        chord = np.linalg.norm(np.asarray(p) - np.asarray(q))
        return float(2.0 * np.arcsin(min(chord / 2.0, 1.0)))

    def transport(self, p, q, v):
        self._shape_check(p, q, v)
        c = float(np.dot(p, q))
        if c <= -1.0 + ANTIPODAL_TOL:
            raise SingularityError("parallel transport between antipodal points is not unique")
        return v - (np.dot(v, q) / (1.0 + c)) * (p + q)

    def exp_velocity(self, p, v, s):
        """Velocity of ``t -> Exp(p, t v)`` at ``t = s``."""
        n = np.linalg.norm(v)
        if n == 0.0:
            return np.zeros_like(np.asarray(v, dtype=float))
        return -n * np.sin(n * s) * p + np.cos(n * s) * v

    def transport_along(self, p0, v0, t_from, t_to, w):
        s = np.linalg.norm(v0)
        if s == 0.0 or t_from == t_to:
            return np.array(w, dtype=float)
        u = v0 / s
        T1 = -np.sin(s * t_from) * p0 + np.cos(s * t_from) * u
        T2 = -np.sin(s * t_to) * p0 + np.cos(s * t_to) * u
        a = np.dot(w, T1)
        return (w - a * T1) + a * T2

    def default_frame(self, p):
        """Orthonormal frame at ``p`` from the Householder map e_0 -> p."""
        p = np.asarray(p, dtype=float)
        e0 = np.zeros(self.ambient_dim)
        e0[0] = 1.0
        v = e0 - p
        nv = np.dot(v, v)
        H = np.eye(self.ambient_dim)
        if nv > 1e-30:
            H -= 2.0 * np.outer(v, v) / nv
        return Frame(self, p, H[:, 1:].T.copy())

    def random_point(self, rng):
        x = rng.standard_normal(self.ambient_dim)
        return x / np.linalg.norm(x)

    def random_tangent(self, p, rng, scale=1.0):
        return scale * self.to_tangent(p, rng.standard_normal(self.ambient_dim))

    def _mean_init(self, pts):
        s = np.sum(pts, axis=0)
        n = np.linalg.norm(s)
        return s / n if n > 1e-8 else pts[0]


class SPD(Manifold):
    """Symmetric positive-definite n x n matrices, affine-invariant metric.

    Parameters
    ----------
    n : int
        Matrix side length.
    transport : {'sqrt', 'levi_civita'}, default='sqrt'
        ``'sqrt'`` moves V from P to Q as ``R V R^T`` with
        ``R = Q^{1/2} P^{-1/2}``; ``'levi_civita'`` uses ``E = (Q P^{-1})^{1/2}``.
        Both are isometries of the affine-invariant metric.
    """

    kind = "spd"

    def __init__(self, n=2, transport="sqrt"):
        if n < 1:
            raise ValueError("matrix size must be positive")
        if transport not in ("sqrt", "levi_civita"):
            raise ValueError(f"unknown transport {transport!r}")
        self.n = int(n)
        self.transport_kind = transport
        self.ambient_dim = self.n
        self.tangent_dim = self.n * (self.n + 1) // 2
        self.point_shape = (self.n, self.n)
        self._iu = np.triu_indices(self.n)

    def __repr__(self):
        return f"SPD(n={self.n}, transport={self.transport_kind!r})"

    def descriptor(self):
        d = super().descriptor()
        d["transport"] = self.transport_kind
        return d

    def check_point(self, P, tol=POINT_TOL):
        P = np.asarray(P, dtype=float)
        if P.shape != self.point_shape:
            raise InvalidPointError(f"expected shape {self.point_shape}, got {P.shape}")
        if not np.all(np.isfinite(P)):
            raise InvalidPointError("matrix has non-finite entries")
        if np.linalg.norm(P - P.T) > tol * max(1.0, np.linalg.norm(P)):
            raise InvalidPointError("matrix is not symmetric")
        _pd_eigh(P)
        return _sym(P)

    def check_tangent(self, P, V, tol=POINT_TOL):
        V = np.asarray(V, dtype=float)
        if V.shape != self.point_shape:
            raise InvalidPointError(f"expected shape {self.point_shape}, got {V.shape}")
        if np.linalg.norm(V - V.T) > tol * max(1.0, np.linalg.norm(V)):
            raise InvalidPointError("tangent matrix is not symmetric")
        return _sym(V)

    def to_tangent(self, P, W):
        return _sym(W)

    def _shape_check(self, *arrays):
        for a in arrays:
            if np.shape(a) != self.point_shape:
                raise ValueError(f"dimension mismatch: expected {self.point_shape}, got {np.shape(a)}")

    def inner(self, P, U, V):
        Pinv = np.linalg.inv(P)
        return float(np.trace(Pinv @ U @ Pinv @ V))

    def exp(self, P, V):
        self._shape_check(P, V)
        s, si = _sqrt_and_invsqrt(P)
        return _sym(s @ expm(si @ V @ si) @ s)

    def log(self, P, Q):
        self._shape_check(P, Q)
        s, si = _sqrt_and_invsqrt(P)
        return _sym(s @ logm(si @ Q @ si) @ s)

    def dist(self, P, Q):
        self._shape_check(P, Q)
        si = invsqrtm(P)
        w = np.linalg.eigvalsh(_sym(si @ Q @ si))
        if w[0] <= 0:
            raise InvalidPointError("matrix is not positive definite")
        return float(np.sqrt(np.sum(np.log(w) ** 2)))

    def exp_velocity(self, P, V, s):
        """Velocity of ``t -> Exp(P, t V)`` at ``t = s``."""
        r, ri = _sqrt_and_invsqrt(P)
        A = ri @ V @ ri
        return _sym(r @ A @ expm(s * A) @ r)

    def transport_matrix(self, P, Q):
        """Matrix R with Gamma_{P->Q}(V) = R V R^T for the configured transport."""
        if self.transport_kind == "sqrt":
            return sqrtm(Q) @ invsqrtm(P)
        s, si = _sqrt_and_invsqrt(P)
        return s @ sqrtm(si @ Q @ si) @ si

    def transport(self, P, Q, V):
        self._shape_check(P, Q, V)
        R = self.transport_matrix(P, Q)
        return _sym(R @ V @ R.T)

    def default_frame(self, P):
        """Orthonormal frame at P: the identity frame transported from I.

        At the identity the basis is ``E_ii`` and ``(E_ij + E_ji)/sqrt(2)``
        for ``i < j``, in row-major upper-triangular order.
        """
        return transport_frame(Frame(self, np.eye(self.n), self._identity_basis(np.sqrt(0.5))), P)

    def elementary_frame(self, P):
        """Non-orthonormal frame ``E_ii``, ``E_ij + E_ji`` transported from I.

        Coordinates in this frame at I are the upper-triangular entries.
        """
        return transport_frame(Frame(self, np.eye(self.n), self._identity_basis(1.0)), P)

    def _identity_basis(self, off):
        basis = []
        for i, j in zip(*self._iu):
            E = np.zeros(self.point_shape)
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = off
            basis.append(E)
        return np.array(basis)

    def random_point(self, rng, scale=1.0):
        A = rng.standard_normal(self.point_shape)
        return expm(scale * _sym(A))

    def random_tangent(self, P, rng, scale=1.0):
        s = sqrtm(P)
        return _sym(s @ (scale * _sym(rng.standard_normal(self.point_shape))) @ s)

    def _mean_init(self, pts):
        return expm(sum(logm(y) for y in pts) / len(pts))


def manifold_from_descriptor(desc):
    """Rebuild a manifold from :meth:`Manifold.descriptor` output."""
    if desc["kind"] == "sphere":
        return Sphere(int(desc["ambient_dim"]) - 1)
    if desc["kind"] == "spd":
        return SPD(int(desc["ambient_dim"]), transport=desc.get("transport", "sqrt"))
    raise ValueError(f"unknown manifold kind {desc['kind']!r}")


def parse_manifold(name):
    """Parse ``'sphere:2'``, ``'spd:3'`` or ``'spd:3:levi_civita'``."""
    parts = str(name).lower().split(":")
    if parts[0] in ("sphere", "s") and len(parts) == 2:
        return Sphere(int(parts[1]))
    if parts[0] == "spd" and len(parts) in (2, 3):
        return SPD(int(parts[1]), transport=parts[2] if len(parts) == 3 else "sqrt")
    raise ValueError(f"cannot parse manifold {name!r}; use e.g. 'sphere:2' or 'spd:3'")
