"""Simulation scenarios on 2x2 SPD matrices and train/test splits."""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .bpf import GeodesicCurve
from .covariance import CovarianceModel, KernelSpec, kernel_matrix
from .manifolds import SPD

THETA_SETS = ((0.1, 0.3, 0.5), (0.3, 0.6, 0.8), (0.5, 0.8, 0.8))
S1_ENDPOINT = ((2.4360, -2.6465), (-2.6465, 8.4208))
S2_NOISE_PRESETS = {"default": (0.01, 0.03, 0.05), "low": (0.001, 0.003, 0.005)}
SCHEMES = ("random", "sort")
SORT_TEST_SIZE = 5


@dataclass
class Dataset:
    """Inputs ``X`` (n, Q), responses ``Y`` and curve index ``t`` (n,)."""

    manifold: object
    X: np.ndarray
    Y: np.ndarray
    t: np.ndarray
    curve: object = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.Y = np.asarray(self.Y, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        if not len(self.X) == len(self.Y) == len(self.t):
            raise ValueError("X, Y and t must have the same number of samples")

    def __len__(self):
        return len(self.Y)

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.manifold, self.X[idx], self.Y[idx], self.t[idx], self.curve)


@dataclass
class ScenarioSpec:
    """Configuration of a simulation scenario.

    Parameters
    ----------
    name : {'s1', 's2'}
        ``s1``: residual coordinates drawn from independent GPs with length
        parameters ``theta``. ``s2``: fixed coordinate functions plus noise.
    n : int
        Total number of samples, equally spaced on ``[0, 1]``.
    scheme : {'random', 'sort'}
        ``random`` trains on ``ceil(0.8 n)`` random samples; ``sort`` holds
        out the last five.
    theta : tuple of float
        S1 kernel parameters per coordinate.
    amplitude : float
        S1 kernel amplitude.
    noise_sd : tuple of float or str, optional
        Observation noise standard deviations per coordinate. For S2 a preset
        name (``'default'`` or ``'low'``) is accepted; default ``'default'``. S1
        defaults to no noise.
    reps, seed : int
    endpoint : 2x2 nested tuple
        ``mu(1)``; ``mu(0)`` is the identity.
    """

    name: str = "s1"
    n: int = 100
    scheme: str = "random"
    theta: tuple = THETA_SETS[0]
    amplitude: float = 1.0
    noise_sd: object = None
    reps: int = 1
    seed: int = 0
    endpoint: tuple = field(default=S1_ENDPOINT)

    def __post_init__(self):
        self.name = self.name.lower()
        self.scheme = self.scheme.lower()
        if self.name not in ("s1", "s2"):
            raise ValueError(f"unknown scenario {self.name!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; use 'random' or 'sort'")
        if self.n < 10:
            raise ValueError("scenarios need n >= 10")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        self.theta = tuple(float(v) for v in np.broadcast_to(np.asarray(self.theta, dtype=float), (3,)))
        if min(self.theta) <= 0 or self.amplitude < 0:
            raise ValueError("theta must be positive and amplitude nonnegative")
        self.endpoint = tuple(tuple(float(v) for v in row) for row in np.asarray(self.endpoint))

    @property
    def noise(self):
        sd = self.noise_sd
        if sd is None:
            sd = "default" if self.name == "s2" else 0.0
        if isinstance(sd, str):
            if sd not in S2_NOISE_PRESETS:
                raise ValueError(f"unknown noise preset {sd!r}")
            sd = S2_NOISE_PRESETS[sd]
        return np.broadcast_to(np.asarray(sd, dtype=float), (3,)).copy()

    def to_dict(self):
        d = asdict(self)
        d["theta"] = list(self.theta)
        d["endpoint"] = [list(r) for r in self.endpoint]
        if isinstance(self.noise_sd, tuple):
            d["noise_sd"] = list(self.noise_sd)
        return d


def scenario_manifold():
    return SPD(2)


def scenario_curve(spec):
    """Geodesic from the identity through ``endpoint`` at ``t = 1``."""
    m = scenario_manifold()
    I = np.eye(2)
    return GeodesicCurve(m, I, m.log(I, np.array(spec.endpoint)))


def scenario_frame(spec=None):
    """Frame used to generate coordinates: the unnormalized identity frame at I."""
    return scenario_manifold().elementary_frame(np.eye(2))


def s2_means(t):
    """Noise-free S2 coordinate functions, shape (len(t), 3)."""
    t = np.asarray(t, dtype=float)
    return np.column_stack([
        1.0 + 0.05 * t + np.sin(t) / (t + 0.001),
        1.0 + np.cos(t),
        1.0 + np.sin(t),
    ])


def rep_rngs(seed, rep):
    """Independent generators for data and split of one repetition."""
    data_ss, split_ss = np.random.SeedSequence([int(seed), int(rep)]).spawn(2)
    return np.random.default_rng(data_ss), np.random.default_rng(split_ss)


def scenario_coords(spec, t, rng):
    """Residual coordinates in the generating frame, shape (n, 3)."""
    n = len(t)
    noise = spec.noise
    if spec.name == "s1":
        cov = CovarianceModel(KernelSpec("diag_rbf", spec.theta, 1.0))
        C = np.zeros((n, 3))
        if spec.amplitude > 0:
            for d, K in enumerate(kernel_matrix(cov.kernel, t[:, None])):
                w, U = np.linalg.eigh(K)
                C[:, d] = np.sqrt(spec.amplitude) * (U * np.sqrt(np.clip(w, 0, None))) @ rng.standard_normal(n)
    else:
        C = s2_means(t)
    return C + rng.standard_normal((n, 3)) * noise


def generate_scenario(spec, rep=0):
    """Dataset for repetition ``rep``; deterministic given ``(spec.seed, rep)``."""
    rng, _ = rep_rngs(spec.seed, rep)
    m = scenario_manifold()
    curve = scenario_curve(spec)
    frame = scenario_frame(spec)
    t = np.linspace(0.0, 1.0, spec.n)
    C = scenario_coords(spec, t, rng)
    Y = []
    for ti, c in zip(t, C):
        basis = np.array([curve.transport(0.0, ti, e) for e in frame.basis])
        Y.append(m.exp(curve.point(ti), np.tensordot(c, basis, axes=1)))
    return Dataset(m, t[:, None], np.array(Y), t, curve)


def split_indices(spec, t, rep=0):
    """Train and test indices for one repetition (both sorted)."""
    n = len(t)
    if spec.scheme == "random":
        _, rng = rep_rngs(spec.seed, rep)
        perm = rng.permutation(n)
        n_train = int(np.ceil(0.8 * n))
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])
    order = np.argsort(t, kind="stable")
    return np.sort(order[:-SORT_TEST_SIZE]), np.sort(order[-SORT_TEST_SIZE:])


def tensor_field(grid=20):
    """Smooth synthetic SPD(3) field on a ``grid x grid`` lattice.

    Eigenvectors rotate and log-eigenvalues vary over roughly four units, on
    length scales of a few grid cells. Returns grid indices (grid^2, 2) in
    row-major order and tensors (grid^2, 3, 3).
    """
    ij, tensors = [], []
    for i in range(grid):
        for j in range(grid):
            u, v = i / (grid - 1), j / (grid - 1)
            R = Rotation.from_rotvec([1.2 * np.sin(5 * u + 1), 1.5 * np.cos(4 * v), 1.5 * np.sin(3 * (u + v))])
            log_eig = [
                1.5 * np.cos(6 * u) + np.sin(5 * v),
                -1.0 + 1.5 * np.sin(4 * u * v + 2 * v),
                -2.0 + np.sin(7 * u) * np.cos(3 * v),
            ]
            Rm = R.as_matrix()
            P = (Rm * np.exp(log_eig)) @ Rm.T
            ij.append((i, j))
            tensors.append(0.5 * (P + P.T))
    return np.array(ij), np.array(tensors)


def evenly_spaced_split(n, fraction):
    """Train on ``round(fraction * n)`` evenly spaced positions of ``range(n)``; test on the rest."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    k = max(1, int(round(fraction * n)))
    train = np.unique(np.round(np.linspace(0, n - 1, k)).astype(int))
    return train, np.setdiff1d(np.arange(n), train)
