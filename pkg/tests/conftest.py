import sys
import warnings

import numpy as np
import pytest
from scipy.stats import special_ortho_group

from igpr.manifolds import SPD, Sphere

MANIFOLDS = {
    "S2": Sphere(2),
    "S4": Sphere(4),
    "SPD2": SPD(2),
    "SPD3": SPD(3),
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240810)


@pytest.fixture(params=sorted(MANIFOLDS))
def manifold(request):
    return MANIFOLDS[request.param]


def random_pair(m, rng, max_sphere_dist=np.pi - 0.1):
    """Two random points, non-antipodal with margin on the sphere."""
    p = m.random_point(rng)
    while True:
        q = m.random_point(rng)
        if not isinstance(m, Sphere) or m.dist(p, q) < max_sphere_dist:
            return p, q


def random_orthogonal(D, rng):
    if D == 1:
        return np.array([[rng.choice([-1.0, 1.0])]])
    return special_ortho_group.rvs(D, random_state=rng)


def schild_ladder(m, p, q, v, steps=1000, eps=1e-6):
    """Parallel transport of ``v`` from ``p`` to ``q`` by Schild's ladder.

    Uses only Exp/Log; the rung size ``eps * v`` keeps the construction in
    its first-order regime.
    """
    xs = [m.geodesic(p, q, k / steps) for k in range(steps + 1)]
    w = np.asarray(v, dtype=float) * eps
    for x0, x1 in zip(xs[:-1], xs[1:]):
        a = m.exp(x0, w)
        mid = m.geodesic(a, x1, 0.5)
        b = m.exp(x0, 2.0 * m.log(x0, mid))
        w = m.log(x1, b)
    return w / eps


@pytest.fixture(autouse=True)
def _quiet_conditioning():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
