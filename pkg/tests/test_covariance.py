import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_orthogonal
from igpr.covariance import (
    Coregionalization,
    CovarianceModel,
    KernelSpec,
    assemble_cross_cov,
    assemble_test_cov,
    assemble_train_cov,
    kernel_eval,
    kernel_matrix,
    transport_covariance,
)
from igpr.manifolds import SPD, Sphere


def brute_force_cov(model, X1, X2, noise=False):
    """Element loop over ((i, d), (j, e)) pairs, sample-major ordering."""
    D = model.dim
    out = np.zeros((len(X1) * D, len(X2) * D))
    for i, x in enumerate(X1):
        for j, y in enumerate(X2):
            k = np.exp(-np.sum((x - y) ** 2) / model.kernel.theta)
            for d in range(D):
                for e in range(D):
                    if model.kernel.family == "rbf":
                        val = model.kernel.amplitude[0] * k[0] * model.coreg.B[d, e]
                    else:
                        val = model.kernel.amplitude[d] * k[d] if d == e else 0.0
                    out[i * D + d, j * D + e] = val
    if noise:
        out += model.noise_var * np.eye(len(out))
    return out


def test_kernel_eval_examples():
    assert kernel_eval(KernelSpec("rbf", 0.3), [0.2], [0.2]) == 1.0
    assert kernel_eval(KernelSpec("rbf", 1.0), [0.0], [1.0]) == pytest.approx(np.exp(-1), abs=1e-15)
    out = kernel_eval(KernelSpec("diag_rbf", [0.1, 0.3, 0.5]), [0.0], [0.5])
    np.testing.assert_allclose(out, np.exp([-2.5, -5 / 6, -0.5]), rtol=1e-14)


def test_kernel_bounds_symmetry_and_shift(rng):
    spec = KernelSpec("rbf", 0.7, 2.5)
    x, y = rng.normal(size=3), rng.normal(size=3)
    assert kernel_eval(spec, x, x) == pytest.approx(2.5)
    assert 0 < kernel_eval(spec, x, y) <= 2.5
    assert kernel_eval(spec, x, y) == kernel_eval(spec, y, x)
    c = rng.normal(size=3)
    assert kernel_eval(spec, x + c, y + c) == pytest.approx(kernel_eval(spec, x, y), rel=1e-12)


def test_kernel_rejects_bad_parameters():
    with pytest.raises(ValueError):
        KernelSpec("rbf", -1.0)
    with pytest.raises(ValueError):
        KernelSpec("diag_rbf", [0.1, 0.2], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        KernelSpec("matern", 1.0)
    with pytest.raises(ValueError):
        kernel_eval(KernelSpec("rbf", 1.0), [0.0, 1.0], [0.0])


def test_coregionalization_params_round_trip(rng):
    A = rng.normal(size=(4, 4))
    B = A @ A.T
    c = Coregionalization.from_matrix(B)
    np.testing.assert_allclose(c.B, B, atol=1e-9)
    c2 = Coregionalization.from_params(c.to_params(), 4)
    np.testing.assert_allclose(c2.B, c.B, atol=1e-12)


def test_coregionalization_singular_matrix_gets_jitter():
    v = np.array([1.0, 2.0, 3.0])
    c = Coregionalization.from_matrix(np.outer(v, v))
    assert np.min(np.linalg.eigvalsh(c.B)) > 0
    np.testing.assert_allclose(c.B, np.outer(v, v), atol=1e-6)


def test_train_cov_single_point():
    model = CovarianceModel(KernelSpec("diag_rbf", [0.2, 0.4], 3.0))
    np.testing.assert_allclose(assemble_train_cov(model, np.array([[0.3]])), 3.0 * np.eye(2))


def test_train_cov_two_points_analytic():
    model = CovarianceModel(KernelSpec("rbf", 1.0), Coregionalization.identity(2))
    C = assemble_train_cov(model, np.array([[0.0], [1.0]]))
    expected = np.block([[np.eye(2), np.exp(-1) * np.eye(2)], [np.exp(-1) * np.eye(2), np.eye(2)]])
    np.testing.assert_allclose(C, expected, atol=1e-9)


@pytest.mark.parametrize("family", ["rbf", "diag_rbf"])
def test_train_cov_matches_brute_force(rng, family):
    X = rng.normal(size=(3, 2))
    if family == "rbf":
        A = rng.normal(size=(3, 3))
        model = CovarianceModel(KernelSpec("rbf", 0.8, 1.7), Coregionalization.from_matrix(A @ A.T), 0.05)
    else:
        model = CovarianceModel(KernelSpec("diag_rbf", [0.2, 0.5, 1.1], [1.0, 0.3, 2.0]), None, 0.05)
    np.testing.assert_allclose(assemble_train_cov(model, X), brute_force_cov(model, X, X, noise=True), atol=1e-9)


def test_train_cov_is_kron(rng):
    X = rng.normal(size=(5, 1))
    A = rng.normal(size=(3, 3))
    model = CovarianceModel(KernelSpec("rbf", 0.5), Coregionalization.from_matrix(A @ A.T))
    K = kernel_matrix(model.kernel, X)
    np.testing.assert_allclose(assemble_train_cov(model, X), np.kron(K, model.coreg.B), atol=1e-12)


def test_cross_and_test_cov(rng):
    model = CovarianceModel(KernelSpec("rbf", 1.0, 2.0), Coregionalization.identity(2), 0.4)
    x = np.array([[0.3]])
    np.testing.assert_allclose(assemble_cross_cov(model, x, x[0]), 2.0 * np.eye(2), atol=1e-9)
    diag = CovarianceModel(KernelSpec("rbf", 1.0), Coregionalization.from_matrix(np.diag([1.0, 2.0, 3.0])))
    np.testing.assert_allclose(assemble_test_cov(diag, np.array([0.1])), np.diag([1.0, 2.0, 3.0]), atol=1e-9)
    X = rng.normal(size=(2, 1))
    xs = rng.normal(size=1)
    np.testing.assert_allclose(assemble_cross_cov(model, X, xs), brute_force_cov(model, X, xs[None]), atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_assembled_cov_admits_cholesky(n, D, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    A = rng.normal(size=(D, D))
    model = CovarianceModel(KernelSpec("rbf", rng.uniform(0.1, 3)), Coregionalization.from_matrix(A @ A.T), 1e-10)
    C = assemble_train_cov(model, X)
    np.testing.assert_allclose(C, C.T)
    assert np.min(np.linalg.eigvalsh(C)) >= -1e-8
    np.linalg.cholesky(C + 1e-10 * np.eye(len(C)) * max(1, np.trace(C) / len(C)))


def test_rotated_blocks(rng):
    model = CovarianceModel(KernelSpec("diag_rbf", [0.2, 0.5, 0.9]))
    O = random_orthogonal(3, rng)
    X = rng.normal(size=(4, 1))
    C = assemble_train_cov(model, X)
    R = np.kron(np.eye(4), O)
    np.testing.assert_allclose(assemble_train_cov(model.with_rotation(O), X), R.T @ C @ R, atol=1e-12)


# --- covariance transport ------------------------------------------------------


def test_transport_covariance_identity_cases(rng):
    m = SPD(2)
    P = m.random_point(rng)
    f = m.default_frame(P)
    A = rng.normal(size=(3, 3))
    S = A @ A.T
    np.testing.assert_allclose(transport_covariance(S, f, P), S)
    np.testing.assert_allclose(transport_covariance(np.eye(3), f, m.random_point(rng)), np.eye(3))


@pytest.mark.parametrize("m", [Sphere(3), SPD(3)])
def test_transport_covariance_rotated_target(rng, m):
    p, q = m.random_point(rng), m.random_point(rng)
    f = m.default_frame(p)
    D = m.tangent_dim
    A = rng.normal(size=(D, D))
    S = A @ A.T
    O = random_orthogonal(D, rng)
    target = f.transport(q).rotated(O)
    # explicit Gram oracle: M[k, j] = <W_k, Gamma E_j>_q
    moved = [m.transport(p, q, e) for e in f.basis]
    M = np.array([[m.inner(q, w, e) for e in moved] for w in target.basis])
    out = transport_covariance(S, f, q, target)
    np.testing.assert_allclose(out, M @ S @ M.T, atol=1e-9)
    np.testing.assert_allclose(out, O @ S @ O.T, atol=1e-9)


def test_transport_covariance_rejects_non_psd(rng):
    m = Sphere(2)
    f = m.default_frame(np.array([0, 0, 1.0]))
    with pytest.raises(ValueError):
        transport_covariance(np.diag([1.0, -1.0]), f, np.array([1.0, 0, 0]))
