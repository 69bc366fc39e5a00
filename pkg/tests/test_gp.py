import warnings

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from conftest import random_orthogonal
from igpr import gp
from igpr.bpf import GeodesicCurve
from igpr.covariance import Coregionalization, CovarianceModel, KernelSpec, assemble_train_cov
from igpr.estimators import IntrinsicGPR
from igpr.exceptions import ConditioningWarning, InitializationError
from igpr.manifolds import SPD, Frame, Sphere
from igpr.scenarios import ScenarioSpec, generate_scenario

S2 = Sphere(2)


def sphere_curve():
    return GeodesicCurve(S2, np.array([1.0, 0, 0]), np.array([0, 1.1, 0.4]))


def s1_data(n=30, seed=0, rep=0):
    return generate_scenario(ScenarioSpec(name="s1", n=n, seed=seed), rep)


def fitted_s1(n=30, **kw):
    ds = s1_data(n)
    est = IntrinsicGPR(bpf=ds.curve, frame="elementary", **kw).fit(ds.X, ds.Y, ds.t)
    return ds, est


# --- residuals -------------------------------------------------------------------


def test_residuals_zero_on_curve():
    c = sphere_curve()
    t = np.linspace(0, 1, 6)
    Y = np.array([c.point(ti) for ti in t])
    r = gp.compute_residuals(S2, Y, t, c, 0.5, S2.default_frame(c.point(0.5)))
    assert np.max(np.abs(r)) < 1e-12


def test_residuals_single_sample_at_anchor():
    c = sphere_curve()
    f = S2.default_frame(c.point(0.3))
    y = S2.exp(f.base, 0.2 * f.basis[0])
    r = gp.compute_residuals(S2, y[None], [0.3], c, 0.3, f)
    np.testing.assert_allclose(r, [0.2, 0.0], atol=1e-12)


def test_residuals_manual_transport_chain(rng):
    c = sphere_curve()
    t = np.array([0.1, 0.9])
    Y = np.array([S2.exp(c.point(ti), S2.random_tangent(c.point(ti), rng, 0.3)) for ti in t])
    anchor = 0.4
    f = S2.default_frame(c.point(anchor))
    manual = []
    for ti, y in zip(t, Y):
        mu = c.point(ti)
        v = S2.log(mu, y)
        w = S2.transport(mu, c.point(anchor), v)  # closed form along the same great circle
        manual.append([np.dot(w, e) for e in f.basis])
    np.testing.assert_allclose(gp.compute_residuals(S2, Y, t, c, anchor, f), np.ravel(manual), atol=1e-12)


def test_residuals_report_singular_index():
    c = GeodesicCurve(S2, np.array([1.0, 0, 0]))
    Y = np.array([[0, 1.0, 0], [-1.0, 0, 0]])
    with pytest.raises(Exception) as info:
        gp.compute_residuals(S2, Y, [0, 0], c, 0.0, S2.default_frame(c.p0))
    assert getattr(info.value, "index", None) == 1


# --- likelihood -----------------------------------------------------------------


def test_lml_scalar_examples():
    cov = CovarianceModel(KernelSpec("diag_rbf", [1.0], 0.75), None, 0.25)
    X = np.array([[0.0]])
    assert gp.log_marginal_likelihood(cov, X, [0.0]) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-12)
    assert gp.log_marginal_likelihood(cov, X, [1.0]) == pytest.approx(-0.5 - 0.5 * np.log(2 * np.pi), abs=1e-12)


def test_lml_matches_dense_density(rng):
    X = rng.normal(size=(3, 1))
    A = rng.normal(size=(2, 2))
    cov = CovarianceModel(KernelSpec("rbf", 0.6, 1.0), Coregionalization.from_matrix(A @ A.T), 0.1)
    r = rng.normal(size=6)
    C = assemble_train_cov(cov, X)
    assert gp.log_marginal_likelihood(cov, X, r) == pytest.approx(multivariate_normal(np.zeros(6), C).logpdf(r), rel=1e-10)


@pytest.mark.parametrize("family", ["diag_rbf", "rbf"])
def test_structured_lml_matches_dense(rng, family):
    X = rng.uniform(0, 1, size=(12, 1))
    R = rng.normal(size=(12, 3))
    init = gp.default_init(X, R, family)
    ev = gp._LMLEvaluator(X, R, family, 3, True, True, {"amplitude": init.kernel.amplitude, "noise_var": init.noise_var})
    x = gp._pack(init, True, True, 1e-10)
    model = ev.to_model(x)
    dense = multivariate_normal(np.zeros(36), assemble_train_cov(model, X), allow_singular=False).logpdf(R.ravel())
    assert ev.value(x) == pytest.approx(dense, rel=1e-7)


# --- hyperparameter fitting ---------------------------------------------------


def test_fit_improves_on_init(rng):
    ds = generate_scenario(ScenarioSpec(name="s1", n=40, noise_sd=0.05), 0)
    est = IntrinsicGPR(bpf=ds.curve, frame="elementary").fit(ds.X, ds.Y, ds.t)
    info = est.fit_info_
    assert info["lml"] >= info["lml_init"] - 1e-9
    assert len(info["trace"]) == 5
    assert est.log_marginal_likelihood() == pytest.approx(info["lml"], rel=1e-6, abs=1e-6)


def test_fit_beats_true_hyperparameters():
    ds = s1_data(40)
    truth = CovarianceModel(KernelSpec("diag_rbf", [0.1, 0.3, 0.5]), None, 1e-10)
    est = IntrinsicGPR(bpf=ds.curve, frame="elementary").fit(ds.X, ds.Y, ds.t)
    r = est.model_.residual_coords
    assert est.log_marginal_likelihood() >= gp.log_marginal_likelihood(truth, ds.X, r) - 1e-6


def test_fit_rbf_kernel_recovers_structure():
    ds = s1_data(40)
    est = IntrinsicGPR(bpf=ds.curve, frame="elementary", kernel="rbf").fit(ds.X, ds.Y, ds.t)
    B = est.covariance_.coreg.B
    assert np.min(np.linalg.eigvalsh(B)) > 0
    assert est.fit_info_["lml"] >= est.fit_info_["lml_init"] - 1e-9


def test_duplicate_inputs_warn_without_crash():
    X = np.array([[0.5], [0.5]])
    Y = np.array([[1.0, 0, 0], [0.0, 1.0, 0]])
    with pytest.warns(ConditioningWarning):
        est = IntrinsicGPR(bpf="mean", noise_var=0.0, optimize_noise=False).fit(X, Y, t=[0, 0])
    assert np.all(np.isfinite(est.predict(X, [0, 0])))


def test_single_sample_keeps_init():
    est = IntrinsicGPR(bpf="mean", theta=0.3, noise_var=0.1).fit([[0.0]], [[0, 0, 1.0]], t=[0.0])
    assert est.covariance_.kernel.theta[0] == pytest.approx(0.3)
    assert est.fit_info_ == {}


def test_non_finite_init_raises():
    R = np.array([[np.nan], [1.0]])
    with pytest.raises(InitializationError):
        gp.fit_hyperparameters(np.array([[0.0], [1.0]]), R, init=CovarianceModel(KernelSpec("diag_rbf", [1.0]), None, 0.1))


# --- prediction ------------------------------------------------------------------


def test_noiseless_interpolation():
    ds = s1_data(10)
    # short length-scales keep K well conditioned, so no jitter is needed
    est = IntrinsicGPR(bpf=ds.curve, frame="elementary", theta=[0.01, 0.02, 0.03], noise_var=0.0, optimize=False)
    est.fit(ds.X, ds.Y, ds.t)
    preds = est.predict_distribution(ds.X, ds.t)
    model = est.model_
    for i, p in enumerate(preds):
        beta_anchor = model.frame.coords(model.bpf.transport(p.t, model.anchor_t, p.tangent_mean))
        np.testing.assert_allclose(beta_anchor, model.residual_coords[3 * i : 3 * i + 3], atol=1e-6)
        assert ds.manifold.dist(p.map_point, ds.Y[i]) < 1e-6


def test_scalar_posterior_formula():
    f = S2.default_frame(np.array([0, 0, 1.0]))
    curve = GeodesicCurve(S2, f.base)
    cov = CovarianceModel(KernelSpec("diag_rbf", [0.5, 0.5], 1.0), None, 0.2)
    model = gp.fit_model(S2, [[0.0]], [S2.exp(f.base, 0.3 * f.basis[0])], [0.0], curve, 0.0, f, cov)
    mean, covs = gp.predict_coords(model, np.array([[0.4]]))
    k = np.exp(-0.16 / 0.5)
    assert mean[0, 0] == pytest.approx(k / 1.2 * 0.3, rel=1e-9)
    assert covs[0, 0, 0] == pytest.approx(1 - k * k / 1.2, rel=1e-9)


def test_far_extrapolation_reverts_to_prior():
    ds, est = fitted_s1(20, theta=[0.1, 0.3, 0.5], noise_var=1e-4, optimize=False)
    (p,) = est.predict_distribution([[50.0]], [0.5])
    assert np.max(np.abs(p.mean_coords)) < 1e-12
    assert ds.manifold.dist(p.map_point, ds.curve.point(0.5)) < 1e-12
    np.testing.assert_allclose(p.cov, np.eye(3), atol=1e-12)


def test_posterior_cov_psd():
    ds, est = fitted_s1(30)
    for p in est.predict_distribution(np.linspace(0, 1, 17)[:, None]):
        np.testing.assert_allclose(p.cov, p.cov.T)
        assert np.min(np.linalg.eigvalsh(p.cov)) >= -1e-8
        ds.manifold.check_point(p.map_point)


def test_include_noise_adds_variance():
    ds, est = fitted_s1(20, noise_var=0.01, optimize=False, theta=0.3)
    a = est.predict_distribution([[0.5]])[0].cov
    est.set_params(include_noise=True)
    b = est.predict_distribution([[0.5]])[0].cov
    np.testing.assert_allclose(b - a, 0.01 * np.eye(3), atol=1e-12)


def test_mean_is_linear_in_residuals():
    ds, est = fitted_s1(20)
    m = est.model_
    doubled = gp.FittedModel(m.manifold, m.bpf, m.anchor_t, m.frame, m.cov, m.X, m.t, 2 * m.residual_coords)
    Xs = np.linspace(0, 1, 7)[:, None]
    np.testing.assert_allclose(gp.predict_coords(doubled, Xs)[0], 2 * gp.predict_coords(m, Xs)[0], atol=1e-12)


def test_permutation_invariance(rng):
    ds = s1_data(25)
    kw = dict(bpf=ds.curve, frame="elementary", theta=[0.1, 0.3, 0.5], noise_var=1e-3, optimize=False)
    a = IntrinsicGPR(**kw).fit(ds.X, ds.Y, ds.t)
    perm = rng.permutation(len(ds))
    b = IntrinsicGPR(**kw).fit(ds.X[perm], ds.Y[perm], ds.t[perm])
    Xs = np.linspace(0, 1, 9)[:, None]
    for p, q in zip(a.predict(Xs), b.predict(Xs)):
        assert ds.manifold.dist(p, q) < 1e-10


# --- invariances -----------------------------------------------------------------


def test_frame_invariance(rng):
    ds = s1_data(30)
    est = IntrinsicGPR(bpf=ds.curve, frame="default").fit(ds.X, ds.Y, ds.t)
    m = est.model_
    Xs = rng.uniform(0, 1, size=(5, 1))
    for _ in range(5):
        O = random_orthogonal(3, rng)
        w = gp.change_frame(m, O)
        for pe, pw in zip(gp.predict_many(m, Xs, Xs[:, 0]), gp.predict_many(w, Xs, Xs[:, 0])):
            np.testing.assert_allclose(pw.mean_coords, O @ pe.mean_coords, atol=1e-8)
            np.testing.assert_allclose(pw.cov, O @ pe.cov @ O.T, atol=1e-8)
            assert ds.manifold.dist(pe.map_point, pw.map_point) <= 1e-8


def test_rebase_to_same_anchor_is_identity():
    _, est = fitted_s1(20)
    assert gp.rebase_anchor(est.model_, est.model_.anchor_t) is est.model_


def test_rebase_anchor_spd():
    ds, est = fitted_s1(30)
    m0 = gp.rebase_anchor(est.model_, 0.0)
    m1 = gp.rebase_anchor(est.model_, 1.0)
    Xs = np.linspace(0, 1, 11)[:, None]
    for a, b in zip(gp.predict_many(m0, Xs, Xs[:, 0]), gp.predict_many(m1, Xs, Xs[:, 0])):
        assert ds.manifold.dist(a.map_point, b.map_point) <= 1e-8
        np.testing.assert_allclose(a.cov, b.cov, atol=1e-8)


def test_rebase_anchor_sphere_three_anchors(rng):
    c = sphere_curve()
    t = np.linspace(0, 1, 25)
    Y = np.array([S2.exp(c.point(ti), S2.random_tangent(c.point(ti), rng, 0.05)) for ti in t])
    est = IntrinsicGPR().fit(t, Y)
    models = [gp.rebase_anchor(est.model_, a) for a in (0.0, 0.37, 1.0)]
    Xs = np.linspace(0, 1, 9)[:, None]
    preds = [[p.map_point for p in gp.predict_many(mm, Xs, Xs[:, 0])] for mm in models]
    for i in range(3):
        for j in range(i):
            assert max(S2.dist(a, b) for a, b in zip(preds[i], preds[j])) <= 1e-8


def test_transport_prediction_round_trip():
    ds, est = fitted_s1(20)
    (p,) = est.predict_distribution([[0.3]], [0.3])
    v, cov, pt = gp.transport_prediction(p, est.bpf_, 0.8)
    back = est.bpf_.transport(0.8, 0.3, v)
    np.testing.assert_allclose(back, p.tangent_mean, atol=1e-10)
    np.testing.assert_allclose(cov, p.cov)


def test_rebased_posterior_frame_is_orthonormal():
    ds = s1_data(20)
    est = IntrinsicGPR(bpf=ds.curve).fit(ds.X, ds.Y, ds.t)
    frame, cov = est.predict_distribution([[0.4]])[0].rebased()
    assert frame.is_orthonormal()
    np.testing.assert_allclose(frame.base, est.predict([[0.4]])[0])


# --- prior sampling --------------------------------------------------------------


def test_prior_sampling_zero_amplitude():
    c = sphere_curve()
    cov = CovarianceModel(KernelSpec("diag_rbf", [0.3, 0.3], 1e-300))
    grid = np.linspace(0, 1, 5)
    pts = gp.sample_prior(S2, c, cov, grid, S2.default_frame(c.p0), random_state=1)
    for t, p in zip(grid, pts):
        assert S2.dist(p, c.point(t)) < 1e-12


def test_prior_sampling_deterministic():
    ds = s1_data(10)
    cov = CovarianceModel(KernelSpec("diag_rbf", [0.1, 0.3, 0.5]))
    grid = np.linspace(0, 1, 4)
    f = SPD(2).default_frame(np.eye(2))
    a = gp.sample_prior(ds.manifold, ds.curve, cov, grid, f, random_state=5)
    b = gp.sample_prior(ds.manifold, ds.curve, cov, grid, f, random_state=5)
    np.testing.assert_array_equal(a, b)


def test_prior_samples_follow_transported_frames():
    ds = s1_data(10)
    cov = CovarianceModel(KernelSpec("diag_rbf", [0.1, 0.3, 0.5]))
    f = SPD(2).default_frame(np.eye(2))
    grid = np.array([0.2, 0.7])
    pts, v = gp.sample_prior(ds.manifold, ds.curve, cov, grid, f, random_state=3, return_coords=True)
    for t, p, c in zip(grid, pts, v):
        basis = np.array([ds.curve.transport(0.0, t, e) for e in f.basis])
        ft = Frame(ds.manifold, ds.curve.point(t), basis)
        np.testing.assert_allclose(ft.coords(ds.manifold.log(ft.base, p)), c, atol=1e-9)


def test_kernel_gram_grid_shapes():
    cov = CovarianceModel(KernelSpec("rbf", 0.2), Coregionalization.from_matrix(np.diag([1.0, 4.0])))
    G = gp.kernel_gram_grid(cov, np.linspace(0, 1, 5))
    assert G.shape == (2, 5, 5)
    np.testing.assert_allclose(np.diagonal(G, axis1=1, axis2=2), [[1.0] * 5, [4.0] * 5], atol=1e-9)


def test_robust_cholesky_escalates():
    A = np.ones((3, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        L = gp.robust_cholesky(A)
    np.testing.assert_allclose(L @ L.T, A, atol=1e-6)
