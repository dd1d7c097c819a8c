import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renvol import jets
from renvol.curvature import (
    CurvatureBundle,
    Frame,
    MetricJet,
    christoffel,
    covariant_derivative,
    curvature_bundle,
    einstein_reference,
    einstein_sigma3_route,
    hessian,
)
from renvol.errors import ContractViolation
from renvol.metric_zoo import (
    TrigField,
    conformal_torus,
    einstein_product,
    flat_torus,
    perturbed_torus,
    random_points,
    random_trig_field,
    round_sphere,
)


def bundle(fam, count=6, seed=0, order=4):
    pts = random_points(fam, np.random.default_rng(seed), count)
    return CurvatureBundle(fam.metric_jets(pts, order))


@pytest.fixture(scope="module")
def sphere7():
    return bundle(round_sphere(7))


@pytest.fixture(scope="module")
def product34():
    return bundle(einstein_product(3, 4))


@pytest.fixture(scope="module")
def perturbed():
    return bundle(perturbed_torus(7, 0.05, seed=1), count=8, order=5)


# -- closed forms ---------------------------------------------------------------


def test_flat_torus_is_flat():
    b = bundle(flat_torus(7))
    for t in (b.riem, b.ric, b.scalar, b.P, b.W, b.C, b.B, b.v6, b.T2):
        assert not np.any(t)


def test_unit_sphere_ground_truth(sphere7):
    b = sphere7
    g = b.metric.g[:, 0]
    np.testing.assert_allclose(b.scalar[:, 0], 42.0, rtol=1e-13)
    np.testing.assert_allclose(b.P[:, 0], 0.5 * g, atol=1e-13)
    np.testing.assert_allclose(b.sigma[2][:, 0], 35.0 / 8.0, rtol=1e-13)
    np.testing.assert_allclose(b.v6[:, 0], -35.0 / 64.0, rtol=1e-12)
    for t in (b.W, b.C, b.B):
        assert np.max(np.abs(t[:, 0])) <= 1e-9


def test_sphere_sign_convention(sphere7):
    # orthonormal sectional curvature +1 with g_00 = 1 at every chart point
    b = sphere7
    g = b.metric.g[:, 0]
    k = b.riem[:, 0, 0, 1, 0, 1] / (g[:, 0, 0] * g[:, 1, 1])
    np.testing.assert_allclose(k, 1.0, rtol=1e-13)


def test_einstein_product_ground_truth(product34):
    b = product34
    g = b.metric.g[:, 0]
    np.testing.assert_allclose(b.scalar[:, 0], 14.0, rtol=1e-13)
    np.testing.assert_allclose(b.P[:, 0], g / 6.0, atol=1e-13)
    np.testing.assert_allclose(b.v6[:, 0], -35.0 / 1728.0, rtol=1e-11)
    assert np.max(np.abs(b.B[:, 0])) <= 1e-10
    assert np.max(np.abs(b.C[:, 0])) <= 1e-12
    assert np.max(np.abs(b.W[:, 0])) > 0.1


def test_einstein_reference_examples():
    v6, coef = einstein_reference(7, 42.0)
    assert v6 == pytest.approx(-35.0 / 64.0, rel=1e-15)
    assert coef == pytest.approx(15.0 / 32.0, rel=1e-15)
    assert einstein_reference(7, 14.0)[0] == pytest.approx(-35.0 / 1728.0, rel=1e-15)
    assert einstein_sigma3_route(7, 42.0) == pytest.approx(-35.0 / 64.0, rel=1e-15)
    with pytest.raises(ContractViolation):
        einstein_reference(4, 12.0)


@pytest.mark.parametrize("n,R", [(5, 20.0), (7, 14.0), (9, 3.3), (12, -4.0)])
def test_einstein_reference_agrees_with_sigma3_route(n, R):
    assert einstein_reference(n, R)[0] == pytest.approx(einstein_sigma3_route(n, R), rel=1e-14)


def test_conformally_flat_torus():
    b = bundle(conformal_torus(7, seed=3), order=4)
    for t in (b.W, b.C, b.B):
        assert np.max(np.abs(t[:, 0])) <= 1e-9
    np.testing.assert_allclose(b.v6[:, 0], -b.sigma[2][:, 0] / 8.0, rtol=1e-9, atol=1e-12)


# -- Christoffel symbols ----------------------------------------------------------


def test_flat_christoffel_vanishes():
    m = flat_torus(5).metric_jets(np.zeros((1, 5)), 3)
    assert not christoffel(m).second.any()


def test_conformal_christoffel_formula():
    fam = conformal_torus(7, seed=5)
    pts = random_points(fam, np.random.default_rng(2), 4)
    frame = fam.frame(3)
    m = fam.metric_jets(pts, 3, frame=frame)
    w = fam.w.jet(frame, pts)
    dw = jets.chart_gradient(frame.space, w, frame.axes)[:, 0]
    eye = np.eye(7)
    expected = (
        np.einsum("ij,zk->zijk", eye, dw) + np.einsum("ik,zj->zijk", eye, dw) - np.einsum("jk,zi->zijk", eye, dw)
    )
    np.testing.assert_allclose(christoffel(m).second[:, 0], expected, atol=1e-14)


def test_two_sphere_christoffel():
    theta = 0.8
    frame = Frame(2, (0, 1), 2)
    s = frame.space
    th = jets.variable(s, 0, [theta])
    sn = jets.compose(s, th, "sin")
    g = np.zeros((1, s.size, 2, 2))
    g[:, 0, 0, 0] = 1.0
    g[:, :, 1, 1] = jets.mul(s, sn, sn)
    gam = christoffel(MetricJet(frame, g)).second[0, 0]
    assert gam[0, 1, 1] == pytest.approx(-math.sin(theta) * math.cos(theta), rel=1e-15)
    assert gam[1, 0, 1] == pytest.approx(math.cos(theta) / math.sin(theta), rel=1e-15)


def test_inverse_jets(perturbed):
    m = perturbed.metric
    prod = jets.mul(m.space, m.g, m.g_inv, "ij,jk->ik")
    expected = jets.constant(m.space, np.broadcast_to(np.eye(7), (m.batch, 7, 7)))
    assert np.max(np.abs(prod - expected)) <= 1e-12


# -- covariant derivatives --------------------------------------------------------


def test_metric_compatibility(perturbed):
    dg = covariant_derivative(perturbed.frame, perturbed.metric.g, perturbed.gamma)
    assert np.max(np.abs(dg)) <= 1e-12


def test_hessian_symmetric(perturbed):
    fam = perturbed_torus(7, 0.05, seed=1)
    pts = random_points(fam, np.random.default_rng(0), 8)
    f = random_trig_field(np.random.default_rng(9), 7, fam.effective_dims)
    h = hessian(perturbed.frame, f.jet(perturbed.frame, pts), perturbed.gamma)
    assert np.max(np.abs(h - np.swapaxes(h, -1, -2))) <= 1e-13


def test_ricci_identity(perturbed):
    fam = perturbed_torus(7, 0.05, seed=1)
    pts = random_points(fam, np.random.default_rng(0), 8)
    rng = np.random.default_rng(11)
    frame = perturbed.frame
    V = np.stack([random_trig_field(rng, 7, fam.effective_dims).jet(frame, pts) for _ in range(7)], axis=-1)
    ddV = covariant_derivative(frame, covariant_derivative(frame, V, perturbed.gamma), perturbed.gamma)[:, 0]
    # ddV[k, j, i] = nabla_i nabla_j V_k
    lhs = np.einsum("zkji->zijk", ddV) - np.einsum("zkij->zijk", ddV)
    gi = perturbed.metric.g_inv[:, 0]
    rhs = -np.einsum("zlm,zijmk,zl->zijk", gi, perturbed.riem[:, 0], V[:, 0])
    assert np.max(np.abs(lhs - rhs)) <= 1e-11 * max(np.max(np.abs(lhs)), 1.0)


def test_exhausted_order_raises():
    frame = Frame(3, (0,), 0)
    with pytest.raises(ContractViolation):
        covariant_derivative(frame, np.zeros((1, 1, 3)), np.zeros((1, 1, 3, 3, 3)))


def test_unsupported_shapes_raise():
    m = flat_torus(5).metric_jets(np.zeros((1, 5)), 1)
    with pytest.raises(ContractViolation):
        CurvatureBundle(m)


# -- algebraic invariants on generic metrics ----------------------------------------


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 1000), st.sampled_from([5, 7, 8]))
def test_curvature_symmetries(seed, n):
    b = bundle(perturbed_torus(n, 0.05, seed=seed), count=4, seed=seed)
    R = b.riem[:, 0]
    scale = np.max(np.abs(R)) + 1.0
    for perm in ("zjikl", "zijlk"):
        assert np.max(np.abs(R + np.einsum(f"zijkl->{perm}", R))) <= 1e-11 * scale
    assert np.max(np.abs(R - np.einsum("zijkl->zklij", R))) <= 1e-11 * scale
    # first Bianchi identity
    cyc = R + np.einsum("zijkl->ziklj", R) + np.einsum("zijkl->ziljk", R)
    assert np.max(np.abs(cyc)) <= 1e-11 * scale


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 1000))
def test_weyl_trace_free_and_cotton_bach_structure(seed):
    b = bundle(perturbed_torus(7, 0.05, seed=seed), count=4, seed=seed)
    gi = b.metric.g_inv[:, 0]
    W = b.W[:, 0]
    wscale = np.max(np.abs(W)) + 1.0
    for spec in ("zik,zijkl->zjl", "zil,zijkl->zjk", "zjk,zijkl->zil", "zjl,zijkl->zik"):
        assert np.max(np.abs(np.einsum(spec, gi, W))) <= 1e-10 * wscale
    C = b.C[:, 0]
    assert np.array_equal(C, -np.swapaxes(C, -1, -2))
    assert np.max(np.abs(np.einsum("zij,zijk->zk", gi, C))) <= 1e-11 * (np.max(np.abs(C)) + 1.0)
    B = b.B[:, 0]
    assert np.max(np.abs(B - np.swapaxes(B, -1, -2))) <= 1e-10 * (np.max(np.abs(B)) + 1.0)


def test_kulkarni_nomizu_reconstruction(perturbed):
    from renvol.curvature import kulkarni_nomizu

    s = perturbed.frame.space
    kn = kulkarni_nomizu(s, perturbed.P, perturbed.metric.g)
    recon = perturbed.W[:, 0] + kn[:, 0]
    assert np.max(np.abs(recon - perturbed.riem[:, 0])) <= 1e-10 * np.max(np.abs(perturbed.riem[:, 0]))


def test_newton_traces(perturbed):
    b = perturbed
    gi = b.metric.g_inv[:, 0]
    T2 = np.einsum("zij,zjk->zik", gi, b.T2[:, 0])
    s2, s3 = b.sigma[1][:, 0], b.sigma[2][:, 0]
    np.testing.assert_allclose(np.einsum("zii->z", T2), 5 * s2, rtol=1e-11, atol=1e-14)
    np.testing.assert_allclose(np.einsum("zij,zji->z", T2, b.A[:, 0]), 3 * s3, rtol=1e-11, atol=1e-14)


def test_sigma_matches_eigenvalues(perturbed):
    A = perturbed.A[:, 0]
    for z in range(A.shape[0]):
        ev = np.linalg.eigvals(A[z]).real
        assert perturbed.sigma[0][z, 0] == pytest.approx(ev.sum(), rel=1e-12, abs=1e-14)
        e2 = sum(ev[i] * ev[j] for i in range(7) for j in range(i + 1, 7))
        assert perturbed.sigma[1][z, 0] == pytest.approx(e2, rel=1e-10, abs=1e-14)


def test_summary_contents(sphere7):
    s = sphere7.summary()
    assert s["R"] == pytest.approx(42.0)
    assert s["v6"] == pytest.approx(-35.0 / 64.0)
    assert s["v2"] == pytest.approx(-7.0 / 4.0)
    assert curvature_bundle(sphere7.metric).summary()["norm_W"] <= 1e-9


def test_field_outside_frame_raises():
    f = TrigField(((1.0, (0, 0, 0, 0, 1), 0.0),))
    frame = Frame(5, (0, 1), 2)
    with pytest.raises(ContractViolation):
        f.jet(frame, np.zeros((1, 5)))
