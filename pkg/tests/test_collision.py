import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from mixkinetic.collision import (angular_norm, cancellation_angular, cancellation_kernel, gamma,
                                  jacobian_beta, make_frame, post_collision, sample_angle,
                                  sigma_from_angles)
from mixkinetic.mixture import mixture_from_dict

vec = st.lists(st.floats(-100, 100), min_size=3, max_size=3).map(np.array)
mass = st.floats(0.01, 0.99)


def _unit(rng, n):
    s = rng.standard_normal((n, 3))
    return s / np.linalg.norm(s, axis=1, keepdims=True)


def test_post_collision_examples():
    v, vs = np.array([1.0, 0, 0]), np.array([-1.0, 0, 0])
    vp, vsp = post_collision(v, vs, 0.5, 0.5, [0, 1.0, 0])
    np.testing.assert_allclose(vp, [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(vsp, [0, -1, 0], atol=1e-15)
    v, vs = np.array([0.3, -2, 1]), np.array([1.0, 0.5, -0.2])
    u = v - vs
    vp, vsp = post_collision(v, vs, 0.2, 0.8, u / np.linalg.norm(u))
    np.testing.assert_allclose(vp, v, atol=1e-14)
    np.testing.assert_allclose(vsp, vs, atol=1e-14)


def test_conservation_million_draws():
    rng = np.random.default_rng(1)
    n = 1_000_000
    v = rng.standard_normal((n, 3)) * 10 ** rng.uniform(-2, 2, (n, 1))
    vs = rng.standard_normal((n, 3)) * 10 ** rng.uniform(-2, 2, (n, 1))
    mi = rng.uniform(0.01, 0.99, (n, 1))
    mj = 1 - mi
    vp, vsp = post_collision(v, vs, mi, mj, _unit(rng, n))
    p0 = mi * v + mj * vs
    scale_p = mi * np.linalg.norm(v, axis=1, keepdims=True) + mj * np.linalg.norm(vs, axis=1, keepdims=True)
    assert np.max(np.abs(mi * vp + mj * vsp - p0) / scale_p) <= 1e-12
    e0 = mi[:, 0] * np.sum(v * v, 1) + mj[:, 0] * np.sum(vs * vs, 1)
    e1 = mi[:, 0] * np.sum(vp * vp, 1) + mj[:, 0] * np.sum(vsp * vsp, 1)
    assert np.max(np.abs(e1 - e0) / e0) <= 1e-12


@given(vec, vec, mass, st.floats(0, math.pi / 2), st.floats(0, 2 * math.pi))
def test_interchange_and_distance_bounds(v, vs, mi, theta, phi):
    u = v - vs
    if np.linalg.norm(u) < 1e-6:
        return
    mj = 1 - mi
    sig = sigma_from_angles(u, theta, phi)
    vp, vsp = post_collision(v, vs, mi, mj, sig)
    a, b = post_collision(vs, v, mj, mi, -sig)
    scale = 1 + np.linalg.norm(v) + np.linalg.norm(vs)
    np.testing.assert_allclose(a, vsp, atol=1e-12 * scale)
    np.testing.assert_allclose(b, vp, atol=1e-12 * scale)
    un = np.linalg.norm(u)
    assert np.linalg.norm(vp - v) <= 2 * un * math.sin(theta / 2) + 1e-12 * scale
    d = np.linalg.norm(vp - vs)
    assert un / math.sqrt(2) - 1e-12 * scale <= d <= 6 * un
    assert abs(float(sig @ u) / un - math.cos(theta)) <= 1e-12


def test_frame_examples():
    f = make_frame([1.0, 0, 0])
    assert abs(f.I_X @ f.X) < 1e-15 and abs(f.J_X @ f.X) < 1e-15
    assert np.linalg.norm(f.I_X) == pytest.approx(1) and np.linalg.norm(f.J_X) == pytest.approx(1)
    z = make_frame([0.0, 0, 0])
    assert not np.any(z.I_X) and not np.any(z.J_X)
    f5 = make_frame([0, 0, 5.0])
    assert np.linalg.norm(f5.I_X) == pytest.approx(5) and np.linalg.norm(f5.J_X) == pytest.approx(5)
    for phi in np.linspace(0, 2 * np.pi, 7):
        assert abs(gamma(f5.X, phi) @ f5.X) < 1e-12


def test_gamma_examples():
    X = np.array([3.0, 0, 0])
    f = make_frame(X)
    np.testing.assert_allclose(gamma(X, 0.0), f.I_X, atol=1e-15)
    np.testing.assert_allclose(gamma(X, np.pi / 2), f.J_X, atol=1e-15)
    for phi in (0.3, 2.0, 5.5):
        g = gamma(X, phi)
        assert np.linalg.norm(g) == pytest.approx(3.0, rel=1e-12) and abs(g @ X) < 1e-12


@given(vec)
def test_frame_orthonormal_and_deterministic(X):
    n = np.linalg.norm(X)
    f = make_frame(X)
    if n == 0:
        assert not np.any(f.I_X) and not np.any(f.J_X)
        return
    B = np.stack([X, f.I_X, f.J_X]) / n
    np.testing.assert_allclose(B @ B.T, np.eye(3), atol=1e-12)
    g = make_frame(X.copy())
    np.testing.assert_array_equal(g.I_X, f.I_X)


def test_sample_angle_examples():
    assert sample_angle(1.0, 0.1, 0.0) == pytest.approx(0.1, rel=1e-15)
    assert sample_angle(1.0, 0.1, 1.0) == pytest.approx(np.pi / 2, rel=1e-15)
    assert sample_angle(1.0, 0.1, 0.5) == pytest.approx(1 / (0.5 * (10 + 2 / np.pi)), rel=1e-12)
    # the closed form evaluates to 0.1880297; the commonly quoted 0.188025 is a rounding slip
    assert sample_angle(1.0, 0.1, 0.5) == pytest.approx(0.188025, abs=1e-5)


def test_sample_angle_ks():
    s, eps = 1.3, 0.02
    th = sample_angle(s, eps, np.random.default_rng(3).random(1_000_000))
    cdf = lambda t: (eps ** -s - np.asarray(t) ** -s) / (eps ** -s - (np.pi / 2) ** -s)
    assert stats.kstest(th, cdf).statistic < 0.005


def test_jacobian_examples():
    assert jacobian_beta(1.0, 0.3) == pytest.approx(1.0, rel=1e-15)
    th = np.linspace(0, np.pi / 2, 50)
    np.testing.assert_allclose(jacobian_beta(np.cos(th), 0.5), np.cos(th / 2), rtol=1e-14)
    assert jacobian_beta(0.0, 0.25) == pytest.approx(0.790569, abs=5e-7)


def test_angular_norm_closed_form():
    assert angular_norm(1.0, 2.0, 0.1) == pytest.approx(2.0 * (10 - 2 / np.pi), rel=1e-14)


def _cfg(masses, lam=1.0, s=1.0):
    return mixture_from_dict({"species": [{"mass": m} for m in masses],
                              "kernel": {"lambda": lam, "s": s, "kappa": 1.0}})


def test_cancellation_kernel_dense_oracle():
    # equal masses: beta = cos(theta/2), so the integrand is sec^4(theta/2) - 1 over theta^2
    eps = 1e-3
    th = np.linspace(eps, np.pi / 2, 1_000_001)
    g = np.expm1(-4.0 * np.log(np.cos(th / 2))) * th ** -2.0
    h = th[1] - th[0]
    oracle = h * (g.sum() - 0.5 * (g[0] + g[-1]))
    val = cancellation_kernel(2.0, 0, 1, _cfg([1, 1]), eps)
    assert val / (2 * np.pi * 2.0) == pytest.approx(oracle, rel=1e-8)


def test_cancellation_kernel_limits_and_monotone():
    cfg = _cfg([1, 1])
    assert cancellation_kernel(0.0, 0, 1, cfg) == 0.0
    assert cancellation_angular(1.0, 1.0, 1.0, 1.0, 0.0) == 0.0
    assert abs(cancellation_angular(1 - 1e-10, 1.0, 1.0, 1.0, 0.0)) < 1e-8
    u = np.linspace(0, 20, 200)
    S = cancellation_kernel(u, 0, 1, _cfg([1, 4]))
    assert np.all(S >= 0) and np.all(np.diff(S) >= 0)


def test_cancellation_quadrature_failure_is_reported(monkeypatch):
    from mixkinetic import collision
    monkeypatch.setattr(collision.integrate, "quad", lambda *a, **k: (1.0, 1.0))
    collision.cancellation_angular.cache_clear()
    with pytest.raises(ArithmeticError, match="reached only"):
        collision.cancellation_angular(0.3, 1.0, 1.0, 1.0, 0.0)
    collision.cancellation_angular.cache_clear()
