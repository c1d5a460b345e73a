"""Collision geometry for unequal masses.

Post-collisional velocities, the scattering frame used to parametrize sigma, the
truncated angular sampler, the v -> v' Jacobian factor and the cancellation kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .quadrature import HALF_PI, angular_rule, azimuth_rule, radial_rule, sphere_rule

SPHERE_AZIMUTH = 2.0 * np.pi  # |S|: length of the azimuth circle


def post_collision(v, v_star, m_i: float, m_j: float, sigma):
    """Return (v', v*') for the pair; broadcasts over leading axes."""
    v = np.asarray(v, float)
    v_star = np.asarray(v_star, float)
    sigma = np.asarray(sigma, float)
    M = m_i + m_j
    center = (m_i * v + m_j * v_star) / M
    un = np.linalg.norm(v - v_star, axis=-1, keepdims=True)
    return center + (m_j / M) * un * sigma, center - (m_i / M) * un * sigma


@dataclass(frozen=True)
class ScatteringFrame:
    X: np.ndarray
    I_X: np.ndarray
    J_X: np.ndarray


def _frame_arrays(X: np.ndarray):
    X = np.asarray(X, float)
    norm = np.linalg.norm(X, axis=-1, keepdims=True)
    safe = np.where(norm > 0, norm, 1.0)
    xh = X / safe
    # basis vector least aligned with X (lowest index on ties)
    k = np.argmin(np.abs(xh), axis=-1)
    e = np.zeros_like(xh)
    np.put_along_axis(e, k[..., None], 1.0, axis=-1)
    ih = e - np.sum(e * xh, axis=-1, keepdims=True) * xh
    ih /= np.linalg.norm(ih, axis=-1, keepdims=True)
    jh = np.cross(xh, ih)
    return ih * norm, jh * norm


def make_frame(X) -> ScatteringFrame:
    X = np.asarray(X, float)
    I_X, J_X = _frame_arrays(X)
    return ScatteringFrame(X.copy(), I_X, J_X)


def gamma(X, phi):
    """cos(phi) I(X) + sin(phi) J(X); broadcasts phi against X's leading axes."""
    I_X, J_X = _frame_arrays(np.asarray(X, float))
    phi = np.asarray(phi, float)[..., None]
    return np.cos(phi) * I_X + np.sin(phi) * J_X


def sigma_from_angles(u, theta, phi):
    """Unit vector at polar angle theta from u-hat and azimuth phi in the frame of u."""
    u = np.asarray(u, float)
    un = np.linalg.norm(u, axis=-1, keepdims=True)
    th = np.asarray(theta, float)[..., None]
    return np.cos(th) * u / un + np.sin(th) * gamma(u, phi) / un


def sample_angle(s: float, eps: float, u01):
    """Inverse CDF of the density proportional to theta^(-1-s) on [eps, pi/2]."""
    a = eps ** (-s)
    b = HALF_PI ** (-s)
    u = np.asarray(u01, float)
    theta = (a - u * (a - b)) ** (-1.0 / s)
    return np.clip(theta, eps, HALF_PI)


def angular_norm(s: float, kappa: float, eps: float) -> float:
    """int_eps^{pi/2} kappa theta^(-1-s) dtheta."""
    return kappa * (eps ** (-s) - HALF_PI ** (-s)) / s


def jacobian_beta(x, alpha: float):
    """|v' - v*| / |v - v*| as a function of x = u-hat . sigma."""
    x = np.asarray(x, float)
    return np.sqrt(alpha ** 2 + (1 - alpha) ** 2 + 2 * alpha * (1 - alpha) * x)


def _beta_power_minus_one(theta, alpha: float, p: float):
    """beta(cos theta)^(-p) - 1 without cancellation at small angles."""
    one_minus_c = 2.0 * np.sin(0.5 * np.asarray(theta, float)) ** 2
    return np.expm1(-0.5 * p * np.log1p(-2.0 * alpha * (1 - alpha) * one_minus_c))


@lru_cache(maxsize=512)
def cancellation_angular(alpha: float, lam: float, s: float, kappa: float, eps: float) -> float:
    """int_eps^{pi/2} [beta(cos theta)^(-3-lam) - 1] kappa theta^(-1-s) dtheta."""
    if alpha >= 1.0:
        return 0.0
    p = 3.0 + lam
    if eps <= 0:
        f = lambda t: _beta_power_minus_one(t, alpha, p) / t ** 2
        val, err = integrate.quad(f, 0.0, HALF_PI, weight="alg", wvar=(1.0 - s, 0.0),
                                  epsabs=1e-13, epsrel=1e-12, limit=200)
    else:
        f = lambda t: _beta_power_minus_one(t, alpha, p) * t ** (-1.0 - s)
        val, err = integrate.quad(f, eps, HALF_PI, epsabs=1e-13, epsrel=1e-12, limit=200)
    if err > 1e-10 * max(1.0, abs(val)):
        raise ArithmeticError(f"angular quadrature reached only {err:.3e}")
    return kappa * val


def cancellation_kernel(u_norm, i: int, j: int, cfg, eps: float | None = None):
    """S_ij(|u|) = |S| |u|^lam int [beta^(-3-lam) - 1] sin(theta) b(cos theta) dtheta.

    ``i`` and ``j`` are 0-based species indices. ``eps`` defaults to no truncation.
    """
    m = cfg.masses
    lam, s, kappa = cfg.pair(i, j)
    alpha = m[i] / (m[i] + m[j])
    ang = cancellation_angular(float(alpha), lam, s, kappa, 0.0 if eps is None else float(eps))
    return SPHERE_AZIMUTH * np.asarray(u_norm, float) ** lam * ang


def _pole_rotation(a) -> np.ndarray:
    """Rotation taking the z axis to a-hat (identity when a is ~0)."""
    n = float(np.linalg.norm(a))
    if n < 1e-12:
        return np.eye(3)
    a = np.asarray(a, float) / n
    c = a[2]
    if c < -1 + 1e-12:
        return np.diag([1.0, -1.0, -1.0])
    v = np.array([-a[1], a[0], 0.0])
    K = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + K + K @ K / (1 + c)


def cancellation_sides(f, v_star, alpha: float, lam: float, s: float, kappa: float,
                       eps: float = 0.0, r_max: float | None = None,
                       n_r: int = 12, n_polar: int = 12, n_azimuth: int = 12,
                       n_theta: int = 16, n_phi: int = 16):
    """Both sides of int int B (f(v') - f(v)) dv dsigma = (f * S)(v*).

    ``f`` is any density with a vectorized ``pdf``. The v-integral uses a polar
    grid centred at v* (n_r x n_polar x n_azimuth nodes) whose pole points at the
    centre of mass of f, where the Gauss-Legendre polar nodes cluster; the sigma
    integral uses the angular rule around u-hat.
    """
    v_star = np.asarray(v_star, float)
    has_parts = hasattr(f, "means") and hasattr(f, "weights")
    if r_max is None:
        spread = float(np.sqrt(np.max(f.variances))) if hasattr(f, "variances") else 1.0
        far = float(np.max(np.linalg.norm(f.means - v_star, axis=-1))) if has_parts else 0.0
        r_max = far + 6.0 * spread
    r, wr = radial_rule(n_r, r_max)
    dirs, wd = sphere_rule(n_polar, n_azimuth)
    if has_parts:
        dirs = dirs @ _pole_rotation(f.weights @ f.means / f.weights.sum() - v_star).T
    theta, wt = angular_rule(s, n_theta, eps, kappa)
    phi, wp = azimuth_rule(n_phi)

    I_w, J_w = _frame_arrays(dirs)  # unit frame around each direction
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    # sigma[d, t, p, :]
    sig = (ct[None, :, None, None] * dirs[:, None, None, :]
           + st[None, :, None, None] * (cp[None, None, :, None] * I_w[:, None, None, :]
                                        + sp[None, None, :, None] * J_w[:, None, None, :]))
    lhs = 0.0
    for rk, wk in zip(r, wr):
        v = v_star + rk * dirs                                     # (d, 3)
        vp = v_star + rk * (alpha * dirs[:, None, None, :] + (1 - alpha) * sig)
        diff = f.pdf(vp) - f.pdf(v)[:, None, None]
        inner = np.einsum("dtp,t,p->d", diff, wt, wp)
        lhs += wk * rk ** lam * np.dot(wd, inner)
    ang = cancellation_angular(float(alpha), lam, s, kappa, float(eps))
    rhs = 0.0
    for rk, wk in zip(r, wr):
        rhs += wk * SPHERE_AZIMUTH * rk ** lam * ang * np.dot(wd, f.pdf(v_star + rk * dirs))
    return float(lhs), float(rhs)
