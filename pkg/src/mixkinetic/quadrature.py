"""Quadrature rules shared by the kernel integrals."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

HALF_PI = 0.5 * np.pi


@lru_cache(maxsize=256)
def _jacobi(n: int, b: float):
    x, w = roots_jacobi(n, 0.0, b)
    return x, w


@lru_cache(maxsize=256)
def _legendre(n: int):
    return roots_legendre(n)


def angular_rule(s: float, n: int, eps: float = 0.0, kappa: float = 1.0):
    """Nodes and weights for integrals of kappa * theta^(-1-s) * h(theta) over [eps, pi/2].

    With eps == 0 the rule is Gauss-Jacobi in theta with weight theta^(1-s), so it is
    only accurate when h vanishes like theta^2 at the origin (the grazing cancellation).
    With eps > 0 it is Gauss-Legendre in log(theta).
    """
    if eps <= 0.0:
        x, w = _jacobi(n, 1.0 - s)
        theta = (np.pi / 4.0) * (1.0 + x)
        weights = kappa * (np.pi / 4.0) ** (2.0 - s) * w / theta ** 2
        return theta, weights
    x, w = _legendre(n)
    a, b = np.log(eps), np.log(HALF_PI)
    t = 0.5 * (b - a) * x + 0.5 * (b + a)
    theta = np.exp(t)
    weights = kappa * 0.5 * (b - a) * w * theta ** (-s)
    return theta, weights


def azimuth_rule(n: int):
    phi = 2.0 * np.pi * np.arange(n) / n
    return phi, np.full(n, 2.0 * np.pi / n)


def sphere_rule(n_polar: int, n_azimuth: int):
    """Product rule on the unit sphere: Gauss-Legendre in cos(polar) times trapezoid in azimuth.

    Returns unit vectors (n, 3) and weights summing to 4*pi.
    """
    x, w = _legendre(n_polar)
    phi, wp = azimuth_rule(n_azimuth)
    ct = np.repeat(x, n_azimuth)
    st = np.sqrt(1.0 - ct ** 2)
    ph = np.tile(phi, n_polar)
    dirs = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1)
    return dirs, np.outer(w, wp).ravel()


def radial_rule(n: int, r_max: float):
    """Gauss-Legendre on [0, r_max] including the r^2 Jacobian."""
    x, w = _legendre(n)
    r = 0.5 * r_max * (x + 1.0)
    return r, 0.5 * r_max * w * r ** 2
