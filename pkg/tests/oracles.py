"""Independent brute-force references used by several test modules."""

import math

import numpy as np


def _frame(u):
    uh = u / np.linalg.norm(u)
    helper = np.array([0.0, 0.0, 1.0]) if abs(uh[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    a = np.cross(uh, helper)
    a /= np.linalg.norm(a)
    return uh, a, np.cross(uh, a)


def povzner_lhs_dense(v, v_star, m_i, m_j, n, s, kappa=1.0, n_tau=100_000, n_phi=256, chunk=4000):
    """Trapezoid rule in tau with theta = (pi/2) tau^(2/(2-s)), so the integrand is O(tau) at 0."""
    v, v_star = np.asarray(v, float), np.asarray(v_star, float)
    M = m_i + m_j
    u = v - v_star
    un = np.linalg.norm(u)
    uh, a, b = _frame(u)
    q = 2.0 / (2.0 - s)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    cp, sp = np.cos(phi), np.sin(phi)
    x = 1 + m_i * v @ v
    y = 1 + m_j * v_star @ v_star
    tau_all = np.linspace(0.0, 1.0, n_tau + 1)[1:]
    total = 0.0
    for k in range(0, n_tau, chunk):
        tau = tau_all[k:k + chunk]
        th = 0.5 * np.pi * tau ** q
        jac = kappa * (0.5 * np.pi) ** (-s) * q * tau ** (-(s + 2) / (2 - s))
        # sigma |u| - u written without cancellation
        dirv = (-2 * np.sin(th / 2) ** 2)[:, None, None] * uh + np.sin(th)[:, None, None] * (
            cp[None, :, None] * a + sp[None, :, None] * b)
        D = (m_j / M) * un * dirv
        Ds = -(m_i / M) * un * dirv
        dx = m_i * np.sum(D * (2 * v + D), axis=-1)
        dy = m_j * np.sum(Ds * (2 * v_star + Ds), axis=-1)
        term = x ** n * np.expm1(n * np.log1p(dx / x)) + y ** n * np.expm1(n * np.log1p(dy / y))
        row = term.mean(axis=1) * 2 * np.pi * jac
        w = np.ones_like(tau)
        if k + chunk >= n_tau:
            w[-1] = 0.5
        total += float(np.dot(w, row))
    # the tau = 0 node contributes zero (integrand is O(tau))
    return total / n_tau


def phi_sum_sigma1(rho, sigma0, K, I, n_max=1000):
    """Exhaustive scan of the sigma1 formula with k_n = ceil(2n/rho)."""
    best_A = -math.inf
    for n in range(1, n_max + 1):
        k = math.ceil(2 * n / rho - 1e-12)
        best_A = max(best_A, math.lgamma(k + 1) - (2 / rho) * math.lgamma(n + 1) - (2 * n / rho) * math.log(4 / rho))
    inf = min(-(math.log(K) + best_A) / n for n in range(1, n_max + 1))
    return 0.5 * I * sigma0 ** (2 / rho + 1) * (rho / 4) ** (2 / rho) * math.exp(inf)
