"""Grid densities, Fourier-side collision identities and the coercivity check.

Transforms follow F(f)(xi) = int f(v) exp(-i v.xi) dv, with the (2 pi)^-3 factor on
Plancherel sums. A GridDensity is read as the discrete measure sum_k f_k h^3 delta_{x_k}
whenever an identity must hold exactly (Bobylev); for L^p and Sobolev norms the nodal
values are treated as samples of a continuous density.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import signal, special

from .collision import _frame_arrays, angular_norm, cancellation_angular
from .quadrature import angular_rule, azimuth_rule, radial_rule, sphere_rule

DIRECT_MAX_N = 16

log = logging.getLogger(__name__)


@dataclass
class GridDensity:
    """values[i] on the nodes x_k = -L + k h, k = 0..n-1 (h = 2L/n) of each axis."""

    values: np.ndarray
    half_width: float
    masses: np.ndarray
    lost: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.n)

    def cell_centers(self) -> np.ndarray:
        a = self.axis()
        X, Y, Z = np.meshgrid(a, a, a, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1)

    def species(self, i: int) -> "GridDensity":
        return GridDensity(self.values[i:i + 1], self.half_width, self.masses[i:i + 1])

    def mass(self, i: int) -> float:
        return float(self.values[i].sum()) * self.cell_volume

    @classmethod
    def from_function(cls, fns, half_width: float, n: int, masses) -> "GridDensity":
        a = -half_width + (2.0 * half_width / n) * np.arange(n)
        X, Y, Z = np.meshgrid(a, a, a, indexing="ij")
        pts = np.stack([X, Y, Z], axis=-1)
        vals = np.stack([np.asarray(f(pts), float) for f in fns])
        return cls(vals, float(half_width), np.asarray(masses, float))


def grid_project(ens, n: int, half_width: float) -> GridDensity:
    """Cloud-in-cell deposit of every species; out-of-box mass is dropped and reported."""
    h = 2.0 * half_width / n
    vals = np.zeros((ens.n_species, n, n, n))
    lost = np.zeros(ens.n_species)
    for i, v in enumerate(ens.velocities):
        g = (v + half_width) / h
        base = np.floor(g).astype(np.int64)
        frac = g - base
        inside = np.all((base >= 0) & (base <= n - 1), axis=1)
        acc = np.zeros(n ** 3)
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    idx = base + np.array([dx, dy, dz])
                    w = (np.where(dx, frac[:, 0], 1 - frac[:, 0]) * np.where(dy, frac[:, 1], 1 - frac[:, 1])
                         * np.where(dz, frac[:, 2], 1 - frac[:, 2]))
                    ok = inside & np.all(idx <= n - 1, axis=1) & (w > 0)
                    flat = (idx[ok, 0] * n + idx[ok, 1]) * n + idx[ok, 2]
                    acc += np.bincount(flat, weights=w[ok], minlength=n ** 3)
        weight = float(ens.weights[i])
        vals[i] = acc.reshape(n, n, n) * weight / h ** 3
        lost[i] = weight * len(v) - vals[i].sum() * h ** 3
        if lost[i] > 1e-3 * weight * len(v):
            log.warning("species %d: %.2g%% of the mass lies outside [-%g, %g)^3", i + 1,
                        100 * lost[i] / (weight * len(v)), half_width, half_width)
    return GridDensity(vals, float(half_width), np.asarray(ens.masses, float), lost)


# ---------------------------------------------------------------- Fourier fields

@dataclass
class FourierField:
    """Transform of one species of a grid density, on the dual grid (spacing pi/L) and off it."""

    nodes: np.ndarray    # (m, 3) node positions
    weights: np.ndarray  # (m,) node masses f_k h^3
    half_width: float
    n: int

    @classmethod
    def from_grid(cls, grid: GridDensity, i: int = 0) -> "FourierField":
        w = grid.values[i].ravel() * grid.cell_volume
        keep = w != 0
        return cls(grid.cell_centers()[keep], w[keep], grid.half_width, grid.n)

    @property
    def spacing(self) -> float:
        return math.pi / self.half_width

    def ft(self, xi) -> np.ndarray:
        """Exact transform of the discrete measure at arbitrary xi (..., 3)."""
        xi = np.asarray(xi, float)
        flat = xi.reshape(-1, 3)
        out = np.empty(len(flat), complex)
        for a in range(0, len(flat), 256):
            ph = flat[a:a + 256] @ self.nodes.T
            out[a:a + 256] = np.exp(-1j * ph) @ self.weights
        return out.reshape(xi.shape[:-1])

    def dual_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """(modes per axis, transform values on the n^3 dual grid), fftshifted."""
        k = np.fft.fftshift(np.fft.fftfreq(self.n, d=1.0 / self.n)) * self.spacing
        K = np.stack(np.meshgrid(k, k, k, indexing="ij"), axis=-1)
        return k, self.ft(K)

    def interpolate(self, xi) -> tuple[np.ndarray, np.ndarray]:
        """Trilinear interpolation from the dual grid, and its residual against the exact value."""
        k, F = self.dual_grid()
        xi = np.asarray(xi, float).reshape(-1, 3)
        g = (xi - k[0]) / self.spacing
        base = np.clip(np.floor(g).astype(int), 0, self.n - 2)
        t = g - base
        out = np.zeros(len(xi), complex)
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    w = (np.where(dx, t[:, 0], 1 - t[:, 0]) * np.where(dy, t[:, 1], 1 - t[:, 1])
                         * np.where(dz, t[:, 2], 1 - t[:, 2]))
                    out += w * F[base[:, 0] + dx, base[:, 1] + dy, base[:, 2] + dz]
        return out, out - self.ft(xi)


def xi_split(xi, sigma, m_i: float, m_j: float):
    """(xi+, xi-) with xi+ = (m_i xi + m_j |xi| sigma)/M and xi- = xi - xi+."""
    xi = np.asarray(xi, float)
    sigma = np.asarray(sigma, float)
    M = m_i + m_j
    xp = (m_i / M) * xi + (m_j / M) * np.linalg.norm(xi, axis=-1, keepdims=True) * sigma
    return xp, xi - xp


@dataclass(frozen=True)
class PairKernel:
    m_i: float
    m_j: float
    s: float
    kappa: float = 1.0
    eps: float = 0.0
    lam: float = 0.0

    @classmethod
    def from_config(cls, cfg, i: int, j: int, eps: float = 0.0, lam: float | None = None) -> "PairKernel":
        l, s, k = cfg.pair(i, j)
        m = cfg.masses
        return cls(float(m[i]), float(m[j]), s, k, eps, l if lam is None else lam)

    @property
    def b_norm(self) -> float:
        """int_{S^2} b dsigma of the truncated kernel."""
        return 2.0 * np.pi * angular_norm(self.s, self.kappa, self.eps)


def _sigma_around(axis, theta, phi):
    """sigma[..., t, p, :] at polar angle theta from unit ``axis`` (..., 3)."""
    I, J = _frame_arrays(axis)
    ct, st = np.cos(theta)[:, None, None], np.sin(theta)[:, None, None]
    cp, sp = np.cos(phi)[None, :, None], np.sin(phi)[None, :, None]
    a = axis[..., None, None, :]
    return ct * a + st * (cp * I[..., None, None, :] + sp * J[..., None, None, :])


def qplus_fourier(f_hat, g_hat, k: PairKernel, xi, n_theta: int = 96, n_phi: int = 64) -> complex:
    """int_{S^2} g^(xi-) f^(xi+) b(xi-hat . sigma) dsigma; ``f_hat``/``g_hat`` expose ``ft``."""
    if k.lam != 0:
        raise ValueError("the Fourier form holds for angle-only kernels (lambda = 0)")
    if k.eps <= 0:
        raise ValueError("Q+ needs an integrable angular kernel; set eps > 0")
    xi = np.asarray(xi, float)
    nx = float(np.linalg.norm(xi))
    if nx == 0.0:
        return complex(k.b_norm * g_hat.ft(np.zeros(3)) * f_hat.ft(np.zeros(3)))
    theta, wt = angular_rule(k.s, n_theta, k.eps, k.kappa)
    phi, wp = azimuth_rule(n_phi)
    sig = _sigma_around(xi / nx, theta, phi)
    xp, xm = xi_split(xi, sig, k.m_i, k.m_j)
    vals = g_hat.ft(xm) * f_hat.ft(xp)
    return complex(np.einsum("tp,t,p->", vals, wt, wp))


def _psi(u_vec, xi, k: PairKernel, theta, wt):
    """int b e^{-i a sigma.xi} dsigma around u-hat, a = m_j/M |u|; closed in phi via J0."""
    un = np.linalg.norm(u_vec, axis=-1)
    safe = np.where(un > 0, un, 1.0)
    xpar = (u_vec @ xi) / safe
    xperp = np.sqrt(np.maximum(float(xi @ xi) - xpar ** 2, 0.0))
    a = k.m_j / (k.m_i + k.m_j) * un
    arg_j = a[:, None] * np.sin(theta)[None, :] * xperp[:, None]
    arg_e = a[:, None] * np.cos(theta)[None, :] * xpar[:, None]
    return 2.0 * np.pi * (special.j0(arg_j) * np.exp(-1j * arg_e)) @ wt


def qplus_direct(f: GridDensity, g: GridDensity, k: PairKernel, xi, n_theta: int = 96) -> complex:
    """sum over node pairs of f_k g_l h^6 int b exp(-i v'.xi) dsigma, by relative-lattice factorization."""
    if f.n > DIRECT_MAX_N or g.n > DIRECT_MAX_N:
        raise ValueError(f"direct quadrature is limited to {DIRECT_MAX_N}^3 grids; project onto a coarser grid")
    if f.n != g.n or f.half_width != g.half_width:
        raise ValueError("f and g must share one grid")
    if k.lam != 0 or k.eps <= 0:
        raise ValueError("direct Q+ is implemented for lambda = 0 with eps > 0")
    xi = np.asarray(xi, float)
    n, h = f.n, f.spacing
    x = f.cell_centers().reshape(n, n, n, 3)
    fw = f.values[0] * f.cell_volume
    gw = g.values[0] * g.cell_volume * np.exp(-1j * (x @ xi))
    # corr[d] = sum_l g_l e^{-i v_l.xi} f_{l+d}, d in [-(n-1), n-1]^3
    corr = signal.fftconvolve(fw, gw[::-1, ::-1, ::-1], mode="full")
    d = h * np.arange(-(n - 1), n)
    U = np.stack(np.meshgrid(d, d, d, indexing="ij"), axis=-1).reshape(-1, 3)
    c = corr.ravel()
    keep = np.abs(c) > 0
    U, c = U[keep], c[keep]
    theta, wt = angular_rule(k.s, n_theta, k.eps, k.kappa)
    psi = np.where(np.linalg.norm(U, axis=1) > 0, _psi(U, xi, k, theta, wt), k.b_norm)
    shift = np.exp(-1j * (1.0 - k.m_j / (k.m_i + k.m_j)) * (U @ xi))
    return complex(np.sum(c * shift * psi))


# ---------------------------------------------------------------- Dirichlet form

@numba.njit(cache=True)
def _mix_pdf(x0, x1, x2, w, mu, var):
    out = 0.0
    for c in range(w.shape[0]):
        d = (x0 - mu[c, 0]) ** 2 + (x1 - mu[c, 1]) ** 2 + (x2 - mu[c, 2]) ** 2
        out += w[c] * (2.0 * np.pi * var[c]) ** -1.5 * math.exp(-0.5 * d / var[c])
    return out


@numba.njit(cache=True)
def _dirichlet_cross(vn, vw, sn, sw, fw, fmu, fvar, th, st, wt, cp, sp, wp, mj_over_M):
    """sum over nodes of g* f(v) int b (f(v) - f(v')) dsigma; node weights already carry f and g."""
    total = 0.0
    for b in range(sn.shape[0]):
        for a in range(vn.shape[0]):
            v0, v1, v2 = vn[a, 0], vn[a, 1], vn[a, 2]
            u0, u1, u2 = v0 - sn[b, 0], v1 - sn[b, 1], v2 - sn[b, 2]
            un = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
            if un == 0.0:
                continue
            x0, x1, x2 = u0 / un, u1 / un, u2 / un
            k = 0
            if abs(x1) < abs(x0):
                k = 1
            if abs(x2) < abs(x1) and abs(x2) < abs(x0):
                k = 2
            e0 = 1.0 if k == 0 else 0.0
            e1 = 1.0 if k == 1 else 0.0
            e2 = 1.0 if k == 2 else 0.0
            dd = e0 * x0 + e1 * x1 + e2 * x2
            i0, i1, i2 = e0 - dd * x0, e1 - dd * x1, e2 - dd * x2
            ni = math.sqrt(i0 * i0 + i1 * i1 + i2 * i2)
            i0, i1, i2 = i0 / ni, i1 / ni, i2 / ni
            j0, j1, j2 = x1 * i2 - x2 * i1, x2 * i0 - x0 * i2, x0 * i1 - x1 * i0
            fv = _mix_pdf(v0, v1, v2, fw, fmu, fvar)
            c = mj_over_M * un
            inner = 0.0
            for t in range(th.shape[0]):
                # v' - v = (m_j/M)|u| (sigma - u-hat), written without cancellation
                om = -2.0 * math.sin(0.5 * th[t]) ** 2
                acc = 0.0
                for p in range(cp.shape[0]):
                    d0 = om * x0 + st[t] * (cp[p] * i0 + sp[p] * j0)
                    d1 = om * x1 + st[t] * (cp[p] * i1 + sp[p] * j1)
                    d2 = om * x2 + st[t] * (cp[p] * i2 + sp[p] * j2)
                    acc += wp[p] * (fv - _mix_pdf(v0 + c * d0, v1 + c * d1, v2 + c * d2, fw, fmu, fvar))
                inner += wt[t] * acc
            total += sw[b] * vw[a] * inner
    return total


def hermite_nodes(m, n: int):
    """Nodes and weights for int m(v) h(v) dv: tensor Gauss-Hermite per mixture component."""
    x, w = np.polynomial.hermite.hermgauss(n)
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel() / np.pi ** 1.5
    nodes, weights = [], []
    for wc, mu, var in zip(m.weights, m.means, m.variances):
        nodes.append(mu + math.sqrt(2.0 * var) * X)
        weights.append(wc * W)
    return np.concatenate(nodes), np.concatenate(weights)


def dirichlet_form(f, g, k: PairKernel, n_grid: int = 12, n_theta: int = 12, n_phi: int = 12,
                   n_xi: int = 24, n_dir: int = 12) -> tuple[float, float]:
    """(direct, Fourier) sides of int int int b g(v*) (f(v') - f(v))^2 for Gaussian-mixture f, g.

    Direct side: (f' - f)^2 = (f'^2 - f^2) + 2 f (f - f'); the first bracket integrates to
    S_0 ||g||_1 ||f||_2^2 by the cancellation lemma, the second is a quadrature with n_grid^3
    Hermite nodes in v (weighted by f) and in v* (weighted by g). Fourier side: polar xi rule
    with the closed-form transforms.
    """
    if k.lam != 0:
        raise ValueError("the Dirichlet identity is stated for angle-only kernels")
    if g.mass == 0:
        return 0.0, 0.0
    theta, wt = angular_rule(k.s, n_theta, k.eps, k.kappa)
    phi, wp = azimuth_rule(n_phi)
    vn, vw = hermite_nodes(f, n_grid)
    sn, sw = hermite_nodes(g, n_grid)
    cross = _dirichlet_cross(vn, vw, sn, sw, f.weights, f.means, f.variances, theta, np.sin(theta),
                             wt, np.cos(phi), np.sin(phi), wp, k.m_j / (k.m_i + k.m_j))
    alpha = k.m_i / (k.m_i + k.m_j)
    S0 = 2.0 * np.pi * cancellation_angular(float(alpha), 0.0, k.s, k.kappa, float(k.eps))
    direct = S0 * g.mass * f.l2_squared() + 2.0 * cross
    return float(direct), dirichlet_fourier(f, g, k, n_theta, n_phi, n_xi, n_dir)


def _xi_polar(f, n_xi: int, n_dir: int):
    xmax = 9.0 / math.sqrt(float(np.min(f.variances)))
    r, wr = radial_rule(n_xi, xmax)
    dirs, wd = sphere_rule(n_dir, 2 * n_dir)
    return r, wr, dirs, wd


def dirichlet_fourier(f, g, k: PairKernel, n_theta: int = 12, n_phi: int = 12,
                      n_xi: int = 24, n_dir: int = 12) -> float:
    theta, wt = angular_rule(k.s, n_theta, k.eps, k.kappa)
    phi, wp = azimuth_rule(n_phi)
    r, wr, dirs, wd = _xi_polar(f, n_xi, n_dir)
    g0 = g.ft(np.zeros(3)).real
    sig = _sigma_around(dirs, theta, phi)                 # (d, t, p, 3)
    total = 0.0
    for rk, wk in zip(r, wr):
        if rk == 0:
            continue
        xi = rk * dirs
        xp, xm = xi_split(xi[:, None, None, :], sig, k.m_i, k.m_j)
        fx = f.ft(xi)[:, None, None]
        fp = f.ft(xp)
        br = g0 * (np.abs(fx) ** 2 + np.abs(fp) ** 2) - 2.0 * np.real(g.ft(xm) * fp * np.conj(fx))
        total += wk * np.einsum("dtp,d,t,p->", br, wd, wt, wp)
    return float(total) / (2 * np.pi) ** 3


def coercivity_constant(k: PairKernel, c_g: float) -> float:
    """K = (m_j/M)^2 kappa/(2-s) C_g |S| with |S| = 2 pi."""
    return (k.m_j / (k.m_i + k.m_j)) ** 2 * k.kappa / (2.0 - k.s) * c_g * 2.0 * np.pi


def numeric_cg(g_hat, k: PairKernel, extra_points=None, n_rad: int = 400, eta_max: float = 50.0) -> float:
    """inf of (g^(0) - |g^(eta)|) / (|eta|^2 ^ 1) over a radial scan in 26 directions plus ``extra_points``."""
    g0 = float(np.real(g_hat.ft(np.zeros(3))))
    dirs = np.array([(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)
                     if (a, b, c) != (0, 0, 0)], float)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rad = np.geomspace(1e-3, eta_max, n_rad)
    pts = (rad[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    if extra_points is not None:
        pts = np.concatenate([pts, np.asarray(extra_points, float).reshape(-1, 3)])
    nrm2 = np.sum(pts ** 2, axis=1)
    keep = nrm2 > 1e-12
    ratio = (g0 - np.abs(g_hat.ft(pts[keep]))) / np.minimum(nrm2[keep], 1.0)
    return float(np.min(ratio))


def coercivity_bound(g_hat, k: PairKernel, f_hat, n_theta: int = 12, n_phi: int = 12,
                     n_xi: int = 24, n_dir: int = 12) -> tuple[float, float, float, float]:
    """(lhs, rhs, K, C_g): Dirichlet form versus K/(2 pi)^3 int |f^|^2 (|xi|^2 ^ |xi|^s)."""
    lhs = dirichlet_fourier(f_hat, g_hat, k, n_theta, n_phi, n_xi, n_dir)
    theta, _ = angular_rule(k.s, n_theta, k.eps, k.kappa)
    phi, _ = azimuth_rule(n_phi)
    r, wr, dirs, wd = _xi_polar(f_hat, n_xi, n_dir)
    sig = _sigma_around(dirs, theta, phi)
    samples = np.concatenate([xi_split(rk * dirs[:, None, None, :], sig, k.m_i, k.m_j)[1].reshape(-1, 3)
                              for rk in r[:: max(1, len(r) // 6)]])
    c_g = numeric_cg(g_hat, k, samples)
    if c_g <= 0:
        return lhs, 0.0, 0.0, c_g
    K = coercivity_constant(k, c_g)
    integral = 0.0
    for rk, wk in zip(r, wr):
        integral += wk * min(rk ** 2, rk ** k.s) * float(np.dot(wd, np.abs(f_hat.ft(rk * dirs)) ** 2))
    return lhs, K * integral / (2 * np.pi) ** 3, K, c_g


# ---------------------------------------------------------------- norms

def _weighted(grid: GridDensity, i: int, weight_exp: float) -> np.ndarray:
    f = grid.values[i]
    if weight_exp == 0:
        return f
    x = grid.cell_centers().reshape(f.shape + (3,))
    return f * (1.0 + grid.masses[i] * np.sum(x * x, axis=-1)) ** (weight_exp / 2)


def dual_modes(grid: GridDensity) -> np.ndarray:
    k = np.fft.fftfreq(grid.n, d=1.0 / grid.n) * (np.pi / grid.half_width)
    return np.stack(np.meshgrid(k, k, k, indexing="ij"), axis=-1)


def weighted_sobolev(grid: GridDensity, weight_exp: float, s: float, i: int = 0) -> float:
    """(2 pi)^-3 int (1 + |xi|^2)^(s/2) |F(<v>^w f)|^2 dxi on the dual grid (squared norm)."""
    F = np.fft.fftn(_weighted(grid, i, weight_exp)) * grid.cell_volume
    xi = dual_modes(grid)
    mult = (1.0 + np.sum(xi * xi, axis=-1)) ** (s / 2)
    dxi = (np.pi / grid.half_width) ** 3
    return float(np.sum(mult * np.abs(F) ** 2)) * dxi / (2 * np.pi) ** 3


def lp_norm(grid: GridDensity, p: float, weight_exp: float = 0.0, i: int = 0) -> float:
    g = np.abs(_weighted(grid, i, weight_exp))
    if math.isinf(p):
        return float(g.max())
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(np.sum(g ** p) * grid.cell_volume) ** (1.0 / p)


def level_energy_sequence(series, K: float, t_star: float, c_i: float, k_max: int,
                          weight_exp: float, s: float, i: int = 0) -> list[float]:
    """W_k = (1/2) sup_{[t_k,T]} ||(f - K_k)_+||^2 + c_i int_{t_k}^T ||<v>^w (f - K_k)_+||^2_{H^{s/2}}.

    ``series`` is a time-ordered list of (t, GridDensity); K_k = K(1 - 2^-k), t_k = t*(1 - 2^-(k+1)).
    """
    times = np.array([t for t, _ in series])
    if len(times) == 0 or times[0] > 0.5 * t_star + 1e-12:
        raise ValueError("the series must start at or before t*/2")
    out = []
    for k in range(k_max + 1):
        Kk = K * (1.0 - 2.0 ** -k)
        tk = t_star * (1.0 - 2.0 ** -(k + 1))
        sel = [a for a, t in enumerate(times) if t >= tk - 1e-12]
        l2, sob = [], []
        for a in sel:
            grid = series[a][1]
            fk = np.maximum(grid.values[i] - Kk, 0.0)
            gk = GridDensity(fk[None], grid.half_width, grid.masses[i:i + 1])
            l2.append(float(np.sum(fk ** 2)) * grid.cell_volume)
            sob.append(weighted_sobolev(gk, weight_exp, s))
        ts = times[sel]
        integral = float(np.sum(0.5 * (np.array(sob[1:]) + np.array(sob[:-1])) * np.diff(ts))) if len(ts) > 1 else 0.0
        out.append(0.5 * max(l2) + c_i * integral)
    return out
