"""Moment functionals, the Povzner estimate, moment ODE comparison and exponential series."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from scipy.special import betainc, gammaln, logsumexp

from .collision import _frame_arrays
from .quadrature import angular_rule, azimuth_rule

ORDER_TOL = 1e-9


# ---------------------------------------------------------------- moments

def _bracket_samples(obj, i: int):
    """(brackets, weights) for species i of a particle ensemble or a grid density."""
    m_i = float(obj.masses[i])
    if hasattr(obj, "velocities"):
        v = obj.velocities[i]
        w = np.full(len(v), float(obj.weights[i]))
    else:
        v = obj.cell_centers()
        w = obj.values[i].ravel() * obj.cell_volume
    return np.sqrt(1.0 + m_i * np.einsum("ij,ij->i", v, v)), w


def moment(obj, k: float, i: int) -> float:
    """sum of weight * <v>_i^k over species i (0-based); fractional k allowed."""
    if k < 0:
        raise ValueError("moment order must be nonnegative")
    br, w = _bracket_samples(obj, i)
    if k == 0:
        return float(np.sum(w))
    return float(np.sum(w * br ** k))


def moments_of_brackets(br: np.ndarray, w: np.ndarray, orders: Sequence[float]) -> np.ndarray:
    lb = np.log(br)
    return np.array([float(np.sum(w)) if k == 0 else float(np.sum(w * np.exp(k * lb)))
                     for k in orders])


@dataclass
class MomentTable:
    """values[t, i, k] = m_{orders[k], i}(times[t])."""

    times: np.ndarray
    orders: np.ndarray
    values: np.ndarray
    masses: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_species(self) -> int:
        return self.values.shape[1]

    def order_index(self, order: float) -> int:
        hit = np.nonzero(np.abs(self.orders - order) <= ORDER_TOL * max(1.0, abs(order)))[0]
        if len(hit) == 0:
            raise KeyError(f"moment order {order:g} is not stored in the table")
        return int(hit[0])

    def value(self, order: float, i: int, t_idx: int) -> float:
        return float(self.values[t_idx, i, self.order_index(order)])

    def cumulative(self, order: float) -> np.ndarray:
        return self.values[:, :, self.order_index(order)].sum(axis=1)

    def slice(self, t_idx: int) -> "MomentTable":
        return MomentTable(self.times[t_idx:t_idx + 1], self.orders, self.values[t_idx:t_idx + 1],
                           self.masses)

    def to_csv(self, path: str, config_hash: str = "") -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["time", "species", "order", "value"])
            for a, t in enumerate(self.times):
                for i in range(self.n_species):
                    for b, k in enumerate(self.orders):
                        wr.writerow([repr(float(t)), i + 1, repr(float(k)), repr(float(self.values[a, i, b]))])
        sidecar = {"config_hash": config_hash, "orders": [float(k) for k in self.orders],
                   "n_species": self.n_species, "masses": [float(m) for m in self.masses]}
        with open(path + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=2)

    @classmethod
    def from_csv(cls, path: str) -> "MomentTable":
        rows = []
        with open(path) as fh:
            rd = csv.reader(fh)
            next(rd)
            for t, i, k, v in rd:
                rows.append((float(t), int(i) - 1, float(k), float(v)))
        times = np.array(sorted({r[0] for r in rows}))
        orders = np.array(sorted({r[2] for r in rows}))
        n_sp = max(r[1] for r in rows) + 1
        vals = np.zeros((len(times), n_sp, len(orders)))
        ti = {t: a for a, t in enumerate(times)}
        ki = {k: b for b, k in enumerate(orders)}
        for t, i, k, v in rows:
            vals[ti[t], i, ki[k]] = v
        masses = np.zeros(0)
        try:
            with open(path + ".json") as fh:
                masses = np.array(json.load(fh).get("masses", []))
        except OSError:
            pass
        return cls(times, orders, vals, masses)


def default_orders(lam: np.ndarray, p_max: int = 10) -> np.ndarray:
    """Even orders 0..2(p_max+1) plus every 2n + lambda_ij the series need."""
    orders = {float(2 * n) for n in range(p_max + 2)}
    for l in np.unique(np.asarray(lam, float)):
        for n in range(p_max + 1):
            orders.add(round(2 * n + float(l), 12))
    return np.array(sorted(orders))


def table_from_samples(times, samples, orders, masses) -> MomentTable:
    """samples[t][i] = (brackets, weights)."""
    vals = np.array([[moments_of_brackets(br, w, orders) for br, w in snap] for snap in samples])
    return MomentTable(np.asarray(times, float), np.asarray(orders, float), vals, np.asarray(masses))


def log_convexity_violations(table: MomentTable, rel_tol: float = 1e-10) -> list[tuple]:
    """Triples a < b < c with m_b > m_a^th m_c^(1-th) beyond rel_tol (Holder in the order)."""
    bad = []
    ks = table.orders
    logs = np.log(np.maximum(table.values, 1e-300))
    for a, b, c in combinations(range(len(ks)), 3):
        th = (ks[c] - ks[b]) / (ks[c] - ks[a])
        gap = logs[:, :, b] - (th * logs[:, :, a] + (1 - th) * logs[:, :, c])
        for t_idx, i in zip(*np.nonzero(gap > rel_tol)):
            bad.append((int(t_idx), int(i), float(ks[a]), float(ks[b]), float(ks[c]), float(gap[t_idx, i])))
    return bad


# ---------------------------------------------------------------- Povzner

def povzner_lambda1(m_i: float, m_j: float, s: float, kappa: float = 1.0) -> float:
    M = m_i + m_j
    return kappa / (2.0 - s) * m_i * m_j * (m_i ** 2 + m_j ** 2 + m_i * m_j) / M ** 4


def binomial_weight(n: int, a: int, s: float) -> float:
    return n ** (s / 2) / (n - a) ** (s / 2 + 1) + 1.0 / a


@dataclass(frozen=True)
class PovznerConstants:
    lambda1: float
    lambda2: float
    n: int
    s: float
    kappa: float
    coercive: float  # full angular coefficient of -(x^n + y^n) before the n^(s/2) normalization
    mixed: tuple     # coefficient of x^a y^(n-a), a = 1..n-1, after absorbing half-integer terms


@lru_cache(maxsize=4096)
def povzner_constants(m_i: float, m_j: float, n: int, s: float, kappa: float = 1.0,
                      n_theta: int = 64) -> PovznerConstants:
    """Coercive and convolution constants of the Povzner bound for one species pair.

    The angular average of <v'>^{2n} + <v*'>^{2n} is expanded multinomially with
    x' = X x + Y y + A + B cos(phi - phi0), where A and B are bounded by
    Y sqrt(xy) |m_i - m_j| / sqrt(m_i m_j) and 2 sqrt(Y xy). Each term's theta integral
    is evaluated exactly by Gauss-Jacobi quadrature, half-integer monomials are split by
    (weighted) AM-GM, and lambda2 is the smallest constant dominating every monomial.
    """
    if n < 2:
        raise ValueError("the Povzner bound needs n >= 2")
    M = m_i + m_j
    mu = m_i * m_j / M ** 2
    r = abs(m_i - m_j) / M / math.sqrt(mu)
    theta, w = angular_rule(s, n_theta, 0.0, kappa)
    Y = 4.0 * mu * np.sin(0.5 * theta) ** 2
    X = 1.0 - Y
    two_pi = 2.0 * np.pi
    coercive = two_pi * float(np.dot(w, 1.0 - X ** n - Y ** n))
    lam1 = povzner_lambda1(m_i, m_j, s, kappa)
    margin = coercive - lam1 * n ** (s / 2)
    if margin <= 0:
        raise ArithmeticError("coercive constant does not dominate lambda1; bound unavailable")

    Xp = {p: X ** p for p in range(n + 1)}
    Ym = {m: Y ** m for m in range(n + 1)}
    lf = [math.lgamma(k + 1) for k in range(n + 1)]
    half = np.zeros(2 * n + 1)  # index 2*alpha for monomial x^alpha y^(n-alpha)
    for p in range(n + 1):
        for k in range(n - p + 1):
            for sp in range((n - p - k) // 2 + 1):
                q = n - p - k - 2 * sp
                if p == n or q == n:
                    continue
                m = q + k + sp
                coef = math.exp(lf[n] - lf[p] - lf[q] - lf[k] - 2 * lf[sp]) * r ** k
                J = two_pi * float(np.dot(w, Xp[p] * Ym[m]))
                half[2 * p + k + 2 * sp] += coef * J
    total = half + half[::-1]  # the v*' expansion mirrors x <-> y

    c = np.zeros(n + 1)
    for a in range(1, n):
        c[a] += total[2 * a]
    # half-integer exponents a + 1/2
    for a in range(n):
        D = total[2 * a + 1]
        if D == 0.0:
            continue
        if a == n - 1:
            # x^(n-1/2) y^(1/2) <= (e/2) x^n + (1/(2e)) x^(n-1) y with e = margin / D
            c[n - 1] += D * D / (2 * margin)
        elif a == 0:
            c[1] += D * D / (2 * margin)
        else:
            c[a] += 0.5 * D
            c[a + 1] += 0.5 * D
    ratios = [c[a] / (math.comb(n, a) * (binomial_weight(n, a, s) + binomial_weight(n, n - a, s)))
              for a in range(1, n)]
    lam2 = max(ratios) * (1.0 + 1e-12)
    return PovznerConstants(lam1, lam2, n, s, kappa, coercive, tuple(c[1:n]))


def _povzner_integrand_sum(x, y, vdotvs, vI, vJ, m_i, m_j, n, theta, wt, n_phi):
    M = m_i + m_j
    mu = m_i * m_j / M ** 2
    phi, wp = azimuth_rule(n_phi)
    Y = 4.0 * mu * np.sin(0.5 * theta) ** 2
    vG = np.cos(phi)[None, :] * vI + np.sin(phi)[None, :] * vJ
    Z = (Y * (m_i - m_j) * vdotvs)[:, None] + 2.0 * (m_i * m_j / M) * np.sin(theta)[:, None] * vG
    dx = (Y * (y - x))[:, None] + Z
    term = x ** n * np.expm1(n * np.log1p(dx / x)) + y ** n * np.expm1(n * np.log1p(-dx / y))
    return float(np.dot(wt, term @ wp))


def povzner_lhs(v, v_star, m_i: float, m_j: float, n: int, s: float, kappa: float = 1.0,
                eps: float = 0.0, n_theta: int = 24) -> tuple[float, float]:
    """Angular integral of <v'>_i^{2n} + <v*'>_j^{2n} - <v>_i^{2n} - <v*>_j^{2n}.

    Integrates over theta in (eps, pi/2] and phi in [0, 2pi) against kappa theta^(-1-s).
    Returns (value, error estimate); the estimate compares n_theta and 2 n_theta nodes.
    """
    v = np.asarray(v, float)
    v_star = np.asarray(v_star, float)
    u = v - v_star
    if not np.any(u):
        return 0.0, 0.0
    x = 1.0 + m_i * float(v @ v)
    y = 1.0 + m_j * float(v_star @ v_star)
    I_u, J_u = _frame_arrays(u)
    vI, vJ = float(v @ I_u), float(v @ J_u)
    n_phi = max(8, 2 * n + 4)
    vals = []
    for nt in (n_theta, 2 * n_theta):
        theta, wt = angular_rule(s, nt, eps, kappa)
        vals.append(_povzner_integrand_sum(x, y, float(v @ v_star), vI, vJ, m_i, m_j, n, theta, wt, n_phi))
    scale = 2 * np.pi * kappa * (x ** n + y ** n)
    err = abs(vals[1] - vals[0]) + 1e-14 * scale
    return vals[1], err


def povzner_rhs(v, v_star, m_i: float, m_j: float, n: int, s: float, kappa: float = 1.0) -> float:
    c = povzner_constants(float(m_i), float(m_j), int(n), float(s), float(kappa))
    x = 1.0 + m_i * float(np.dot(v, v))
    y = 1.0 + m_j * float(np.dot(v_star, v_star))
    total = -c.lambda1 * n ** (s / 2) * (x ** n + y ** n)
    for a in range(1, n):
        total += (c.lambda2 * math.comb(n, a) * binomial_weight(n, a, s)
                  * (x ** a * y ** (n - a) + x ** (n - a) * y ** a))
    return total


def u_weight(s: float, k: float) -> float:
    """Gamma(k+1) / Gamma(k+1-s/2) via log-Gamma."""
    return math.exp(gammaln(k + 1) - gammaln(k + 1 - s / 2))


def beta_upper_half(a: float, b: float) -> float:
    """int_{1/2}^1 x^(a-1) (1-x)^(b-1) dx."""
    return math.exp(gammaln(a) + gammaln(b) - gammaln(a + b)) * float(betainc(b, a, 0.5))


def gamma_moment_weights(s: float, n: int, a: int) -> tuple[float, float]:
    """Mass-free Beta-integral weights (K_sna, L_sna) of the binomial Povzner terms.

    K = 2 int_{1/2}^1 x^a (1-x)^(n-a-s/2-1) dx and L = (2/pi)^s K_{0,n,n-a}; multiply by
    (m_i+m_j)^2 / (m_i m_j) for the mass-dependent versions.
    """
    if not 1 <= a <= n - 1:
        raise ValueError("need 1 <= a <= n-1")
    K = 2.0 * beta_upper_half(a + 1.0, n - a - s / 2)
    L = (2.0 / np.pi) ** s * 2.0 * beta_upper_half(n - a + 1.0, float(a))
    return K, L


# ---------------------------------------------------------------- moment ODE

def convolution_sum(table: MomentTable, t_idx: int, n: int, i: int, j: int, s: float, lam: float) -> float:
    """S_n^{ij}: sum over a <= n/2 of binom(n,a) n^(s/2)/a^(s/2+1) (m_2a,j m_2(n-a)+lam,i + m_2a,i m_2(n-a)+lam,j)."""
    total = 0.0
    for a in range(1, n // 2 + 1):
        w = math.comb(n, a) * n ** (s / 2) / a ** (s / 2 + 1)
        total += w * (table.value(2 * a, j, t_idx) * table.value(2 * (n - a) + lam, i, t_idx)
                      + table.value(2 * a, i, t_idx) * table.value(2 * (n - a) + lam, j, t_idx))
    return total


def convolution_floor(velocities, weights, lam: float, m_i: float, probes) -> float:
    """min over probe velocities v of sum_z w |v - z|^lam / <v>_i^lam.

    The data-certified constant c in int |v - z|^lam f(z) dz >= c <v>^lam.
    """
    z = np.asarray(velocities, float)
    w = np.asarray(weights, float)
    best = np.inf
    for v in np.asarray(probes, float).reshape(-1, 3):
        conv = float(np.dot(w, np.linalg.norm(z - v, axis=1) ** lam))
        best = min(best, conv / (1.0 + m_i * float(v @ v)) ** (lam / 2))
    return best


def momlem_rhs(table: MomentTable, t_idx: int, n: int, i: int, j: int, C1: float, C2: float,
               s: float, lam: float) -> float:
    coer = n ** (s / 2) * (table.value(2 * n + lam, i, t_idx) + table.value(2 * n + lam, j, t_idx))
    return -C1 * coer + C2 * convolution_sum(table, t_idx, n, i, j, s, lam)


def interp_mixed(a: float, b: float, beta: float) -> float:
    if not (b >= a >= 0 and beta > 0):
        raise ValueError("need b >= a >= 0 and beta > 0")
    return beta / (beta + (b - a))


def mixed_interp_sides(mf: Callable[[float], float], mg: Callable[[float], float],
                       a: float, b: float, beta: float) -> tuple[float, float]:
    """(lhs, rhs) of m_{a+beta}[f] m_b[g] <= th m_{b+beta}[f] m_a[g] + (1-th) m_{b+beta}[g] m_a[f]."""
    th = interp_mixed(a, b, beta)
    lhs = mf(a + beta) * mg(b)
    rhs = th * mf(b + beta) * mg(a) + (1 - th) * mg(b + beta) * mf(a)
    return lhs, rhs


@dataclass(frozen=True)
class BernoulliODE:
    """x' = -A x^(1+c) + B."""

    A: float
    B: float
    c: float
    x0: float = 0.0

    def __post_init__(self):
        if not (self.A > 0 and self.B >= 0 and self.c > 0 and self.x0 >= 0):
            raise ValueError("need A > 0, B >= 0, c > 0, x0 >= 0")

    def rhs(self, x):
        return -self.A * np.power(x, 1.0 + self.c) + self.B

    @property
    def equilibrium(self) -> float:
        return (self.B / self.A) ** (1.0 / (1.0 + self.c))


def super_solution(ode: BernoulliODE, t):
    t = np.asarray(t, float)
    return ode.equilibrium + (1.0 / (ode.c * ode.A)) ** (1.0 / ode.c) * t ** (-1.0 / ode.c)


def propagation_bound(ode: BernoulliODE) -> float:
    return max(ode.x0, ode.equilibrium)


def integrate_bernoulli(ode: BernoulliODE, T: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 on [0, T]; raises if the trajectory leaves the finite range."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps = int(math.ceil(T / dt - 1e-9))
    ts = np.arange(steps + 1) * dt
    xs = np.empty(steps + 1)
    x = float(ode.x0)
    xs[0] = x
    f = lambda z: -ode.A * max(z, 0.0) ** (1.0 + ode.c) + ode.B
    for k in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if not math.isfinite(x) or x < 0:
            raise FloatingPointError(f"RK4 blew up at t={ts[k + 1]:.3g}; reduce dt")
        xs[k + 1] = x
    return ts, xs


# ---------------------------------------------------------------- exponential series

@dataclass
class ExpSeries:
    sigma: float
    alpha: float
    p: int
    variant: str
    E: float
    E_i: np.ndarray
    F: np.ndarray      # F[i, j] (script P in the propagation variant)
    F_i: np.ndarray    # per-species variant with the largest row exponents
    G: np.ndarray
    H: np.ndarray
    overflow: bool = False


def _series_weights(sigma: float, t: float, lam_nat: float, p: int, variant: str, alpha: float):
    """log of (sigma t)^(2n/lam) / (n!)^alpha (or sigma^(2n/lam) / ...) for n = 0..p."""
    n = np.arange(p + 1)
    base = sigma * t if variant == "generation" else sigma
    with np.errstate(divide="ignore"):
        lb = np.log(base) if base > 0 else -np.inf
    logw = np.array([_log_power(lb, 2 * k / lam_nat) for k in n]) - alpha * gammaln(n + 1)
    return logw, lb


def _log_power(log_base: float, e: float) -> float:
    """log(base^e) with 0^0 = 1 and 0^e = 0 (e > 0) or inf (e < 0)."""
    if abs(e) < 1e-15:
        return 0.0
    if log_base == -np.inf:
        return -np.inf if e > 0 else np.inf
    return e * log_base


def _lse(terms) -> float:
    terms = [x for x in terms if x != -np.inf]
    return float(logsumexp(terms)) if terms else -np.inf


def exp_series(table: MomentTable, t_idx: int, sigma: float, alpha: float, p: int,
               variant: str, lam: np.ndarray, s: np.ndarray) -> ExpSeries:
    if variant not in ("generation", "propagation"):
        raise ValueError("variant must be 'generation' or 'propagation'")
    if not (0 < sigma <= 1 and alpha >= 1 and p >= 2):
        raise ValueError("need sigma in (0,1], alpha >= 1, p >= 2")
    lam = np.asarray(lam, float)
    s = np.asarray(s, float)
    I = table.n_species
    lam_nat = float(lam.max(axis=1).min())
    t = float(table.times[t_idx])
    logw, lb = _series_weights(sigma, t, lam_nat, p, variant, alpha)
    logm = lambda k, i: math.log(table.value(k, i, t_idx)) if table.value(k, i, t_idx) > 0 else -np.inf
    ns = range(p + 1)
    logE_i = np.array([_lse([logw[n] + logm(2 * n, i) for n in ns]) for i in range(I)])
    logF = np.full((I, I), -np.inf)
    logG = np.full((I, I), -np.inf)
    for i in range(I):
        for j in range(I):
            logF[i, j] = _lse([logw[n] + 0.5 * s[i, j] * math.log(n) + logm(2 * n + lam[i, j], i)
                               for n in range(2, p + 1)])
            gt = []
            for n in range(2, p + 1):
                Sn = convolution_sum(table, t_idx, n, i, j, s[i, j], lam[i, j])
                if Sn > 0:
                    gt.append(logw[n] + math.log(Sn))
            logG[i, j] = _lse(gt)
    logF_i = np.array([_lse([logw[n] + 0.5 * s[i].max() * math.log(n) + logm(2 * n + lam[i].max(), i)
                             for n in range(2, p + 1)]) for i in range(I)])
    if variant == "generation":
        # n (sigma t)^(2n/lam - 1) m_2n / (n!)^alpha
        logH = np.array([_lse([math.log(n) + _log_power(lb, 2 * n / lam_nat - 1) - alpha * gammaln(n + 1)
                               + logm(2 * n, i) for n in range(1, p + 1)]) for i in range(I)])
    else:
        logH = np.full(I, -np.inf)
    stack = np.concatenate([logE_i, logF.ravel(), logG.ravel(), logF_i, logH])
    overflow = bool(np.any(stack > 709.0))
    ex = lambda a: np.exp(np.minimum(a, 709.0)) if not overflow else np.where(a > 709.0, np.inf, np.exp(np.minimum(a, 709.0)))
    E_i = ex(logE_i)
    return ExpSeries(sigma, alpha, p, variant, float(np.sum(E_i)), E_i, ex(logF), ex(logF_i),
                     ex(logG), ex(logH), overflow)


def prop2_sides(series: ExpSeries, table: MomentTable, t_idx: int, i: int, j: int,
                lam_nat: float) -> tuple[float, float]:
    """(lhs, rhs) of P^ij + P^ji >= sigma^(-lam/2) [E^i + E^j - 2e max(m0_i, m0_j)]."""
    lhs = float(series.F[i, j] + series.F[j, i])
    m0 = max(table.value(0, i, t_idx), table.value(0, j, t_idx))
    rhs = series.sigma ** (-lam_nat / 2) * (series.E_i[i] + series.E_i[j] - 2 * math.e * m0)
    return lhs, rhs


def gen1_sides(series: ExpSeries, table: MomentTable, t_idx: int, i: int, j: int, eps: float,
               lam: np.ndarray, t_window: Sequence[int]) -> tuple[float, float, dict]:
    """Convolution bound G^ij <= B s^(2/l)(F^ij+F^ji) + e(F^ij E^j + F^ji E^i) + s^(2/l) D.

    The constants C and A_eps are measured on the supplied time window of the table.
    """
    lam = np.asarray(lam, float)
    lam_nat = float(lam.max(axis=1).min())
    sig = series.sigma
    s2 = sig ** (2 / lam_nat)
    alpha = series.alpha
    N_eps = int(math.ceil(2.0 / eps))
    C = 0.0
    A = 0.0
    for k in t_window:
        t = float(table.times[k])
        if t <= 0:
            continue
        for sp, other in ((i, j), (j, i)):
            C = max(C, 0.5 * t ** (2 / lam_nat) * table.value(2 + lam[i, j], sp, k))
            Jv = 0.0
            for a in range(1, N_eps + 1):
                order = 2 * a
                if np.all(np.abs(table.orders - order) > ORDER_TOL * order):
                    break
                Jv += 2 * (sig * t) ** (2 * a / lam_nat) * table.value(order, sp, k) / math.exp(alpha * gammaln(a + 1))
            A = max(A, Jv / s2)
    m0 = table.cumulative(0)[t_idx]
    m2 = table.cumulative(2)[t_idx]
    B = 2 * A + 2 * eps * C
    D = 4 * s2 * A * C + 2 * eps * C * (m0 + sig * m2)
    lhs = float(series.G[i, j])
    rhs = (B * s2 * (series.F[i, j] + series.F[j, i])
           + eps * (series.F[i, j] * series.E_i[j] + series.F[j, i] * series.E_i[i]) + s2 * D)
    return lhs, float(rhs), {"A_eps": A, "C": C, "B_eps": B, "D_eps": D}


def gen2_sides(series: ExpSeries, m2: float, lam_nat: float, i: int,
               kappa: float | None = None, n_terms: int = 400) -> tuple[float, float, dict]:
    """H^i <= K F^i + L with K = 3 e^alpha max(1, m2) and L = 3 e^alpha m2 + S(kappa)."""
    alpha = series.alpha
    kap = 3 * math.e ** alpha if kappa is None else kappa
    n = np.arange(1, n_terms + 1)
    logS = (2 / lam_nat) * math.log(kap) + _lse(alpha * n * np.log(n) + np.log(n)
                                                 - alpha * gammaln(n + 1) - n * math.log(kap))
    S = math.exp(logS)
    K = 3 * math.e ** alpha * max(1.0, m2)
    L = 3 * math.e ** alpha * m2 + S
    return float(series.H[i]), float(K * series.F_i[i] + L), {"K": K, "L": L, "S": S, "kappa": kap}


def exp_equivalence_i(samples, sigma0: float, alpha: float, K: float | None = None,
                      n_max: int = 5000) -> tuple[float, float, float]:
    """(sup_n sigma0^n m_2n/(n!)^alpha, sum_i int exp(sigma0^(1/alpha) <v>^(2/alpha) / 2) f_i, bound).

    ``samples`` is a list of (brackets, weights) per species. The supremum is scanned
    until the log-terms have been decreasing for a long stretch. With K=None the
    measured supremum is used as K.
    """
    lbs = [(np.log(br), np.log(np.maximum(w, 1e-300)), w > 0) for br, w in samples]
    m0 = float(sum(np.sum(w) for _, w in samples))
    best = -np.inf
    since = 0
    for n in range(n_max + 1):
        lm = _lse(np.concatenate([lw[mask] + 2 * n * lb[mask] for lb, lw, mask in lbs]))
        term = n * math.log(sigma0) + lm - alpha * gammaln(n + 1)
        if term > best:
            best, since = term, 0
        else:
            since += 1
            if since > 50 and term < best - 35:
                break
    sup = math.exp(best)
    c = sigma0 ** (1 / alpha) / 2
    expint = float(sum(np.sum(w * np.exp(c * br ** (2 / alpha))) for br, w in samples))
    Kv = sup if K is None else K
    bound = 2 * m0 ** (1 - 1 / alpha) * Kv ** (1 / alpha)
    return sup, expint, bound


def exp_equivalence_ii_sigma1(rho: float, sigma0: float, K: float, I: int, n_max: int = 1000) -> float:
    """sigma1 = (1/2) inf_n I sigma0^(2/rho+1) (K A)^(-1/n) (rho/4)^(2/rho).

    A = sup_n k_n! / ((n!)^(2/rho) (4/rho)^(2n/rho)) with k_n = ceil(2n/rho), evaluated exactly
    for n <= n_max; by Stirling the ratio decays geometrically beyond that.
    """
    n = np.arange(1, n_max + 1)
    k = np.ceil(2 * n / rho - 1e-12)
    logA = float(np.max(gammaln(k + 1) - (2 / rho) * gammaln(n + 1) - (2 * n / rho) * np.log(4 / rho)))
    logKA = math.log(K) + logA
    inf_term = float(np.min(-logKA / n))
    return 0.5 * I * sigma0 ** (2 / rho + 1) * (rho / 4) ** (2 / rho) * math.exp(inf_term)


def sobolev_interp_exponents(d: int, s: float, alpha: float) -> tuple[float, float]:
    if d < 2 or not (0 < s < 2):
        raise ValueError("need d >= 2 and s in (0,2)")
    if not (1 - s / d - 1e-15 <= alpha <= 1 + 1e-15):
        raise ValueError(f"alpha must lie in [{1 - s / d}, 1]")
    return 2 * (1 + s / (d * alpha)), d / (s + d * alpha)


def config_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]
