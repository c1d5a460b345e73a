import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from mixkinetic.moments import (BernoulliODE, MomentTable, beta_upper_half, convolution_floor, default_orders,
                                exp_equivalence_i, exp_equivalence_ii_sigma1, exp_series, gamma_moment_weights,
                                integrate_bernoulli, interp_mixed, log_convexity_violations, mixed_interp_sides,
                                moment, momlem_rhs, povzner_constants, povzner_lambda1, povzner_lhs, povzner_rhs,
                                prop2_sides, propagation_bound, sobolev_interp_exponents, super_solution,
                                table_from_samples, u_weight)
from oracles import phi_sum_sigma1, povzner_lhs_dense


def particles(vs, ws, m):
    return SimpleNamespace(velocities=[np.asarray(vs, float)], weights=np.array([ws]), masses=np.array([m]))


def test_moment_examples():
    ens = particles([[1, 0, 0], [0, 2, 0]], 0.5, 1.0)
    assert moment(ens, 0, 0) == 1.0
    assert moment(ens, 2, 0) == pytest.approx(3.5, rel=1e-15)
    one = particles([[0, 0, 0]], 1.0, 0.3)
    for k in (0, 0.7, 3, 11.5):
        assert moment(one, k, 0) == 1.0
    with pytest.raises(ValueError):
        moment(one, -1, 0)


def _point_table(rho, orders=None, times=(0.0, 0.5, 1.0)):
    orders = default_orders(np.ones((len(rho), len(rho))), 10) if orders is None else orders
    vals = np.tile(np.asarray(rho, float)[None, :, None], (len(times), 1, len(orders)))
    return MomentTable(np.array(times), np.asarray(orders, float), vals, np.full(len(rho), 1 / len(rho)))


def test_table_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    samples = [[(np.sqrt(1 + rng.random(50) * 4), rng.random(50)) for _ in range(2)] for _ in range(3)]
    tab = table_from_samples([0.0, 0.1, 0.2], samples, default_orders(np.ones((2, 2)), 3), [0.4, 0.6])
    path = str(tmp_path / "m.csv")
    tab.to_csv(path, config_hash="abc")
    back = MomentTable.from_csv(path)
    np.testing.assert_array_equal(back.values, tab.values)
    np.testing.assert_array_equal(back.times, tab.times)
    np.testing.assert_array_equal(back.masses, tab.masses)
    with pytest.raises(KeyError, match="not stored"):
        tab.value(99.0, 0, 0)


@given(st.lists(st.tuples(st.floats(0, 30), st.floats(1e-3, 1)), min_size=1, max_size=12))
def test_log_convexity_on_random_measures(pts):
    br = np.sqrt(1 + np.array([p[0] for p in pts]) ** 2)
    w = np.array([p[1] for p in pts])
    orders = np.array([0, 0.5, 1, 2, 3, 4.5, 6, 8])
    tab = table_from_samples([0.0], [[(br, w)]], orders, [1.0])
    assert log_convexity_violations(tab, rel_tol=1e-9) == []


# ------------------------------------------------------------ Povzner

def test_povzner_lhs_trivial_cases():
    assert povzner_lhs([1, 2, 3], [1, 2, 3], 0.3, 0.7, 3, 1.0) == (0.0, 0.0)
    val, err = povzner_lhs([1, -2, 0.5], [0.3, 0.1, 2], 0.3, 0.7, 1, 1.2)
    assert abs(val) <= 1e-12 * (1 + 1 + 0.3 * 5.25 + 0.7 * 4.1)


def test_povzner_lhs_dense_oracle_spec_case():
    val, err = povzner_lhs([1, 0, 0], [0, 0, 0], 0.5, 0.5, 2, 1.0)
    ref = povzner_lhs_dense([1, 0, 0], [0, 0, 0], 0.5, 0.5, 2, 1.0)
    assert val == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("s,n_tau,tol", [(0.5, 100_000, 1e-6), (1.5, 20_000, 1e-6)])
def test_povzner_lhs_dense_oracle_unequal(s, n_tau, tol):
    v, vs = [0.3, -1.0, 2.0], [1.0, 0.5, 0.0]
    val, _ = povzner_lhs(v, vs, 0.3, 0.7, 3, s)
    ref = povzner_lhs_dense(v, vs, 0.3, 0.7, 3, s, n_tau=n_tau)
    assert val == pytest.approx(ref, rel=tol)


def test_lambda1_example():
    assert povzner_lambda1(0.5, 0.5, 1.0, 1.0) == pytest.approx(0.1875, rel=1e-15)


def test_povzner_rhs_at_origin():
    c = povzner_constants(0.5, 0.5, 3, 1.0)
    expected = -c.lambda1 * 3 ** 0.5 * 2 + c.lambda2 * sum(
        math.comb(3, a) * (3 ** 0.5 / (3 - a) ** 1.5 + 1 / a) * 2 for a in (1, 2))
    assert povzner_rhs([0, 0, 0], [0, 0, 0], 0.5, 0.5, 3, 1.0) == pytest.approx(expected, rel=1e-14)


@given(st.integers(2, 6), st.sampled_from([0.5, 1.0, 1.5]), st.floats(0.02, 0.98),
       st.lists(st.floats(-30, 30), min_size=6, max_size=6))
def test_povzner_inequality_property(n, s, mi, comps):
    v, vs = np.array(comps[:3]), np.array(comps[3:])
    lhs, err = povzner_lhs(v, vs, mi, 1 - mi, n, s)
    assert lhs <= povzner_rhs(v, vs, mi, 1 - mi, n, s) + 3 * err


def test_gamma_weights_examples():
    assert u_weight(1.0, 4) == pytest.approx(24 / math.gamma(4.5), rel=1e-14)
    assert u_weight(1.0, 4) == pytest.approx(2.0633, abs=1e-4)
    for k in (1, 3.5, 10):
        assert u_weight(0.0, k) == pytest.approx(1.0, rel=1e-14)
    assert math.gamma(2) * math.gamma(1.5) / math.gamma(3.5) == pytest.approx(0.266667, abs=1e-6)
    half, _ = integrate.quad(lambda x: x * (1 - x) ** 0.5, 0.5, 1, epsabs=1e-14)
    assert beta_upper_half(2.0, 1.5) == pytest.approx(half, rel=1e-12)
    K, L = gamma_moment_weights(1.0, 3, 1)
    kq, _ = integrate.quad(lambda x: x * (1 - x) ** 0.5, 0.5, 1, epsabs=1e-14)
    lq, _ = integrate.quad(lambda x: x ** 2, 0.5, 1)
    assert K == pytest.approx(2 * kq, rel=1e-12)
    assert L == pytest.approx((2 / np.pi) * 2 * lq, rel=1e-12)
    with pytest.raises(ValueError):
        gamma_moment_weights(1.0, 3, 3)


# ------------------------------------------------------------ moment ODE

def test_momlem_rhs_examples():
    orders = default_orders(np.ones((2, 2)), 4)
    tab = MomentTable(np.array([0.0]), orders, np.zeros((1, 2, len(orders))))
    tab.values[0, :, tab.order_index(0)] = [1.0, 2.0]
    assert momlem_rhs(tab, 0, 3, 0, 1, 1.3, 0.7, 1.0, 1.0) == 0.0
    pts = _point_table([0.4, 0.6], orders, times=(0.0,))
    s, lam, C1, C2 = 1.0, 1.0, 0.3, 0.9
    # all brackets equal 1: S_2 = binom(2,1) 2^(s/2) (0.6 * 0.4 + 0.4 * 0.6)
    S2 = 2 * 2 ** 0.5 * (0.6 * 0.4 + 0.4 * 0.6)
    expected = -C1 * 2 ** 0.5 * (0.4 + 0.6) + C2 * S2
    assert momlem_rhs(pts, 0, 2, 0, 1, C1, C2, s, lam) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(KeyError):
        momlem_rhs(pts, 0, 12, 0, 1, C1, C2, s, lam)


def test_interp_examples():
    assert interp_mixed(3.0, 3.0, 0.7) == 1.0
    assert interp_mixed(2, 4, 2) == 0.5
    with pytest.raises(ValueError):
        interp_mixed(4, 2, 1)


@st.composite
def discrete_pair(draw):
    k = draw(st.integers(1, 5))
    br = lambda: np.sqrt(1 + np.array(draw(st.lists(st.floats(0, 20), min_size=k, max_size=k))) ** 2)
    w = lambda: np.array(draw(st.lists(st.floats(1e-3, 1), min_size=k, max_size=k)))
    a = draw(st.floats(0, 4))
    return br(), w(), br(), w(), a, a + draw(st.floats(0, 4)), draw(st.floats(0.05, 3))


@given(discrete_pair())
def test_mixed_interpolation_property(d):
    bf, wf, bg, wg, a, b, beta = d
    lhs, rhs = mixed_interp_sides(lambda q: float(np.sum(wf * bf ** q)), lambda q: float(np.sum(wg * bg ** q)),
                                  a, b, beta)
    assert lhs <= rhs * (1 + 1e-12)


def test_super_solution_examples():
    ode = BernoulliODE(1.0, 1.0, 1.0)
    t = np.array([0.1, 1.0, 7.0])
    np.testing.assert_allclose(super_solution(ode, t), 1 + 1 / t, rtol=1e-15)
    odd = BernoulliODE(2.0, 3.0, 0.5)
    assert super_solution(odd, 1e12) == pytest.approx((3 / 2) ** (1 / 1.5), rel=1e-6)
    tt = np.linspace(1e-3, 20, 4000)
    assert np.all(1 / np.tanh(tt) <= 1 + 1 / tt)


def test_integrate_bernoulli_examples():
    t, x = integrate_bernoulli(BernoulliODE(1.0, 0.0, 1.0, 1.0), 5.0, 1e-4)
    assert np.max(np.abs(x - 1 / (1 + t))) < 1e-8
    ode = BernoulliODE(2.0, 3.0, 0.7)
    eq = BernoulliODE(2.0, 3.0, 0.7, ode.equilibrium)
    _, x = integrate_bernoulli(eq, 2.0, 1e-3)
    assert np.max(np.abs(x - eq.equilibrium)) < 1e-10
    ode = BernoulliODE(1.0, 1.0, 1.0, 10.0)
    t, x = integrate_bernoulli(ode, 5.0, 1e-4)
    assert np.all(x[1:] <= 1 + 1 / t[1:])
    with pytest.raises(ValueError):
        integrate_bernoulli(ode, 1.0, 0.0)
    with pytest.raises(FloatingPointError):
        integrate_bernoulli(BernoulliODE(1.0, 1.0, 3.0, 100.0), 1.0, 0.5)


def test_propagation_bound_examples():
    assert propagation_bound(BernoulliODE(2.0, 8.0, 1.0, 0.0)) == pytest.approx(2.0)
    assert propagation_bound(BernoulliODE(1.0, 1.0, 1.0, 1e9)) == 1e9
    assert propagation_bound(BernoulliODE(4.0, 1.0, 1.0, 0.1)) == pytest.approx(0.5)


@given(st.floats(0.2, 3), st.floats(0.1, 3), st.floats(0.3, 2), st.floats(0, 6))
def test_comparison_property(A, B, c, x0):
    ode = BernoulliODE(A, B, c, x0)
    t, x = integrate_bernoulli(ode, 1.0, 2e-3)
    assert np.all(x[1:] <= super_solution(ode, t[1:]) + 1e-9)
    assert np.all(x <= propagation_bound(ode) + 1e-9)


# ------------------------------------------------------------ exponential series

LAM1 = np.ones((2, 2))


def test_exp_series_zero_higher_moments():
    tab = _point_table([0.4, 0.6])
    tab.values[:, :, tab.orders > 0] = 0.0
    ser = exp_series(tab, 1, 0.5, 1.0, 8, "generation", LAM1, LAM1)
    assert ser.E == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("variant", ["generation", "propagation"])
@pytest.mark.parametrize("alpha", [1.0, 1.5])
def test_exp_series_point_mass_oracle(variant, alpha):
    tab = _point_table([0.4, 0.6])
    sigma, t, p = 0.7, 0.5, 8
    base = sigma * t if variant == "generation" else sigma
    direct = sum(base ** (2 * n) / math.factorial(n) ** alpha for n in range(p + 1))
    ser = exp_series(tab, 1, sigma, alpha, p, variant, LAM1, LAM1)
    assert ser.E == pytest.approx(1.0 * direct, rel=1e-12)
    if variant == "generation":
        Hd = sum(n * base ** (2 * n - 1) / math.factorial(n) ** alpha for n in range(1, p + 1))
        assert ser.H[0] == pytest.approx(0.4 * Hd, rel=1e-12)


@given(st.floats(0.01, 1.0), st.floats(1.0, 2.0), st.integers(2, 9), st.floats(0, 1))
def test_exp_series_monotone_in_p_and_prop2(sigma, alpha, p, t):
    rng = np.random.default_rng(int(sigma * 1e6))
    br = [np.sqrt(1 + rng.exponential(2.0, 40) ** 2) for _ in range(2)]
    w = [rng.random(40) for _ in range(2)]
    tab = table_from_samples([0.0, t], [[(b, x) for b, x in zip(br, w)]] * 2, default_orders(LAM1, 10), [0.5, 0.5])
    a = exp_series(tab, 1, sigma, alpha, p, "generation", LAM1, LAM1)
    b = exp_series(tab, 1, sigma, alpha, p + 1, "generation", LAM1, LAM1)
    assert b.E >= a.E
    ser = exp_series(tab, 1, sigma, alpha, p, "propagation", LAM1, LAM1)
    for i in range(2):
        for j in range(2):
            lhs, rhs = prop2_sides(ser, tab, 1, i, j, 1.0)
            assert lhs >= rhs - 1e-12 * max(abs(lhs), abs(rhs))


def test_exp_series_rejects_bad_inputs():
    tab = _point_table([1.0], default_orders(np.ones((1, 1)), 10))
    with pytest.raises(ValueError):
        exp_series(tab, 0, 1.5, 1.0, 8, "generation", np.ones((1, 1)), np.ones((1, 1)))
    with pytest.raises(ValueError):
        exp_series(tab, 0, 0.5, 1.0, 8, "other", np.ones((1, 1)), np.ones((1, 1)))


def test_exp_series_overflow_flag():
    tab = _point_table([1.0], default_orders(np.ones((1, 1)), 10))
    tab.values[:] = 1e300
    tab.values[:, :, 0] = 1.0
    ser = exp_series(tab, 0, 1.0, 1.0, 8, "propagation", np.ones((1, 1)), np.ones((1, 1)))
    assert ser.overflow


def test_exp_equivalence_i_examples():
    rng = np.random.default_rng(0)
    br = np.sqrt(1 + rng.exponential(1.0, 200) ** 2)
    w = rng.random(200) / 200
    sup, expint, bound = exp_equivalence_i([(br, w)], 0.3, 1.0)
    direct = sum(np.sum(w * np.exp(n * np.log(0.15 * br ** 2) - math.lgamma(n + 1))) for n in range(400))
    assert expint == pytest.approx(direct, rel=1e-10)
    assert bound == pytest.approx(2 * sup, rel=1e-12)
    assert expint <= bound
    one = [(np.ones(1), np.array([0.7]))]
    sig0 = (2 * math.log(2)) ** 1.5 * 0.999
    _, e, _ = exp_equivalence_i(one, sig0, 1.5)
    assert e == pytest.approx(0.7 * math.exp(sig0 ** (1 / 1.5) / 2), rel=1e-14) and e <= 2 * 0.7


def test_exp_equivalence_i_gaussian():
    rng = np.random.default_rng(5)
    v = rng.standard_normal((200_000, 3))
    br = np.sqrt(1 + np.sum(v * v, axis=1))
    w = np.full(len(br), 1 / len(br))
    sup, expint, bound = exp_equivalence_i([(br, w)], 0.1, 1.0)
    assert expint <= bound


def test_sigma1_exhaustive_oracle():
    assert exp_equivalence_ii_sigma1(1.0, 0.5, 2.0, 2) == pytest.approx(phi_sum_sigma1(1.0, 0.5, 2.0, 2), rel=1e-12)
    vals = [exp_equivalence_ii_sigma1(2.0, 0.5, K, 2) for K in (1, 10, 1e3, 1e8)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    limit = 0.5 * 2 * 0.5 ** 2 * 0.5
    assert vals[-1] <= limit


def test_sobolev_exponents():
    q, th = sobolev_interp_exponents(3, 1.0, 1.0)
    assert q == pytest.approx(8 / 3) and th == pytest.approx(0.75)
    q, _ = sobolev_interp_exponents(3, 1.0, 2 / 3)
    assert q == pytest.approx(3.0)
    with pytest.raises(ValueError):
        sobolev_interp_exponents(3, 1.0, 0.5)


@given(st.integers(2, 6), st.floats(0.05, 1.95), st.floats(0, 1))
def test_sobolev_identity(d, s, frac):
    alpha = 1 - s / d + frac * s / d
    q, th = sobolev_interp_exponents(d, s, alpha)
    assert th * q * alpha == pytest.approx(2.0, rel=1e-12)
    assert q > 2 and 0 < th <= 1 + 1e-15


def test_convolution_floor_single_atom():
    c = convolution_floor([[0, 0, 0]], [1.0], 1.0, 1.0, [[0.0, 0, 0], [3.0, 0, 4.0]])
    # |v|/<v> is 0 at the origin
    assert c == 0.0
    c = convolution_floor([[0, 0, 0]], [1.0], 1.0, 1.0, [[3.0, 0, 4.0]])
    assert c == pytest.approx(5 / math.sqrt(26))
