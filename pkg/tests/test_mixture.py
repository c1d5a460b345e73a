import numpy as np
import pytest
from hypothesis import given, strategies as st

from mixkinetic.mixture import (ConfigError, InitSpec, KernelMatrix, MixtureConfig, SpeciesParams,
                                bracket, derive_exponents, mixture_from_dict, normalize_masses,
                                validate_config)

pos = st.floats(1e-3, 1e3, allow_nan=False)


def test_normalize_examples():
    assert normalize_masses([1, 1]) == [0.5, 0.5]
    np.testing.assert_allclose(normalize_masses([2, 3, 5]), [0.2, 0.3, 0.5], rtol=0, atol=1e-16)
    assert normalize_masses([7]) == [1.0]


def test_normalize_rejects_nonpositive_with_index():
    with pytest.raises(ConfigError, match=r"species\[1\]\.mass"):
        normalize_masses([1.0, 0.0])
    with pytest.raises(ConfigError):
        normalize_masses([])


@given(st.lists(pos, min_size=1, max_size=8))
def test_normalize_sum_and_idempotence(raw):
    out = normalize_masses(raw)
    assert abs(sum(out) - 1.0) <= 1e-15
    again = normalize_masses(out)
    np.testing.assert_allclose(again, out, rtol=0, atol=1e-15)
    ratio = np.array(out) / np.array(raw)
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)


def test_bracket_examples():
    assert bracket([0, 0, 0], 0.7) == 1.0
    assert bracket([2, 0, 0], 0.25) == pytest.approx(np.sqrt(2), rel=1e-15)
    assert bracket([1, 1, 1], 1.0) == 2.0


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(1e-6, 1), st.floats(1e-6, 1))
def test_bracket_monotone_in_mass(v, m1, m2):
    lo, hi = sorted((m1, m2))
    assert bracket(v, lo) >= 1.0
    assert bracket(v, lo) <= bracket(v, hi)


def test_derive_exponents_examples():
    k = KernelMatrix(np.array([[1.0, 2.0], [2.0, 0.5]]), np.array([[0.5, 1.5], [1.5, 1.0]]), np.ones((2, 2)))
    ex = derive_exponents(k)
    assert ex.lambda_bar == 0.5 and ex.lambda_dbar == 2.0 and ex.lambda_natural == 2.0
    np.testing.assert_array_equal(ex.lambda_bar_i, [1.0, 0.5])
    assert ex.s_natural == 1.5
    const = derive_exponents(KernelMatrix.uniform(3, 0.7, 1.2))
    assert const.lambda_bar == const.lambda_dbar == const.lambda_natural == 0.7


@st.composite
def kernels(draw):
    n = draw(st.integers(1, 4))
    def sym(lo, hi):
        a = np.array(draw(st.lists(st.floats(lo, hi), min_size=n * n, max_size=n * n))).reshape(n, n)
        return np.triu(a) + np.triu(a, 1).T
    return KernelMatrix(sym(0.01, 2.0), sym(0.01, 1.99), sym(0.1, 3.0)), draw(st.permutations(range(n)))


@given(kernels())
def test_exponents_ordering_and_permutation_invariance(kp):
    k, perm = kp
    ex = derive_exponents(k)
    assert ex.lambda_bar <= ex.lambda_natural <= ex.lambda_dbar
    assert ex.s_bar <= ex.s_natural <= ex.s_dbar
    p = np.array(perm)
    kp_ = KernelMatrix(k.lam[np.ix_(p, p)], k.s[np.ix_(p, p)], k.kappa[np.ix_(p, p)])
    ey = derive_exponents(kp_)
    assert ey.lambda_natural == ex.lambda_natural and ey.s_natural == ex.s_natural
    np.testing.assert_array_equal(ey.lambda_bar_i, ex.lambda_bar_i[p])
    np.testing.assert_array_equal(ey.s_dbar_i, ex.s_dbar_i[p])


def _cfg(lam, s):
    sp = tuple(SpeciesParams(i + 1, 0.5, InitSpec("gaussian", {})) for i in range(2))
    return MixtureConfig(sp, KernelMatrix(np.array(lam, float), np.array(s, float), np.ones((2, 2))))


def test_validate_examples():
    validate_config(_cfg([[1, 1], [1, 1]], [[1, 1], [1, 1]]))
    with pytest.raises(ConfigError, match=r"symmetry violated at \(1,2\)"):
        validate_config(_cfg([[1, 1], [2, 1]], [[1, 1], [1, 1]]))
    with pytest.raises(ConfigError, match=r"s must lie in open interval \(0,2\)"):
        validate_config(_cfg([[1, 1], [1, 1]], [[2.0, 1], [1, 1]]))


def test_validate_collects_every_error():
    try:
        validate_config(_cfg([[3, 1], [2, 1]], [[2.0, 1], [1, 0]]))
    except ConfigError as exc:
        paths = [p for p, _ in exc.errors]
        assert paths.count("kernel.lambda") == 2 and paths.count("kernel.s") == 1
    else:
        pytest.fail("expected ConfigError")


def test_mixture_from_dict_normalizes_and_checks_inits():
    cfg = mixture_from_dict({"species": [{"mass": 1}, {"mass": 3}], "kernel": {"lambda": 1, "s": 1}})
    np.testing.assert_allclose(cfg.masses, [0.25, 0.75])
    assert cfg.pair(0, 1) == (1.0, 1.0, 1.0)
    bad = {"species": [{"mass": 1, "init": {"kind": "heavy_tail", "params": {"p": 5}}}],
           "kernel": {"lambda": 1, "s": 1}}
    with pytest.raises(ConfigError, match="exceed 5"):
        mixture_from_dict(bad)
