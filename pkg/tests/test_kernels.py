import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from lognormal_star import catalog
from lognormal_star.kernels import (Degenerate, DivergentTail, EpsilonKernel, LogKernel,
                                    SeedKernel, asymptote_check, epsilon_kernel,
                                    goodness_check, integrate_log, moment_order_bound,
                                    series_K, structure_exponent, telescope_check)


def quad_K(k, r):
    """Oracle: scipy QUADPACK on k(u)/u over [r, inf)."""
    upper = k.support_radius if k.support_radius is not None else np.inf
    if r >= upper:
        return 0.0
    val, _ = integrate.quad(lambda u: k(u) / u, r, upper, epsabs=1e-13, epsrel=1e-13,
                            limit=500)
    return val


KERNELS = [catalog.cone(1.0, 1.0), catalog.cone(0.5, 2.5), catalog.gaussian(1.0),
           catalog.gaussian(0.3), catalog.ou(1.0, 2.0)]


@pytest.mark.parametrize("k", KERNELS, ids=lambda k: f"{k.name}{k.params}")
@pytest.mark.parametrize("r", [1e-3, 0.05, 0.5, 1.7])
def test_K_closed_form_and_quadrature_agree_with_oracle(k, r):
    ref = quad_K(k, r)
    assert integrate_log(k, r) == pytest.approx(ref, abs=1e-9)
    assert integrate_log(k, r, tol=1e-12, use_closed_form=False) == pytest.approx(ref, abs=1e-9)


def test_cone_K_half():
    # ln 2 + 0.5 - 1
    assert abs(integrate_log(catalog.cone(1.0, 1.0), 0.5) - 0.193147180559945) <= 1e-9


def test_cone_K_vanishes_at_support():
    assert integrate_log(catalog.cone(1.0, 1.0), 1.0) == 0.0
    assert integrate_log(catalog.cone(1.0, 1.0), 3.0) == 0.0


@pytest.mark.parametrize("r", [0.1, 1.0, 7.5])
def test_cosine_K_matches_fourier_quadrature(r):
    ref, _ = integrate.quad(lambda u: 1.0 / u, r, np.inf, weight="cos", wvar=1.0)
    assert integrate_log(catalog.cosine(), r) == pytest.approx(ref, abs=1e-9)


def test_constant_kernel_diverges():
    with pytest.raises(DivergentTail):
        integrate_log(catalog.constant(1.0), 0.5)


def test_K_rejects_zero_lag():
    with pytest.raises(ValueError):
        integrate_log(catalog.cone(), 0.0)


def test_custom_kernel_without_closed_forms():
    k = SeedKernel.from_function(lambda u: 1.0 / (1.0 + u ** 2), "cauchy")
    assert k.k0 == 1.0
    for r in (0.2, 3.0):
        # int_r^inf du / (u (1+u^2)) = ln(sqrt(1+r^2)/r)
        exact = math.log(math.sqrt(1 + r * r) / r)
        assert integrate_log(k, r) == pytest.approx(exact, abs=1e-9)


# -- epsilon kernel ----------------------------------------------------------


@pytest.mark.parametrize("k", KERNELS, ids=lambda k: f"{k.name}{k.params}")
@pytest.mark.parametrize("eps", [0.3, 0.5, 0.9])
def test_epsilon_kernel_oracle(k, eps):
    for r in (0.01, 0.4, 1.3):
        upper = r / eps
        if k.support_radius is not None:
            upper = min(upper, k.support_radius)
        ref = integrate.quad(lambda u: k(u) / u, r, upper, epsabs=1e-13)[0] if upper > r else 0.0
        assert epsilon_kernel(k, eps, r) == pytest.approx(ref, abs=1e-9)
        assert epsilon_kernel(k, eps, r, use_closed_form=False) == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("k", KERNELS + [catalog.cosine()], ids=lambda k: k.name)
def test_epsilon_kernel_at_zero_is_limit(k):
    eps = 0.4
    assert epsilon_kernel(k, eps, 0.0) == pytest.approx(k.k0 * math.log(1 / eps), rel=1e-14)
    assert epsilon_kernel(k, eps, 1e-9) == pytest.approx(k.k0 * math.log(1 / eps), rel=1e-6)


def test_epsilon_kernel_rejects_bad_epsilon():
    for eps in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            epsilon_kernel(catalog.cone(), eps, 0.5)


def test_epsilon_kernel_support():
    assert EpsilonKernel(catalog.cone(1.0, 2.0), 0.5).support() == 2.0
    assert EpsilonKernel(catalog.gaussian(), 0.5).support() is None


def test_vectorised_wrappers_match_scalar():
    k = catalog.gaussian(0.7)
    r = np.array([0.0, 0.01, 0.3, 2.0])
    ke = EpsilonKernel(k, 0.5)(r)
    assert np.allclose(ke, [epsilon_kernel(k, 0.5, x) for x in r], atol=1e-12)
    assert np.allclose(LogKernel(k)(r[1:]), [integrate_log(k, x) for x in r[1:]], atol=1e-12)


# -- identities ----------------------------------------------------------------


@pytest.mark.parametrize("eps", [0.3, 0.5, 0.9])
def test_telescoping(eps):
    rep = telescope_check(catalog.cone(1.0, 1.0), eps, np.logspace(-3, 1, 40))
    assert rep.passed and rep.max_residual <= 1e-8


def test_telescope_outside_support_is_zero():
    k = catalog.cone(1.0, 1.0)
    rep = telescope_check(k, 0.9, [10.0])
    assert rep.max_residual == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(0.3, 3.0), st.floats(0.1, 0.95), st.floats(1e-3, 5.0))
def test_telescoping_property(lam2, T, eps, r):
    k = catalog.cone(lam2, T)
    assert telescope_check(k, eps, [r]).max_residual <= 1e-8


@pytest.mark.parametrize("eps", [0.3, 0.5, 0.9])
def test_series_reaches_K_at_cutoff_depth(eps):
    k = catalog.cone(1.0, 1.0)
    for r in (1e-3, 0.05, 0.5):
        N = math.ceil(math.log(1.0 / r) / math.log(1.0 / eps)) + 1  # eps^-N r > T
        assert abs(series_K(k, eps, r, N) - integrate_log(k, r)) <= 1e-8


def test_series_gaussian_converges():
    k = catalog.gaussian(1.0)
    assert series_K(k, 0.5, 0.25, 40) == pytest.approx(integrate_log(k, 0.25), abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(1e-3, 0.9), st.integers(0, 12))
def test_series_partial_sums_increase_to_K(eps, r, N):
    # k >= 0 makes every term nonnegative
    k = catalog.cone(1.0, 1.0)
    a = series_K(k, eps, r, N)
    b = series_K(k, eps, r, N + 1)
    assert a <= b + 1e-15
    assert b <= integrate_log(k, r) + 1e-10


# -- goodness ------------------------------------------------------------------


@pytest.mark.parametrize("k, verdict", [
    (catalog.cone(1.0, 1.0), "good"),
    (catalog.cosine(), "not_good"),
    (catalog.cone(3.0, 1.0), "degenerate"),
    (catalog.gaussian(1.0), "good"),
    (catalog.ou(1.0, 1.0), "good"),
    (catalog.zero(), "good"),
])
def test_goodness_verdicts(k, verdict):
    assert goodness_check(k).verdict == verdict


def test_goodness_of_custom_kernels_uses_suffix_sup():
    slow = SeedKernel.from_function(lambda u: 1.0 / (1.0 + u), "slow")   # theta ~ 1/u^2 ... ln u / u^2
    assert goodness_check(slow).verdict == "good"
    heavy = SeedKernel.from_function(lambda u: u / (1.0 + u), "flat")    # theta ~ 1/u: diverges
    assert goodness_check(heavy).verdict == "not_good"


def test_goodness_report_dict():
    d = goodness_check(catalog.cone(0.5, 1.0)).to_dict()
    assert d["verdict"] == "good" and d["max_moment_order"] == 3.0
    assert d["log_integral"] == 0.0   # theta vanishes beyond T = 1


def test_goodness_log_integral_oracle():
    # theta(x) = lambda2 (1 - x/T) / x is already nonincreasing on (0, T)
    lam2, T = 0.5, 3.0
    ref, _ = integrate.quad(lambda x: math.log(x) * lam2 * (1 - x / T) / x, 1.0, T)
    got = goodness_check(catalog.cone(lam2, T)).log_integral
    # trapezoid on 64 probes per decade with the kink at T between probes
    assert got == pytest.approx(ref, rel=1e-3)


# -- exponents -------------------------------------------------------------------


def test_structure_exponent_values():
    assert structure_exponent(0.5, 2.0) == 1.5
    assert structure_exponent(0.5, 1.0) == 1.0
    assert structure_exponent(0.0, 3.0) == 3.0
    with pytest.raises(ValueError):
        structure_exponent(0.5, -1.0)


@given(st.floats(0.0, 1.99), st.floats(0.0, 5.0))
def test_structure_exponent_is_concave_through_origin_and_one(k0, q):
    assert structure_exponent(k0, 0.0) == 0.0
    assert structure_exponent(k0, 1.0) == pytest.approx(1.0)
    h = 1e-3
    second = (structure_exponent(k0, q + h) - 2 * structure_exponent(k0, q)
              + structure_exponent(k0, max(q - h, 0.0))) / h ** 2
    if q > h:
        assert second == pytest.approx(-k0, abs=1e-4)


def test_moment_order_bound():
    assert moment_order_bound(0.5) == 3.0
    assert moment_order_bound(0.0) == math.inf
    with pytest.raises(Degenerate):
        moment_order_bound(2.0)
    with pytest.raises(ValueError):
        moment_order_bound(-0.1)


@given(st.floats(0.01, 1.99), st.floats(0.0, 1.0))
def test_moment_bound_matches_exponent_identity(k0, gamma):
    # with delta = delta_max, rho = gamma - (gamma^2 + gamma)/(1 + delta) and 1 + rho = xi(1 + gamma)
    delta = moment_order_bound(k0)
    rho = gamma - (gamma ** 2 + gamma) / (1 + delta)
    assert 1 + rho == pytest.approx(structure_exponent(k0, 1 + gamma), abs=1e-12)


@pytest.mark.parametrize("k", [catalog.cone(1.0, 1.0), catalog.gaussian(1.0)], ids=lambda k: k.name)
def test_asymptote_slope(k):
    slope = asymptote_check(k, np.logspace(-6, -2, 30))
    assert abs(slope - k.k0) <= 0.01 * k.k0


def test_asymptote_zero_and_preconditions():
    assert asymptote_check(catalog.zero(), np.logspace(-6, -2, 10)) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        asymptote_check(catalog.cone(), np.logspace(-3, -2, 10))
    with pytest.raises(ValueError):
        asymptote_check(catalog.cone(), [0.0, 0.1, 1.0])


# -- catalog ---------------------------------------------------------------------


def test_make_kernel_is_strict():
    assert catalog.make_kernel("cone", lambda2=0.5).k0 == 0.5
    with pytest.raises(KeyError):
        catalog.make_kernel("triangle")
    with pytest.raises(TypeError):
        catalog.make_kernel("cone", sigma=1.0)
    with pytest.raises(ValueError):
        catalog.make_kernel("cone", T=-1.0)


def test_seed_kernel_is_even_and_cut_at_support():
    k = catalog.cone(1.0, 2.0)
    assert k(-0.5) == k(0.5) == 0.75
    assert k(2.5) == 0.0
    assert catalog.gaussian(2.0).k0 == pytest.approx(catalog.gaussian(2.0)(0.0))
