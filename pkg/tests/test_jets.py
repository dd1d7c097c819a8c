import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from renvol import jets
from renvol.errors import ContractViolation, DomainError
from renvol.jets import Jet, jet_add, jet_compose_univariate, jet_mul, jet_partial, jet_scale

X, Y, Z = sp.symbols("x y z")
SYMS = (X, Y, Z)


def sympy_coeffs(expr, dim, order):
    """Taylor coefficients f_alpha / alpha! at the origin, in the jet's own ordering."""
    space = jets.jet_space(dim, order)
    out = []
    for alpha in space.alphas:
        d = expr
        for v, e in zip(SYMS[:dim], alpha):
            if e:
                d = sp.diff(d, v, e)
        val = d.subs({v: 0 for v in SYMS[:dim]})
        out.append(float(val) / math.prod(math.factorial(e) for e in alpha))
    return np.array(out)


def poly_expr(terms, dim):
    return sum(c * sp.prod([s**e for s, e in zip(SYMS[:dim], a)]) for a, c in terms.items())


def polynomials(dim, degree):
    space = jets.jet_space(dim, degree)
    coef = st.integers(-4, 4)
    return st.dictionaries(st.sampled_from(space.alphas), coef, min_size=1, max_size=6)


# -- examples -----------------------------------------------------------------


def test_product_of_conjugates():
    x = Jet.variable(1, 2, 0)
    out = (1 + x) * (1 - x)
    np.testing.assert_array_equal(out.coeffs, [1.0, 0.0, -1.0])


def test_additive_identity():
    a = Jet.from_polynomial(2, 3, {(1, 0): 2.0, (1, 2): -1.5})
    assert np.array_equal(jet_add(a, Jet(2, 3)).coeffs, a.coeffs)


def test_binomial_square():
    x, y = Jet.variable(2, 2, 0), Jet.variable(2, 2, 1)
    s = (x + y) * (x + y)
    assert s.coefficient((1, 1)) == 2.0
    assert s.coefficient((2, 0)) == 1.0


def test_exp_taylor():
    out = Jet.variable(1, 2, 0).exp()
    np.testing.assert_allclose(out.coeffs, [1.0, 1.0, 0.5], rtol=0, atol=1e-16)


def test_reciprocal_of_constant():
    out = Jet.constant(1, 2, 2.0).reciprocal()
    np.testing.assert_array_equal(out.coeffs, [0.5, 0.0, 0.0])


def test_sqrt_one_plus_x():
    out = (1 + Jet.variable(1, 3, 0)).sqrt()
    np.testing.assert_allclose(out.coeffs, [1.0, 0.5, -0.125, 0.0625], rtol=1e-15)


def test_partial_of_monomial():
    a = Jet.from_polynomial(2, 3, {(2, 1): 1.0})
    d = a.partial(0)
    assert d.order == 2
    expected = Jet.from_polynomial(2, 2, {(1, 1): 2.0})
    np.testing.assert_array_equal(d.coeffs, expected.coeffs)


def test_partial_of_constant_is_zero():
    assert not jet_partial(Jet.constant(3, 2, 5.0), 1).coeffs.any()


def test_coefficient_count_and_value():
    a = Jet.from_polynomial(3, 4, {(0, 0, 0): 1.25, (1, 1, 0): 3.0})
    assert a.coeffs.size == math.comb(3 + 4, 4)
    assert a.value == 1.25


def test_derivative_multiplies_factorials():
    a = Jet.from_polynomial(2, 4, {(2, 1): 1.0})
    assert a.derivative((2, 1)) == 2.0
    assert a.coefficient((2, 1)) == 1.0


def test_truncation_drops_high_degree_terms():
    a = Jet.from_polynomial(1, 2, {(3,): 1.0, (1,): 1.0})
    np.testing.assert_array_equal(a.coeffs, [0.0, 1.0, 0.0])


def test_scale():
    a = Jet.from_polynomial(2, 2, {(1, 0): 1.5})
    assert jet_scale(a, -2.0).coefficient((1, 0)) == -3.0


# -- errors -------------------------------------------------------------------


def test_mismatched_jets_raise():
    with pytest.raises(ContractViolation):
        jet_mul(Jet(2, 3), Jet(2, 2))
    with pytest.raises(ContractViolation):
        jet_add(Jet(2, 3), Jet(3, 3))


def test_partial_of_order_zero_raises():
    with pytest.raises(ContractViolation):
        Jet.constant(2, 0, 1.0).partial(0)


def test_partial_direction_out_of_range():
    with pytest.raises(ContractViolation):
        Jet(2, 2).partial(2)


@pytest.mark.parametrize("fname", ["log", "sqrt"])
def test_domain_errors(fname):
    with pytest.raises(DomainError):
        jet_compose_univariate(fname, Jet.constant(1, 2, -1.0))


def test_reciprocal_of_zero_raises():
    with pytest.raises(DomainError):
        Jet(1, 2).reciprocal()


def test_unknown_function():
    with pytest.raises(ContractViolation):
        Jet(1, 2).compose("tanh")


def test_order_cap():
    with pytest.raises(ContractViolation):
        jets.jet_space(2, jets.MAX_ORDER + 1)


def test_jets_are_immutable():
    a = Jet.variable(1, 2, 0)
    with pytest.raises(AttributeError):
        a.coeffs = None
    with pytest.raises(ValueError):
        a.coeffs[0] = 1.0


# -- symbolic oracle ------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(polynomials(2, 4), polynomials(2, 4))
def test_product_matches_sympy(p, q):
    a, b = Jet.from_polynomial(2, 4, p), Jet.from_polynomial(2, 4, q)
    expected = sympy_coeffs(sp.expand(poly_expr(p, 2) * poly_expr(q, 2)), 2, 4)
    np.testing.assert_allclose((a * b).coeffs, expected, rtol=0, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(polynomials(2, 3), st.sampled_from(["exp", "sin", "cos"]))
def test_compose_matches_sympy(p, fname):
    p = dict(p)
    p[(0, 0)] = 0.0
    a = Jet.from_polynomial(2, 4, p)
    expr = getattr(sp, fname)(poly_expr(p, 2))
    expected = sympy_coeffs(expr, 2, 4)
    got = a.compose(fname).coeffs
    np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-12 * np.max(np.abs(expected)))


@pytest.mark.parametrize("fname,p", [("log", None), ("sqrt", None), ("reciprocal", None), ("power", 2.5), ("power", -3)])
def test_positive_base_functions_match_sympy(fname, p):
    terms = {(0, 0): 2.0, (1, 0): 0.5, (0, 1): -0.25, (1, 1): 0.75, (0, 2): 0.3}
    a = Jet.from_polynomial(2, 4, terms)
    e = poly_expr(terms, 2)
    builders = {"log": sp.log, "sqrt": sp.sqrt, "reciprocal": lambda v: 1 / v, "power": lambda v: v ** sp.nsimplify(p)}
    expr = builders[fname](e)
    np.testing.assert_allclose(a.compose(fname, p).coeffs, sympy_coeffs(expr, 2, 4), rtol=1e-13, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(polynomials(3, 4))
def test_mixed_partials_commute(p):
    a = Jet.from_polynomial(3, 4, p)
    xy = a.partial(0).partial(1)
    yx = a.partial(1).partial(0)
    np.testing.assert_array_equal(xy.coeffs, yx.coeffs)
    expected = sympy_coeffs(sp.diff(poly_expr(p, 3), X, Y), 3, 2)
    np.testing.assert_allclose(xy.coeffs, expected, rtol=0, atol=1e-12)


# -- calculus rules -------------------------------------------------------------


def random_jet(rng, dim, order, scale=1.0):
    return Jet(dim, order, scale * rng.uniform(-1.0, 1.0, jets.jet_space(dim, order).size))


def assert_rel_close(a, b, rtol):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1.0)
    assert np.max(np.abs(a - b)) <= rtol * scale


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 6))
def test_product_rule(seed, dim, order):
    rng = np.random.default_rng(seed)
    a, b = random_jet(rng, dim, order), random_jet(rng, dim, order)
    lo = jets.jet_space(dim, order - 1)
    for d in range(dim):
        lhs = (a * b).partial(d)
        # a and b truncated to the derivative's order
        a_lo, b_lo = Jet(dim, order - 1, a.coeffs[: lo.size]), Jet(dim, order - 1, b.coeffs[: lo.size])
        rhs = a.partial(d) * b_lo + a_lo * b.partial(d)
        assert_rel_close(lhs.coeffs, rhs.coeffs, 1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 6))
def test_chain_rule_for_exp(seed, dim, order):
    rng = np.random.default_rng(seed)
    a = random_jet(rng, dim, order)
    lo = jets.jet_space(dim, order - 1)
    e = a.exp()
    for d in range(dim):
        lhs = e.partial(d)
        rhs = Jet(dim, order - 1, e.coeffs[: lo.size]) * a.partial(d)
        assert_rel_close(lhs.coeffs, rhs.coeffs, 1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(0, 5))
def test_exp_log_round_trip(seed, dim, order):
    rng = np.random.default_rng(seed)
    a = random_jet(rng, dim, order, 0.5)
    assert_rel_close(a.exp().log().coeffs, a.coeffs, 1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(0, 5))
def test_reciprocal_inverts(seed, dim, order):
    rng = np.random.default_rng(seed)
    a = random_jet(rng, dim, order, 0.3) + 2.0
    one = a * a.reciprocal()
    assert abs(one.value - 1.0) < 1e-15
    assert np.max(np.abs(one.coeffs[1:]), initial=0.0) < 1e-14


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sin_cos_identity(seed):
    rng = np.random.default_rng(seed)
    a = random_jet(rng, 2, 5)
    s = a.sin() * a.sin() + a.cos() * a.cos()
    assert_rel_close(s.coeffs, Jet.constant(2, 5, 1.0).coeffs, 1e-14)


# -- batched layer --------------------------------------------------------------


def test_contracted_product_matches_pointwise_products():
    rng = np.random.default_rng(3)
    s = jets.jet_space(2, 3)
    a = rng.normal(size=(4, s.size, 3, 5))
    b = rng.normal(size=(4, s.size, 5, 2))
    got = jets.mul(s, a, b, "ij,jk->ik")
    for z in range(4):
        for i in range(3):
            for k in range(2):
                acc = Jet(2, 3)
                for j in range(5):
                    acc = acc + Jet(2, 3, a[z, :, i, j]) * Jet(2, 3, b[z, :, j, k])
                np.testing.assert_allclose(got[z, :, i, k], acc.coeffs, rtol=1e-13, atol=1e-13)


def test_repeated_index_contraction_uses_einsum_semantics():
    rng = np.random.default_rng(4)
    s = jets.jet_space(1, 2)
    a = rng.normal(size=(2, s.size, 3, 3))
    b = rng.normal(size=(2, s.size))
    got = jets.mul(s, a, b, "ii,->")
    trace = Jet(1, 2, a[0, :, 0, 0]) + Jet(1, 2, a[0, :, 1, 1]) + Jet(1, 2, a[0, :, 2, 2])
    np.testing.assert_allclose(got[0], (trace * Jet(1, 2, b[0])).coeffs, rtol=1e-13)


def test_result_order_is_the_smaller():
    s = jets.jet_space(2, 4)
    a = np.ones((1, s.sizes[4]))
    b = np.ones((1, s.sizes[2]))
    assert jets.order_of(s, jets.mul(s, a, b)) == 2


def test_raw_derivatives():
    s = jets.jet_space(2, 3)
    a = Jet.from_polynomial(2, 3, {(2, 1): 1.0}).coeffs[None]
    raw = jets.raw_derivatives(s, a)
    assert raw[0, s.index[(2, 1)]] == 2.0


def test_chart_gradient_zero_for_missing_axes():
    s = jets.jet_space(1, 2)
    a = jets.variable(s, 0, [0.5])
    g = jets.chart_gradient(s, a, (None, 0, None))
    np.testing.assert_array_equal(g[0, 0], [0.0, 1.0, 0.0])
