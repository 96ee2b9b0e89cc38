"""Exercises the exact expression kernel: parsing, printing, calculus
operations, canonicalization, and the error taxonomy."""

import random
from fractions import Fraction

import pytest

from invlag.exprcore import (ContextMismatchError, Expr, ExprContext,
                             ExprSyntaxError, JetOrderError,
                             NotPolynomialError, PoleError,
                             UnknownIdentifierError, ZeroDenominatorError,
                             convert)
from invlag.numeric import (central_difference, sample_point, seeded_rng,
                            nonzero_somewhere)

from exprgen import random_expr, rearranged, small_fraction


def test_parse_product_monomial():
    ctx = ExprContext(3)
    e = ctx.parse("q2*v1*v3")
    assert str(e) == "q2*v1*v3"
    assert e == ctx.var(ctx.q(2)) * ctx.var(ctx.v(1)) * ctx.var(ctx.v(3))


def test_parse_zero_literal():
    ctx = ExprContext(3)
    assert ctx.parse("0").is_zero()
    assert ctx.parse("q1 - q1").is_zero()


def test_parse_rational_with_denominator():
    ctx = ExprContext(3)
    e = ctx.parse("v1^2 - (1/q2)*v2*v3")
    assert e == ctx.parse("(q2*v1^2 - v2*v3)/q2")
    assert not e.is_polynomial_in(ctx.q(2))
    assert e.is_polynomial_in(ctx.v(1))


def test_parse_print_parse_is_identity_on_handpicked():
    ctx = ExprContext(2, parameters=("a", "b"))
    for text in ["q1", "-3/4", "a*q1^2 + b*q1*q2", "(q1 + 1)/(q2^2)",
                 "1/2*v1^2 - 1/2*v2^2", "(q1^2 - q2^2)/(q1 + q2)"]:
        e = ctx.parse(text)
        assert ctx.parse(str(e)) == e


def test_gcd_reduction_happens():
    ctx = ExprContext(2)
    e = ctx.parse("(q1^2 - q2^2)/(q1 + q2)")
    assert e == ctx.parse("q1 - q2")


def test_denominator_is_monic():
    ctx = ExprContext(2)
    e = ctx.parse("q1/(2*q2 + 2)")
    assert str(e) == "(1/2*q1)/(q2 + 1)"


def test_diff_monomial():
    ctx = ExprContext(3)
    e = ctx.parse("q2*v1*v3")
    assert e.diff(ctx.v(1)) == ctx.parse("q2*v3")


def test_diff_quotient():
    ctx = ExprContext(3)
    e = ctx.parse("1/q2")
    assert e.diff(ctx.q(2)) == ctx.parse("-1/q2^2")


def test_diff_linearity():
    ctx = ExprContext(2, parameters=("a", "b"))
    e = ctx.parse("a*q1^2 + b*q1*q2")
    assert e.diff(ctx.q(1)) == ctx.parse("2*a*q1 + b*q2")


def test_subst_scaling():
    ctx = ExprContext(3, parameters=("s",))
    e = ctx.parse("v1*v3")
    scaled = e.subst({ctx.v(1): ctx.parse("s*v1"), ctx.v(3): ctx.parse("s*v3")})
    assert scaled == ctx.parse("s^2*v1*v3")


def test_subst_second_order_jet():
    ctx = ExprContext(3, max_jet_order=2)
    e = ctx.parse("d2q1 - q2*v1*v3")
    assert e.subst({ctx.jet(1, 2): ctx.parse("q2*v1*v3")}).is_zero()


def test_subst_empty_map_is_identity():
    ctx = ExprContext(2)
    e = ctx.parse("(q1 + q2)/(q1*q2)")
    assert e.subst({}) == e


def test_subst_rejects_zero_denominator():
    ctx = ExprContext(2)
    e = ctx.parse("1/q1")
    with pytest.raises(ZeroDenominatorError):
        e.subst({ctx.q(1): ctx.parse("q2 - q2")})


def test_is_zero_of_derivative_difference():
    ctx = ExprContext(2)
    f = ctx.parse("(q1^2 + q2)/(q2 + 3)")
    assert (f.diff(ctx.v(1)) - f.diff(ctx.v(1))).is_zero()


def test_eval_num_exact():
    ctx = ExprContext(3)
    e = ctx.parse("q2*v1*v3")
    value = e.eval_num({v: Fraction(0) for v in ctx.all_varids()}
                       | {ctx.q(2): Fraction(2), ctx.v(1): Fraction(3),
                          ctx.v(3): Fraction(5)})
    assert value == 30


def test_eval_num_pole():
    ctx = ExprContext(1)
    e = ctx.parse("1/q1")
    with pytest.raises(PoleError):
        e.eval_num({ctx.q(1): Fraction(0), ctx.v(1): Fraction(1)})


def test_integrate_power():
    ctx = ExprContext(1, parameters=("s",))
    e = ctx.parse("s^2")
    assert e.integrate_poly(ctx.param("s")) == ctx.parse("1/3*s^3")


def test_integrate_homotopy_weight():
    ctx = ExprContext(1, parameters=("s", "c"))
    anti = ctx.parse("(1 - s)*s^2*c").integrate_poly(ctx.param("s"))
    point = {v: Fraction(0) for v in ctx.all_varids()}
    at1 = anti.eval_num(point | {ctx.param("s"): Fraction(1), ctx.param("c"): Fraction(1)})
    at0 = anti.eval_num(point | {ctx.param("s"): Fraction(0), ctx.param("c"): Fraction(1)})
    assert at1 - at0 == Fraction(1, 12)


def test_integrate_rejects_rational():
    ctx = ExprContext(2)
    with pytest.raises(NotPolynomialError):
        ctx.parse("1/q2").integrate_poly(ctx.q(2))


def test_syntax_error_carries_position():
    ctx = ExprContext(2)
    with pytest.raises(ExprSyntaxError) as err:
        ctx.parse("q1 + * q2")
    assert err.value.position == 5


def test_unknown_identifier_rejected():
    ctx = ExprContext(2)
    with pytest.raises(UnknownIdentifierError):
        ctx.parse("q7")
    with pytest.raises(UnknownIdentifierError):
        ctx.parse("zeta * q1")
    with pytest.raises(UnknownIdentifierError):
        ctx.parse("t + q1")


def test_jet_order_above_context_rejected():
    ctx = ExprContext(2, max_jet_order=1)
    with pytest.raises(JetOrderError):
        ctx.parse("d2q1")
    deep = ExprContext(2, max_jet_order=4)
    assert str(deep.parse("d4q2")) == "d4q2"


def test_division_by_zero_rejected_at_parse():
    ctx = ExprContext(2)
    with pytest.raises(ZeroDenominatorError):
        ctx.parse("q1/(q2 - q2)")


def test_chained_power_needs_parentheses():
    ctx = ExprContext(1)
    with pytest.raises(ExprSyntaxError):
        ctx.parse("q1^2^3")
    assert ctx.parse("(q1^2)^3") == ctx.parse("q1^6")


def test_negative_exponent_builds_reciprocal():
    ctx = ExprContext(2)
    assert ctx.parse("q2^(-2)") == ctx.one / ctx.parse("q2^2")


def test_convert_between_contexts():
    src = ExprContext(2)
    dst = ExprContext(3, parameters=("a",))
    e = src.parse("q1*v2 + 2")
    moved = convert(e, dst)
    assert moved == dst.parse("q1*v2 + 2")
    with pytest.raises(ContextMismatchError):
        convert(dst.parse("a*q3"), src)


def test_parser_roundtrip_random_trees():
    ctx = ExprContext(2, parameters=("a",))
    rng = random.Random(20260814)
    for _ in range(300):
        e = random_expr(ctx, rng, depth=3)
        assert ctx.parse(str(e)) == e


def test_diff_commutes_on_random_trees():
    ctx = ExprContext(2, parameters=("a",))
    rng = random.Random(97)
    varids = ctx.all_varids()
    for _ in range(120):
        e = random_expr(ctx, rng, depth=3)
        x, y = rng.choice(varids), rng.choice(varids)
        assert e.diff(x).diff(y) == e.diff(y).diff(x)


def test_canonical_soundness_thousand_pairs():
    """Structural equality of canonical forms must agree with exact
    evaluation at sample points, for a thousand seeded random pairs."""
    ctx = ExprContext(2, parameters=("a",))
    rng = random.Random(1729)
    for trial in range(1000):
        e1 = random_expr(ctx, rng, depth=3)
        if trial % 3 == 0:
            e2 = rearranged(e1, ctx, rng)
            assert (e1 - e2).is_zero(), f"rearrangement changed value (trial {trial})"
        else:
            e2 = random_expr(ctx, rng, depth=3)
        gap = e1 - e2
        if gap.is_zero():
            for _ in range(5):
                pt = sample_point(ctx, rng)
                assert gap.eval_num(pt) == 0
        else:
            samples = []
            for _ in range(5):
                pt = sample_point(ctx, rng, avoid=(gap,))
                samples.append(gap.eval_num(pt))
            if not any(samples):
                assert nonzero_somewhere(gap, rng), \
                    f"claimed nonzero but no witness found (trial {trial})"


def test_diff_matches_central_differences():
    ctx = ExprContext(2, parameters=("a",))
    rng = seeded_rng(4242)
    checked = 0
    while checked < 40:
        e = random_expr(ctx, rng, depth=3)
        x = rng.choice(ctx.all_varids())
        try:
            pt = sample_point(ctx, rng, avoid=(e,))
            numeric = central_difference(e, x, pt)
            exact = e.diff(x).eval_num(pt)
        except PoleError:
            continue
        tol = Fraction(1, 10**6) * (1 + abs(exact))
        assert abs(numeric - exact) <= tol
        checked += 1
