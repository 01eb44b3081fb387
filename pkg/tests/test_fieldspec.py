import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exprgen import random_expression
from subriem.errors import DomainError, ParseError, UnknownIdentifierError
from subriem.fieldspec import (
    Expr,
    central_gradient,
    compile_jet,
    compile_values,
    eval_with_jet,
    evaluate,
    parse,
)


class TestParsing:
    def test_product_and_gradient(self):
        value, grad = eval_with_jet(parse("q1*q2 + 1", 2), [2.0, 3.0])
        assert value == 7.0
        np.testing.assert_array_equal(grad, [3.0, 2.0])

    @pytest.mark.parametrize(
        "text, q, expected",
        [
            ("-q1^2", [3.0], -9.0),
            ("-(q1^2)", [3.0], -9.0),
            ("(-q1)^2", [3.0], 9.0),
            ("2^3^2", [0.0], 512.0),
            ("1 - 2 - 3", [0.0], -4.0),
            ("8 / 4 / 2", [0.0], 1.0),
            ("2 * 3 + 4 * 5", [0.0], 26.0),
            ("q1^-1", [4.0], 0.25),
            ("sqrt(q1) * exp(0)", [9.0], 3.0),
            ("1e-3 * 2.5E2", [0.0], 0.25),
        ],
    )
    def test_precedence(self, text, q, expected):
        assert evaluate(parse(text, 1), q) == pytest.approx(expected, rel=1e-15)

    def test_unknown_identifier_offset(self):
        with pytest.raises(UnknownIdentifierError) as info:
            parse("q1 + q3", 2)
        assert info.value.offset == 5

    def test_unknown_function(self):
        with pytest.raises(UnknownIdentifierError) as info:
            parse("tan(q1)", 1)
        assert info.value.offset == 0

    @pytest.mark.parametrize(
        "text, offset",
        [("q1 + * 2", 5), ("(q1", 3), ("q1 2", 3), ("", 0), ("q1 $ 2", 3), ("sin q1", 4)],
    )
    def test_parse_error_offsets(self, text, offset):
        with pytest.raises(ParseError) as info:
            parse(text, 1)
        assert info.value.offset == offset

    def test_offset_counts_bytes(self):
        with pytest.raises(ParseError) as info:
            parse("1 + é", 1)
        assert info.value.offset == 4
        with pytest.raises(ParseError) as info:
            parse("é", 1)
        assert info.value.offset == 0

    def test_string_round_trip(self):
        rnd = random.Random(3)
        for _ in range(200):
            e = parse(random_expression(rnd, 3), 3)
            again = parse(str(e), 3)
            q = [0.3, -0.2, 0.7]
            assert evaluate(again, q) == pytest.approx(evaluate(e, q), rel=1e-14, abs=1e-14)

    def test_aliases(self):
        e = parse("t^2 + 1", 1, {"t": 0})
        assert evaluate(e, [3.0]) == 10.0


class TestDomain:
    @pytest.mark.parametrize(
        "text, q",
        [
            ("sin(q1)/q1", [0.0]),
            ("sqrt(q1)", [-1.0]),
            ("q1^0.5", [-2.0]),
            ("q1^-1", [0.0]),
            ("exp(q1)", [1000.0]),
        ],
    )
    def test_domain_errors(self, text, q):
        e = parse(text, 1)
        with pytest.raises(DomainError):
            eval_with_jet(e, q)
        with pytest.raises(DomainError):
            compile_jet([e], 1)(q)

    def test_sqrt_at_zero_not_differentiable(self):
        with pytest.raises(DomainError):
            eval_with_jet(parse("sqrt(q1)", 1), [0.0])

    def test_integer_power_of_negative_base(self):
        v, g = eval_with_jet(parse("q1^3", 1), [-2.0])
        assert v == -8.0 and g[0] == 12.0


class TestExprAlgebra:
    def test_operators_and_folding(self):
        x = Expr.var(0, 2)
        y = Expr.var(1, 2)
        e = 2.0 * x * y - x / 2.0 + 0.0
        v, g = eval_with_jet(e, [1.0, 3.0])
        assert v == pytest.approx(5.5)
        np.testing.assert_allclose(g, [5.5, 2.0])
        assert (x * 0.0).is_constant
        assert str(1.0 * x) == str(x)

    def test_embed_shifts_variables(self):
        e = parse("q1 * q2", 2).embed(4, offset=2)
        assert evaluate(e, [9.0, 9.0, 2.0, 5.0]) == 10.0

    def test_apply(self):
        e = parse("q1", 1).apply("sqrt")
        assert evaluate(e, [4.0]) == 2.0
        with pytest.raises(ValueError):
            parse("q1", 1).apply("log")

    def test_compiled_values_match(self):
        exprs = [parse(t, 2) for t in ("q1*q2", "sin(q1)+q2^2", "3")]
        vals = compile_values(exprs, 2)([0.5, -1.5])
        np.testing.assert_allclose(vals, [evaluate(e, [0.5, -1.5]) for e in exprs], rtol=1e-15)


def test_compiled_jet_matches_dual_walk():
    rnd = random.Random(11)
    rng = np.random.default_rng(11)
    for _ in range(300):
        e = parse(random_expression(rnd, 3, depth=4), 3)
        q = rng.uniform(-1, 1, 3)
        v1, g1 = eval_with_jet(e, q)
        (v2,), (g2,) = compile_jet([e], 3)(q)
        assert v2 == pytest.approx(v1, rel=1e-12, abs=1e-12)
        np.testing.assert_allclose(g2, g1, rtol=1e-12, atol=1e-12)


@settings(max_examples=150, deadline=None)
@given(
    seed=st.integers(0, 10**6),
    q=st.lists(st.floats(-1, 1), min_size=3, max_size=3),
)
def test_ad_matches_finite_differences(seed, q):
    e = parse(random_expression(random.Random(seed), 3), 3)
    _, grad = eval_with_jet(e, q)
    fd = central_gradient(lambda x: evaluate(e, x), q, h=1e-6)
    assert np.linalg.norm(grad - fd) <= 1e-5 * (1 + np.linalg.norm(grad))


def test_single_variable_derivatives():
    cases = {
        "sin(q1)": math.cos,
        "cos(q1)": lambda x: -math.sin(x),
        "exp(q1)": math.exp,
        "sqrt(q1)": lambda x: 0.5 / math.sqrt(x),
        "q1^q1": lambda x: x**x * (math.log(x) + 1),
        "1/q1": lambda x: -1 / x**2,
    }
    for text, deriv in cases.items():
        _, g = eval_with_jet(parse(text, 1), [0.7])
        assert g[0] == pytest.approx(deriv(0.7), rel=1e-14)
