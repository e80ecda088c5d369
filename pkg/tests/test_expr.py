import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minsuff.expr import (
    ExprSyntaxError,
    IndexRangeError,
    NegativeDensityError,
    UnknownIdentifierError,
    depth,
    evaluate,
    evaluate_log,
    evaluate_with_diagnostics,
    free_symbols,
    parse,
    parse_statistic,
    unparse,
)


def test_gaussian_kernel_depth_and_leaves():
    e = parse("exp(-(x[0]-theta[0])^2/2)", 1, 1)
    assert depth(e) == 5
    assert free_symbols(e) == {"x", "theta"}
    assert evaluate(e, (1.0,), (0.0,)) == pytest.approx(math.exp(-0.5), rel=1e-15)


def test_unary_minus_binds_looser_than_power():
    assert evaluate(parse("-2^2", 0, 0), (), ()) == -4.0
    assert evaluate(parse("2^-1", 0, 0), (), ()) == 0.5


def test_cauchy_product_aggregate():
    e = parse("prod{i}(1/(pi*(1+(x[i]-theta[0])^2)))", 3, 1)
    assert e.kind == "agg" and e.value == "prod"
    x, t = (0.5, -1.0, 2.0), (0.25,)
    oracle = 1.0
    for v in x:
        oracle *= 1 / (math.pi * (1 + (v - t[0]) ** 2))
    assert evaluate(e, x, t) == pytest.approx(oracle, rel=1e-14)


@pytest.mark.parametrize(
    "text, exc",
    [
        ("x[5]", IndexRangeError),
        ("theta[1]", IndexRangeError),
        ("foo(x[0])", UnknownIdentifierError),
        ("x[0] +", ExprSyntaxError),
        ("(x[0]", ExprSyntaxError),
        ("", ExprSyntaxError),
    ],
)
def test_parse_errors(text, exc):
    with pytest.raises(exc):
        parse(text, 2, 1)


def test_syntax_error_reports_position():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x[0] +\n  * 2", 1, 0)
    assert info.value.line == 2
    assert info.value.column == 3


def test_indicator_values():
    e = parse("ind(x[0] > theta[0])", 1, 1)
    assert evaluate(e, (1.0,), (0.0,)) == 1.0
    assert evaluate(e, (1.0,), (2.0,)) == 0.0
    both = parse("ind(x[0] > 0 and x[0] < 1 or x[0] == 5)", 1, 0)
    assert [evaluate(both, (v,), ()) for v in (0.5, 2.0, 5.0)] == [1.0, 0.0, 1.0]


def test_sum_of_squares():
    assert evaluate(parse("sum{i}(x[i]^2)", 3, 0), (1, -1, 2), ()) == 6.0


def test_n_is_sample_length():
    assert evaluate(parse("n", 4, 0), (0, 0, 0, 0), ()) == 4.0


def test_zero_annihilates_infinity():
    e = parse("ind(x[0] > 1) * exp(1000)", 1, 0)
    assert evaluate(e, (0.0,), ()) == 0.0
    assert evaluate_log(e, (0.0,), ()) == -math.inf


def test_log_scale_avoids_overflow():
    e = parse("exp(800) * exp(900)", 0, 0)
    assert evaluate_log(e, (), ()) == 1700.0
    assert evaluate(e, (), ()) == math.inf


def test_log_of_constants():
    assert evaluate_log(parse("1", 0, 0), (), ()) == 0.0
    assert evaluate_log(parse("0", 0, 0), (), ()) == -math.inf


def test_truncated_density_below_support_is_log_zero():
    e = parse("exp(n*theta[0] - sum{i}(x[i])) * ind(min{i}(x[i]) > theta[0])", 2, 1)
    assert evaluate_log(e, (0.5, 2.0), (0.75,)) == -math.inf


def test_negative_value_raises_in_log_mode():
    with pytest.raises(NegativeDensityError):
        evaluate_log(parse("-1", 0, 0), (), ())


def test_nan_is_flagged():
    ev = evaluate_with_diagnostics(parse("0/0", 0, 0), (), ())
    assert ev.nan


def test_log_of_zero_is_minus_infinity():
    assert evaluate(parse("log(0)", 0, 0), (), ()) == -math.inf


def test_sorted_statistic_layout():
    spec = parse_statistic(["sum{i}(x[i])/n"], ["abs(x[i])"], 3)
    assert spec((-3.0, 1.0, 2.0)) == (0.0, 1.0, 2.0, 3.0)
    assert spec.output_dim(3) == 4


def test_sorted_index_not_allowed_outside_statistics():
    with pytest.raises(UnknownIdentifierError):
        parse("x[i]", 3, 0)


# --------------------------------------------------------------------------
# properties

_leaf = st.sampled_from(["x[0]", "x[1]", "theta[0]", "pi", "n", "2", "0.5", "3"])


def _combine(children):
    unary = st.tuples(st.sampled_from(["exp", "abs", "sqrt", "log", "-"]), children).map(
        lambda p: f"-({p[1]})" if p[0] == "-" else f"{p[0]}({p[1]})"
    )
    binary = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(
        lambda p: f"({p[0]}) {p[1]} ({p[2]})"
    )
    agg = st.tuples(st.sampled_from(["sum", "prod", "min", "max"]), children).map(
        lambda p: f"{p[0]}{{j}}(x[j] * ({p[1]}))"
    )
    ind = st.tuples(children, st.sampled_from(["<", "<=", ">", ">=", "=="]), children).map(
        lambda p: f"ind({p[0]} {p[1]} {p[2]})"
    )
    return unary | binary | agg | ind


expressions = st.recursive(_leaf, _combine, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(expressions)
def test_round_trip(text):
    e = parse(text, 2, 1)
    assert parse(unparse(e), 2, 1) == e


_positive_leaf = st.sampled_from(["x[0]^2", "abs(x[1])", "theta[0]^2", "pi", "2", "0.5", "n"])


def _positive(children):
    return (
        st.tuples(children, st.sampled_from(["+", "*", "/"]), children).map(lambda p: f"({p[0]}) {p[1]} ({p[2]})")
        | children.map(lambda c: f"exp(-({c}))")
        | children.map(lambda c: f"sqrt({c})")
        | children.map(lambda c: f"({c})^1.5")
        | children.map(lambda c: f"sum{{j}}(x[j]^2 + {c})")
        | children.map(lambda c: f"prod{{j}}(1 + x[j]^2 * ({c}))")
        | children.map(lambda c: f"ind(x[0] > theta[0]) * ({c})")
        | children.map(lambda c: f"log(1 + {c})")
    )


nonneg = st.recursive(_positive_leaf, _positive, max_leaves=8)
reals = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=400, deadline=None)
@given(nonneg, reals, reals, reals)
def test_log_consistency(text, a, b, t):
    e = parse(text, 2, 1)
    x, theta = (a, b), (t,)
    value = evaluate(e, x, theta)
    if not (0 < value < 1e300):
        return
    logv = evaluate_log(e, x, theta)
    assert abs(math.exp(logv) - value) <= 1e-12 * max(1.0, value)


@settings(max_examples=200, deadline=None)
@given(expressions, expressions, st.sampled_from(["<", "<=", ">", ">=", "=="]), reals, reals, reals)
def test_indicators_are_exactly_zero_or_one(lhs, rhs, op, a, b, t):
    e = parse(f"ind({lhs} {op} {rhs})", 2, 1)
    assert evaluate(e, (a, b), (t,)) in (0.0, 1.0)
