import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rodspec.expr import EvalError, ExprError, MAX_DEPTH, ParseError, as_expr, constant, evaluate, parse


def test_examples():
    assert parse("1 + x1^2")(x1=2.0) == 5.0
    assert parse("cos(2*pi*y1)")(y1=0.5) == pytest.approx(-1.0, abs=1e-15)
    assert parse("y1*y1 + y2*y2")(y1=0.3, y2=0.4) == pytest.approx(0.25, abs=1e-15)
    assert parse("exp(0)")() == 1.0


def test_syntax_error_offset():
    with pytest.raises(ParseError) as info:
        parse("1 +")
    assert info.value.offset == 3


@pytest.mark.parametrize("src, offset", [("2 * * 3", 4), ("(1 + 2", 6), ("sin(1", 5), ("x1 $ 2", 3),
                                          ("", 0), ("foo(1)", 0), ("1e+", 1)])
def test_error_offsets(src, offset):
    with pytest.raises(ParseError) as info:
        parse(src)
    assert info.value.offset == offset


def test_precedence():
    assert parse("2+3*4")() == 14.0
    assert parse("-x1^2")(x1=3.0) == -9.0
    assert parse("2^3^2")() == 512.0          # right associative
    assert parse("2^-1")() == 0.5
    assert parse("(1-2)-3")() == parse("1-2-3")() == -4.0
    assert parse("8/4/2")() == 1.0


def test_eval_errors():
    with pytest.raises(EvalError):
        parse("1/x1")(x1=0.0)
    with pytest.raises(EvalError):
        parse("x1 + y1")(x1=1.0)
    with pytest.raises(EvalError):
        parse("x1^0.5")(x1=-1.0)
    with pytest.raises(EvalError):
        parse("1/y1")(y1=np.array([1.0, 0.0]))


def test_vectorised_and_broadcast():
    e = parse("x1 + y1*y2")
    out = e(x1=np.zeros(3), y1=np.array([1.0, 2.0, 3.0]), y2=2.0)
    np.testing.assert_array_equal(out, [2.0, 4.0, 6.0])
    assert e.variables == {"x1", "y1", "y2"}
    assert parse("2*pi").is_constant
    assert constant("1/64") == 1 / 64
    with pytest.raises(EvalError):
        constant("x1")


def test_integer_power_is_exact():
    x = np.linspace(-2, 2, 41)
    np.testing.assert_array_equal(parse("x1^3")(x1=x), x * x * x)
    assert parse("x1^2.5")(x1=4.0) == pytest.approx(32.0, rel=1e-15)


def test_bytes_and_depth():
    assert parse(b"1+1")() == 2.0
    with pytest.raises(ParseError):
        parse(b"\xff\xfe")
    deep = "(" * (MAX_DEPTH + 5) + "1" + ")" * (MAX_DEPTH + 5)
    with pytest.raises(ParseError):
        parse(deep)
    assert parse("-" * 50 + "1")() == 1.0
    assert as_expr(2)() == 2.0


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=64))
def test_fuzz_bytes_never_crash(data):
    try:
        e = parse(data)
    except ExprError:
        return
    try:
        e(x1=0.3, y1=0.1, y2=-0.2)
    except (ExprError, OverflowError, FloatingPointError):
        pass


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="x1y2 +-*/^().,0123456789epicosinexpabmx", max_size=40))
def test_fuzz_text_never_crash(src):
    try:
        parse(src)
    except ExprError:
        pass


# random well-formed expressions compared against a Python reference ----------

_leaf = st.one_of(st.sampled_from(["x1", "y1", "y2", "pi"]),
                  st.integers(0, 9).map(str), st.sampled_from(["0.5", "1.25", "2e-1"]))


def _tree(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        children.map(lambda c: f"(-{c})"),
        children.map(lambda c: f"sin({c})"),
        children.map(lambda c: f"cos({c})"),
        children.map(lambda c: f"({c})^2"),
        st.tuples(children, children).map(lambda t: f"max({t[0]}, {t[1]})"),
    )


expressions = st.recursive(_leaf, _tree, max_leaves=12)


def _python(src):
    py = src.replace("^", "**")
    return eval(py, {"sin": math.sin, "cos": math.cos, "max": max, "pi": math.pi},
                {"x1": 0.37, "y1": -0.21, "y2": 0.44})


@settings(max_examples=300, deadline=None)
@given(expressions)
def test_matches_python_reference(src):
    ref = _python(src)
    got = parse(src)(x1=0.37, y1=-0.21, y2=0.44)
    assert got == pytest.approx(ref, rel=1e-12, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(expressions)
def test_pretty_round_trip(src):
    e = parse(src)
    again = parse(e.pretty())
    assert again.ast == e.ast or again(x1=0.37, y1=-0.21, y2=0.44) == pytest.approx(
        e(x1=0.37, y1=-0.21, y2=0.44), rel=1e-14, abs=1e-14)
    assert parse(again.pretty()).pretty() == again.pretty()
