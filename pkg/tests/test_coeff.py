import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neutral_osc.coeff import BinOp, Num, Pow, Var, eval_coeff, parse_coeff, to_text
from neutral_osc.errors import CoeffSyntaxError


@pytest.mark.parametrize("text, k, ell, m, want", [
    ("k*(k+ell)", 3, 2, 0, 15.0),
    ("2^m*(2*k+ell)", 1, 1, 4, 48.0),
    ("7", 123.0, 1, 2, 7.0),
    ("k", -2, 1, 2, -2.0),
    ("0.25*2^m*(4*k^2+2*ell*(m+ell)*k+(m+1)*ell^2)", 3, 1, 2, 57.0),
    ("k - 2 - 1", 10, 1, 2, 7.0),
    ("0-k", 4, 1, 2, -4.0),
    ("-2*k", 4, 1, 2, -8.0),
    ("k^0", 5, 1, 2, 1.0),
    ("1e-3*k", 2000, 1, 2, 2.0),
])
def test_evaluates(text, k, ell, m, want):
    assert eval_coeff(parse_coeff(text), k, ell, m) == pytest.approx(want, rel=1e-15)


def test_precedence_and_associativity():
    assert parse_coeff("1+2*k^2") == BinOp("+", Num(1), BinOp("*", Num(2), Pow(Var("k"), 2)))
    assert parse_coeff("k-1-2") == BinOp("-", BinOp("-", Var("k"), Num(1)), Num(2))


def test_vectorized_evaluation():
    ks = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(eval_coeff(parse_coeff("k*(k+ell)"), ks, 1.0, 2), [2, 6, 12])


@pytest.mark.parametrize("text, offset", [
    ("k*(+3", 3),
    ("k*(", 3),
    ("k+", 2),
    ("k^-1", 2),
    ("k^2.5", 3),
    ("2 k", 2),
    ("x+1", 0),
    ("(k", 2),
    ("k/2", 1),
])
def test_syntax_errors_report_offset(text, offset):
    with pytest.raises(CoeffSyntaxError) as info:
        parse_coeff(text)
    assert info.value.offset == offset
    assert info.value.expected
    assert f"offset {offset}" in str(info.value)


# -- round trip -------------------------------------------------------------

literals = st.one_of(
    st.integers(-50, 50).map(float),
    st.floats(allow_nan=False, allow_infinity=False),
).map(Num)
leaves = st.one_of(literals, st.sampled_from([Var("k"), Var("ell"), Var("m")]))


def extend(children):
    return st.one_of(
        st.builds(BinOp, st.sampled_from("+-*"), children, children),
        st.builds(Pow, children, st.one_of(st.integers(0, 4), st.just("m"))),
    )


exprs = st.recursive(leaves, extend, max_leaves=12)


@settings(max_examples=1000)
@given(exprs)
def test_print_parse_round_trip(e):
    assert parse_coeff(to_text(e)) == e


nonneg_literals = st.integers(0, 9).map(float).map(Num)
plain_exprs = st.recursive(
    st.one_of(nonneg_literals, st.sampled_from([Var("k"), Var("ell")])),
    lambda c: st.one_of(st.builds(BinOp, st.sampled_from("+-*"), c, c),
                        st.builds(Pow, c, st.integers(0, 3))),
    max_leaves=8)


@settings(max_examples=300)
@given(plain_exprs, st.integers(-5, 5), st.integers(1, 4))
def test_evaluation_agrees_with_python_arithmetic(e, k, ell):
    # With nonnegative literals the grammar means what Python's ** means.
    src = to_text(e).replace("^", "**")
    want = eval(src, {"__builtins__": {}}, {"k": k, "ell": ell})
    assert eval_coeff(e, float(k), float(ell), 2) == pytest.approx(float(want), rel=1e-12, abs=1e-12)
