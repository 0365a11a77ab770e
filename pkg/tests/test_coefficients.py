import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semilt.coefficients import Coefficient, CoefficientSpec, parse_coefficient

X = np.array([-2.0, -0.25, 0.0, 0.25, 4.0])


@pytest.mark.parametrize("text, expect", [
    ("0.5", [0.5] * 5),
    ("constant(2)", [2.0] * 5),
    ("linear(2,1)", [-3.0, 0.5, 1.0, 1.5, 9.0]),
    ("sign", [-1.0, -1.0, -1.0, 1.0, 1.0]),
    ("sqrt_cap(1.0)", [1.0, 0.5, 0.0, 0.5, 1.0]),
    ("step(0,-1,1)", [-1.0, -1.0, 1.0, 1.0, 1.0]),
    ("table(0:0.5,1:1.5)", [0.5, 0.5, 0.5, 0.75, 1.5]),
    ("odd_table(0:0,1:-0.5,3:-0.5)", [0.5, 0.125, 0.0, -0.125, -0.5]),
    ("barlow(1,2)", [-2.0, -2.0, -2.0, 1.0, 1.0]),
    ("sqrt_cap(1.0,scale=-0.5,offset=1.0)", [0.5, 0.75, 1.0, 0.75, 0.5]),
])
def test_families(text, expect):
    c = parse_coefficient(text)
    assert np.allclose(c(X), expect, rtol=0, atol=1e-15)
    assert np.array_equal(parse_coefficient(c.to_literal())(X), c(X))


@pytest.mark.parametrize("text", ["cubic(1)", "linear()", "barlow(1)", "barlow(1,-2)",
                                  "table(1,2)", "odd_table(-1:0,1:1)", "sqrt_cap(0)",
                                  "linear(1,scal=2)", "constant(nan)", "((("])
def test_rejected(text):
    with pytest.raises(ValueError):
        parse_coefficient(text)


def test_constant_queries():
    assert parse_coefficient("3").constant_value() == 3.0
    assert Coefficient("linear", (1.0,), scale=0.0, offset=2.0).constant_value() == 2.0
    with pytest.raises(ValueError):
        parse_coefficient("sign").constant_value()


@given(st.lists(st.floats(0, 5), min_size=2, max_size=6, unique=True),
       st.floats(-10, 10))
def test_odd_table_is_odd(knots, x):
    xs = sorted(knots)
    c = Coefficient.table(xs, [np.sin(k) for k in xs], odd=True)
    assert c(np.array([-x]))[0] == pytest.approx(-c(np.array([x]))[0], abs=1e-15)


def test_spot_check():
    xs = np.linspace(-3, 3, 101)
    good = CoefficientSpec(parse_coefficient("odd_table(0:0,1:-0.5,3:-0.5)"),
                           declared={"bounded": True, "odd": True, "lipschitz": 0.5})
    assert all(good.spot_check(xs).values())
    bad = CoefficientSpec(parse_coefficient("step(0,0,1)"), declared={"odd": True, "lipschitz": 1.0})
    res = bad.spot_check(xs)
    assert not res["sigma_odd"] and not res["sigma_lipschitz"]
    assert good.to_literal()["drift"] == "constant(0.0)"
