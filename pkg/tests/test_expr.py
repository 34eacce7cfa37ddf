import numpy as np
import pytest

from fracnehari.errors import ParseError
from fracnehari.expr import compile_expression, tokenize

X = np.linspace(-1, 1, 7)


@pytest.mark.parametrize(
    "text, expected",
    [
        ("1", np.ones_like(X)),
        ("x", X),
        ("2*x - 3", 2 * X - 3),
        ("x^2 + 1", X**2 + 1),
        ("-x^2", -(X**2)),
        ("sin(pi*x)", np.sin(np.pi * X)),
        ("exp(-x)/2", np.exp(-X) / 2),
        ("abs(x) * (1 - x)", np.abs(X) * (1 - X)),
        ("1.5e-1 * cos(x)", 0.15 * np.cos(X)),
        ("(x + 1) / (x + 2)", (X + 1) / (X + 2)),
    ],
)
def test_evaluates(text, expected):
    out = np.broadcast_to(compile_expression(text)(X), X.shape)
    np.testing.assert_allclose(out, expected, rtol=1e-15, atol=1e-15)


@pytest.mark.parametrize("text", ["", "x +", "sin x", "(x", "x)", "foo(x)", "y", "2 $ x", "1 ^"])
def test_rejects_malformed(text):
    with pytest.raises(ParseError):
        compile_expression(text)


def test_tokenize_positions():
    toks = tokenize("2*x")
    assert [t[1] for t in toks][:3] == ["2", "*", "x"]


@pytest.mark.parametrize(
    "text, expected",
    [("2^3^2", 2.0**9), ("-2^2", -4.0), ("2^-1", 0.5), ("--3", 3.0), ("2*-x", -2 * 0.5)],
)
def test_precedence(text, expected):
    assert float(np.broadcast_to(compile_expression(text)(np.array(0.5)), ())) == expected


def test_parse_error_position():
    with pytest.raises(ParseError) as info:
        compile_expression("x + * 2")
    assert info.value.position == 4
