"""
Tiny recursive-descent parser for weight expressions in one variable ``x``.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | base ('^' factor)?
    base   := number | 'x' | 'pi' | func '(' expr ')' | '(' expr ')'

Unary minus binds looser than '^' (``-x^2`` is ``-(x^2)``) and '^' is
right-associative.
    func   := 'sin' | 'cos' | 'exp' | 'abs'

Parsing produces a tree of closures that evaluate on numpy arrays.
"""

import re

import numpy as np

from .errors import ParseError

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}


def tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.tok
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", pos)
        self.advance()

    def parse(self):
        node = self.expr()
        kind, text, pos = self.tok
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.advance()[1]
            rhs = self.term()
            node = _binary(op, node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.advance()[1]
            rhs = self.factor()
            node = _binary(op, node, rhs)
        return node

    def factor(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            arg = self.factor()
            return lambda x: -arg(x)
        node = self.base()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            rhs = self.factor()
            node = _binary("^", node, rhs)
        return node

    def base(self):
        kind, text, pos = self.tok
        if kind == "num":
            self.advance()
            value = float(text)
            return lambda x: np.full_like(x, value, dtype=float)
        if kind == "name":
            self.advance()
            if text == "x":
                return lambda x: np.asarray(x, dtype=float)
            if text == "pi":
                return lambda x: np.full_like(x, np.pi, dtype=float)
            if text in FUNCTIONS:
                fn = FUNCTIONS[text]
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return lambda x: fn(arg(x))
            raise ParseError(f"unknown name {text!r}", pos)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {found}", pos)


def _binary(op, lhs, rhs):
    if op == "+":
        return lambda x: lhs(x) + rhs(x)
    if op == "-":
        return lambda x: lhs(x) - rhs(x)
    if op == "*":
        return lambda x: lhs(x) * rhs(x)
    if op == "/":
        return lambda x: lhs(x) / rhs(x)
    return lambda x: np.power(lhs(x), rhs(x))


def compile_expression(text):
    """Parse ``text`` and return a vectorized callable ``f(x)``.

    Raises:
        ParseError: with the character position of the offending token.
    """
    return _Parser(text).parse()
