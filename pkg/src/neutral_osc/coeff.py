"""Coefficient expressions: a tiny division-free arithmetic grammar.

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := base ('^' (uint | 'm'))?
    base   := number | 'k' | 'ell' | 'm' | '(' expr ')'

Numbers may carry a leading '-' (a negative literal); there is no unary
minus operator.  Evaluation works on floats and on numpy arrays of ``k``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .errors import CoeffSyntaxError

VARIABLES = ("k", "ell", "m")

_NUMBER = re.compile(r"-?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_WORD = re.compile(r"[A-Za-z_]\w*")
_UINT = re.compile(r"\d+")

_BASE_START = frozenset({"number", "'k'", "'ell'", "'m'", "'('"})


@dataclass(frozen=True)
class Num:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: Union[int, str]


Expr = Union[Num, Var, BinOp, Pow]
CoeffExpr = Expr


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def fail(self, expected):
        self.skip()
        raise CoeffSyntaxError(self.text, self.pos, expected)

    def parse(self) -> Expr:
        node = self.expr()
        if self.peek():
            self.fail({"'+'", "'-'", "'*'", "'^'", "end of input"})
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek() == "*":
            self.pos += 1
            node = BinOp("*", node, self.factor())
        return node

    def factor(self) -> Expr:
        node = self.base()
        if self.peek() == "^":
            self.pos += 1
            self.skip()
            m = _UINT.match(self.text, self.pos)
            if m:
                self.pos = m.end()
                return Pow(node, int(m.group()))
            w = _WORD.match(self.text, self.pos)
            if w and w.group() == "m":
                self.pos = w.end()
                return Pow(node, "m")
            self.fail({"unsigned integer", "'m'"})
        return node

    def base(self) -> Expr:
        c = self.peek()
        if c == "(":
            self.pos += 1
            node = self.expr()
            if self.peek() != ")":
                self.fail({"')'", "'+'", "'-'", "'*'", "'^'"})
            self.pos += 1
            return node
        num = _NUMBER.match(self.text, self.pos)
        if num:
            self.pos = num.end()
            return Num(float(num.group()))
        w = _WORD.match(self.text, self.pos)
        if w and w.group() in VARIABLES:
            self.pos = w.end()
            return Var(w.group())
        self.fail(_BASE_START)


def parse_coeff(text: str) -> Expr:
    """Parse a coefficient formula such as ``"2^m*(2*k+ell)"``."""
    return _Parser(text).parse()


_PREC = {"+": 1, "-": 1, "*": 2}


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(e: Expr, _ctx: int = 0) -> str:
    """Print ``e`` so that ``parse_coeff(to_text(e)) == e``."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Pow):
        inner = to_text(e.base, 4)
        if isinstance(e.base, Pow):
            inner = f"({inner})"
        return f"{inner}^{e.exponent}"
    prec = _PREC[e.op]
    # left-assoc: a right operand at the same precedence needs parentheses
    s = f"{to_text(e.left, prec)}{e.op}{to_text(e.right, prec + 1)}"
    return f"({s})" if prec < _ctx else s


def eval_coeff(e: Expr, k, ell: float, m: int):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return {"k": k, "ell": ell, "m": m}[e.name]
    if isinstance(e, Pow):
        n = int(m) if e.exponent == "m" else e.exponent
        if n < 0:
            raise ValueError(f"negative exponent {n}")
        b = eval_coeff(e.base, k, ell, m)
        out = 1.0
        for _ in range(n):
            out = out * b
        return out
    left = eval_coeff(e.left, k, ell, m)
    right = eval_coeff(e.right, k, ell, m)
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    return left * right
