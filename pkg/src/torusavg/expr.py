"""Expression AST, parser, evaluator, and exact symbolic differentiation.

The language covers what periodically forced vector fields need and nothing
more: float literals, the constant pi, variables ``t`` and ``x1..xn``, binary
``+ - * /``, integer powers ``^``, unary minus, and the functions ``sin``,
``cos``, ``exp``.  Precedence is ``^`` > unary minus > ``* /`` > ``+ -`` with
left associativity; in particular ``-x1^2`` is the negative of ``x1^2``.

Differentiation is closed over the AST and applies light simplification only
(zero/one elimination and literal folding), so derivative trees stay small
enough for repeated evaluation inside quadratures.  ``compile_expr`` emits a
plain Python lambda over numpy for hot loops; it is semantically identical to
``eval_expr``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from torusavg.errors import NonFiniteError

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Neg",
    "Call",
    "ExprSyntaxError",
    "parse_expr",
    "eval_expr",
    "diff_expr",
    "pretty",
    "compile_expr",
    "substitute",
    "free_variables",
]

FUNCTIONS = ("sin", "cos", "exp")


class ExprSyntaxError(ValueError):
    """Parse failure; carries the byte offset of the offending token."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class Expr:
    """Base class for AST nodes.  Nodes are frozen dataclasses and hashable,
    so parsed expressions are safe to share and memoize on."""

    __slots__ = ()


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str  # "t" or "x1".."xn"


@dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Sub(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Div(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Neg(Expr):
    a: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    arg: Expr


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            off = len(src) - len(stripped)
            raise ExprSyntaxError(f"unexpected character {src[off]!r}", off)
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("eof", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src, n):
        self.src = src
        self.n = n
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ExprSyntaxError(f"expected {op!r}", off)
        self.advance()

    def parse(self):
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "eof":
            raise ExprSyntaxError(f"unexpected token {val!r}", off)
        return e

    def expr(self):
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                e = Add(e, rhs) if val == "+" else Sub(e, rhs)
            else:
                return e

    def term(self):
        e = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.unary()
                e = Mul(e, rhs) if val == "*" else Div(e, rhs)
            else:
                return e

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            inner = self.unary()
            if isinstance(inner, Num):  # fold literal sign for canonical trees
                return Num(-inner.value)
            return Neg(inner)
        return self.power()

    def power(self):
        e = self.atom()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "^":
                self.advance()
                e = Pow(e, self.exponent())
            else:
                return e

    def exponent(self):
        sign = 1
        kind, val, off = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            sign = -1
            kind, val, off = self.peek()
        if kind != "num" or any(c in val for c in ".eE"):
            raise ExprSyntaxError("exponent must be an integer literal", off)
        self.advance()
        return sign * int(val)

    def atom(self):
        kind, val, off = self.advance()
        if kind == "num":
            return Num(float(val))
        if kind == "ident":
            if val in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            if val == "pi":
                return Num(math.pi)
            if val == "t":
                return Var("t")
            m = re.fullmatch(r"x([0-9]+)", val)
            if m:
                idx = int(m.group(1))
                if not 1 <= idx <= self.n:
                    raise ExprSyntaxError(
                        f"variable {val} out of range for dimension {self.n}", off
                    )
                return Var(val)
            raise ExprSyntaxError(f"unknown identifier {val!r}", off)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ExprSyntaxError(f"unexpected token {val!r}" if val else "unexpected end of input", off)


def parse_expr(src: str, n: int) -> Expr:
    """Parse `src` into an AST; variable indices are validated against the
    system dimension `n`."""
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(src, n).parse()


def eval_expr(e: Expr, t, x):
    """Evaluate at time `t` (scalar or array) and state `x` (sequence).

    Raises NonFiniteError if the result is not finite (division by zero,
    overflow).
    """
    try:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            val = _eval(e, t, x)
    except (ZeroDivisionError, OverflowError) as err:
        raise NonFiniteError(f"non-finite value from {pretty(e)!r}: {err}") from err
    if not np.all(np.isfinite(val)):
        raise NonFiniteError(f"non-finite value from {pretty(e)!r}")
    return val


def _eval(e, t, x):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        if e.name == "t":
            return t
        return x[int(e.name[1:]) - 1]
    if isinstance(e, Add):
        return _eval(e.a, t, x) + _eval(e.b, t, x)
    if isinstance(e, Sub):
        return _eval(e.a, t, x) - _eval(e.b, t, x)
    if isinstance(e, Mul):
        return _eval(e.a, t, x) * _eval(e.b, t, x)
    if isinstance(e, Div):
        return _eval(e.a, t, x) / _eval(e.b, t, x)
    if isinstance(e, Pow):
        return _eval(e.base, t, x) ** e.exponent
    if isinstance(e, Neg):
        return -_eval(e.a, t, x)
    if isinstance(e, Call):
        return {"sin": np.sin, "cos": np.cos, "exp": np.exp}[e.fn](_eval(e.arg, t, x))
    raise TypeError(f"not an Expr: {e!r}")


def _num(e):
    return isinstance(e, Num)


def _add(a, b):
    if _num(a) and a.value == 0.0:
        return b
    if _num(b) and b.value == 0.0:
        return a
    if _num(a) and _num(b):
        return Num(a.value + b.value)
    return Add(a, b)


def _sub(a, b):
    if _num(b) and b.value == 0.0:
        return a
    if _num(a) and _num(b):
        return Num(a.value - b.value)
    if _num(a) and a.value == 0.0:
        return _neg(b)
    return Sub(a, b)


def _mul(a, b):
    if _num(a):
        if a.value == 0.0:
            return Num(0.0)
        if a.value == 1.0:
            return b
    if _num(b):
        if b.value == 0.0:
            return Num(0.0)
        if b.value == 1.0:
            return a
    if _num(a) and _num(b):
        return Num(a.value * b.value)
    return Mul(a, b)


def _div(a, b):
    if _num(a) and a.value == 0.0:
        return Num(0.0)
    if _num(b) and b.value == 1.0:
        return a
    return Div(a, b)


def _neg(a):
    if _num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def _pow(base, k):
    if k == 0:
        return Num(1.0)
    if k == 1:
        return base
    return Pow(base, k)


def diff_expr(e: Expr, var: str) -> Expr:
    """Exact derivative with respect to `var` ("t" or "x1".."xn")."""
    if isinstance(e, Num):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0) if e.name == var else Num(0.0)
    if isinstance(e, Add):
        return _add(diff_expr(e.a, var), diff_expr(e.b, var))
    if isinstance(e, Sub):
        return _sub(diff_expr(e.a, var), diff_expr(e.b, var))
    if isinstance(e, Mul):
        return _add(_mul(diff_expr(e.a, var), e.b), _mul(e.a, diff_expr(e.b, var)))
    if isinstance(e, Div):
        num = _sub(_mul(diff_expr(e.a, var), e.b), _mul(e.a, diff_expr(e.b, var)))
        return _div(num, _pow(e.b, 2))
    if isinstance(e, Pow):
        inner = diff_expr(e.base, var)
        return _mul(_mul(Num(float(e.exponent)), _pow(e.base, e.exponent - 1)), inner)
    if isinstance(e, Neg):
        return _neg(diff_expr(e.a, var))
    if isinstance(e, Call):
        du = diff_expr(e.arg, var)
        if e.fn == "sin":
            return _mul(Call("cos", e.arg), du)
        if e.fn == "cos":
            return _neg(_mul(Call("sin", e.arg), du))
        if e.fn == "exp":
            return _mul(Call("exp", e.arg), du)
    raise TypeError(f"not an Expr: {e!r}")


_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 2.5, Pow: 3, Num: 4, Var: 4, Call: 4}


def _prec(e):
    return _PREC[type(e)]


def pretty(e: Expr) -> str:
    """Render to source that reparses to the identical AST."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, (Add, Sub)):
        op = "+" if isinstance(e, Add) else "-"
        left = _wrap(e.a, _prec(e.a) < _prec(e))
        right = _wrap(e.b, _prec(e.b) <= _prec(e))
        return f"{left} {op} {right}"
    if isinstance(e, (Mul, Div)):
        op = "*" if isinstance(e, Mul) else "/"
        left = _wrap(e.a, _prec(e.a) < _prec(e))
        right = _wrap(e.b, _prec(e.b) <= _prec(e))
        return f"{left}{op}{right}"
    if isinstance(e, Neg):
        # parser folds -literal into Num, so parenthesize literal operands to
        # keep the rendering unambiguous for hand-built trees
        need = _prec(e.a) < _prec(e) or isinstance(e.a, Num)
        return "-" + _wrap(e.a, need)
    if isinstance(e, Pow):
        # a leading minus sign would bind after ^, so negative literal bases
        # need parentheses
        need = _prec(e.base) < _prec(e) or (isinstance(e.base, Num) and e.base.value < 0)
        return _wrap(e.base, need) + "^" + str(e.exponent)
    if isinstance(e, Call):
        return f"{e.fn}({pretty(e.arg)})"
    raise TypeError(f"not an Expr: {e!r}")


def _wrap(e, need):
    s = pretty(e)
    return f"({s})" if need else s


def substitute(e: Expr, mapping: dict) -> Expr:
    """Replace variables by expressions (mapping variable name -> Expr);
    unmapped variables pass through."""
    if isinstance(e, Num):
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Add):
        return Add(substitute(e.a, mapping), substitute(e.b, mapping))
    if isinstance(e, Sub):
        return Sub(substitute(e.a, mapping), substitute(e.b, mapping))
    if isinstance(e, Mul):
        return Mul(substitute(e.a, mapping), substitute(e.b, mapping))
    if isinstance(e, Div):
        return Div(substitute(e.a, mapping), substitute(e.b, mapping))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), e.exponent)
    if isinstance(e, Neg):
        return Neg(substitute(e.a, mapping))
    if isinstance(e, Call):
        return Call(e.fn, substitute(e.arg, mapping))
    raise TypeError(f"not an Expr: {e!r}")


def free_variables(e: Expr):
    """Set of variable names appearing in the expression."""
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (Add, Sub, Mul, Div)):
        return free_variables(e.a) | free_variables(e.b)
    if isinstance(e, Pow):
        return free_variables(e.base)
    if isinstance(e, Neg):
        return free_variables(e.a)
    if isinstance(e, Call):
        return free_variables(e.arg)
    return set()


def _codegen(e):
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        if e.name == "t":
            return "T"
        return f"X[{int(e.name[1:]) - 1}]"
    if isinstance(e, Add):
        return f"({_codegen(e.a)} + {_codegen(e.b)})"
    if isinstance(e, Sub):
        return f"({_codegen(e.a)} - {_codegen(e.b)})"
    if isinstance(e, Mul):
        return f"({_codegen(e.a)} * {_codegen(e.b)})"
    if isinstance(e, Div):
        return f"({_codegen(e.a)} / {_codegen(e.b)})"
    if isinstance(e, Pow):
        return f"({_codegen(e.base)} ** {e.exponent})"
    if isinstance(e, Neg):
        return f"(-{_codegen(e.a)})"
    if isinstance(e, Call):
        return f"np.{e.fn}({_codegen(e.arg)})"
    raise TypeError(f"not an Expr: {e!r}")


def compile_expr(e: Expr):
    """Compile to a callable f(t, x) over numpy; equivalent to eval_expr but
    without the finiteness check (callers on hot paths guard separately)."""
    src = f"lambda T, X: {_codegen(e)}"
    return eval(src, {"np": np})
