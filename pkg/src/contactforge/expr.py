"""Coordinate expressions: parsing, evaluation and introspection.

Grammar (whitespace insignificant)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('-' | '+') unary | power
    power := atom (('^' | '**') unary)?
    atom  := NUMBER | NAME '(' expr ')' | NAME | '(' expr ')'

``^`` binds tighter than unary minus and is right-associative.  Exponents
must fold to a rational constant.  Expressions are immutable trees and are
evaluated over any scalar type supported by :mod:`contactforge.autodiff`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from . import autodiff as ad
from .errors import DomainError, ParseError, UnboundVariable

FUNCTION_NAMES = frozenset(ad.FUNCTIONS)


class Expr:
    """Base class of expression nodes."""

    prec = 5

    def eval(self, env: Mapping):
        raise NotImplementedError

    def free_variables(self) -> frozenset:
        raise NotImplementedError

    def substitute(self, mapping: Mapping[str, "Expr"]) -> "Expr":
        raise NotImplementedError

    def __str__(self):
        return pretty(self)

    # Tree-building helpers; no simplification is ever done.
    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, as_expr(other))

    def __rsub__(self, other):
        return Sub(as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __neg__(self):
        return Neg(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    @property
    def prec(self):
        return 3 if self.value < 0 or str(self.value).startswith("-") else 5

    def eval(self, env):
        return self.value

    def free_variables(self):
        return frozenset()

    def substitute(self, mapping):
        return self


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str

    def eval(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise UnboundVariable(self.name) from None

    def free_variables(self):
        return frozenset((self.name,))

    def substitute(self, mapping):
        return mapping.get(self.name, self)


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr
    prec = 3

    def eval(self, env):
        return -self.arg.eval(env)

    def free_variables(self):
        return self.arg.free_variables()

    def substitute(self, mapping):
        return Neg(self.arg.substitute(mapping))


@dataclass(frozen=True, eq=True)
class _Binary(Expr):
    left: Expr
    right: Expr
    symbol = "?"

    def free_variables(self):
        return self.left.free_variables() | self.right.free_variables()

    def substitute(self, mapping):
        return type(self)(self.left.substitute(mapping), self.right.substitute(mapping))


class Add(_Binary):
    prec = 1
    symbol = "+"

    def eval(self, env):
        return self.left.eval(env) + self.right.eval(env)


class Sub(_Binary):
    prec = 1
    symbol = "-"

    def eval(self, env):
        return self.left.eval(env) - self.right.eval(env)


class Mul(_Binary):
    prec = 2
    symbol = "*"

    def eval(self, env):
        return self.left.eval(env) * self.right.eval(env)


class Div(_Binary):
    prec = 2
    symbol = "/"

    def eval(self, env):
        num = self.left.eval(env)
        den = self.right.eval(env)
        try:
            return ad.divide(num, den)
        except DomainError as err:
            raise DomainError(str(err), self) from None


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: Fraction
    prec = 4

    def eval(self, env):
        b = self.base.eval(env)
        try:
            return ad.power(b, self.exponent)
        except DomainError as err:
            raise DomainError(str(err), self) from None

    def free_variables(self):
        return self.base.free_variables()

    def substitute(self, mapping):
        return Pow(self.base.substitute(mapping), self.exponent)


@dataclass(frozen=True, eq=True)
class Call(Expr):
    func: str
    arg: Expr

    def eval(self, env):
        a = self.arg.eval(env)
        try:
            return ad.FUNCTIONS[self.func](a)
        except DomainError as err:
            raise DomainError(str(err), self) from None

    def free_variables(self):
        return self.arg.free_variables()

    def substitute(self, mapping):
        return Call(self.func, self.arg.substitute(mapping))


def Exp(arg):
    return Call("exp", arg)


def Log(arg):
    return Call("log", arg)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse(x)
    return Const(float(x))


def evaluate(e: Expr, env: Mapping):
    return e.eval(env)


def free_variables(e: Expr) -> frozenset:
    return e.free_variables()


# -- printing -----------------------------------------------------------------


def _fmt_fraction(k: Fraction) -> str:
    if k.denominator == 1:
        s = str(k.numerator)
        return s if k >= 0 else f"({s})"
    return f"({k.numerator}/{k.denominator})"


def pretty(e: Expr) -> str:
    """Render with the minimal parentheses that re-parse to an equal tree."""
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({pretty(e.arg)})"
    if isinstance(e, Neg):
        inner = pretty(e.arg)
        if e.arg.prec < Neg.prec:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Pow):
        base = pretty(e.base)
        if e.base.prec < 5:
            base = f"({base})"
        return f"{base}^{_fmt_fraction(e.exponent)}"
    if isinstance(e, _Binary):
        left = pretty(e.left)
        right = pretty(e.right)
        if e.left.prec < e.prec:
            left = f"({left})"
        if e.right.prec <= e.prec:
            right = f"({right})"
        return f"{left} {e.symbol} {right}"
    raise TypeError(f"not an expression node: {e!r}")


# -- parsing ------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\*\*|[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = self._tokenize(text)
        self.i = 0

    def _offset(self, char_pos: int) -> int:
        return len(self.text[:char_pos].encode("utf-8"))

    def error(self, char_pos, message, expected=None):
        return ParseError(self._offset(char_pos), message, expected, self.text)

    def _tokenize(self, text):
        toks = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:
                raise self.error(pos, f"unexpected character {text[pos]!r}")
            kind = m.lastgroup
            if kind != "ws":
                tok = m.group()
                toks.append(_Tok("op" if kind == "op" else kind, "^" if tok == "**" else tok, pos))
            pos = m.end()
        toks.append(_Tok("end", "", len(text)))
        return toks

    @property
    def tok(self):
        return self.toks[self.i]

    def advance(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        if self.tok.text != text or self.tok.kind != "op":
            raise self.error(self.tok.pos, f"unexpected {self._describe(self.tok)}", repr(text))
        return self.advance()

    @staticmethod
    def _describe(tok):
        return "end of input" if tok.kind == "end" else f"token {tok.text!r}"

    def parse(self):
        if self.tok.kind == "end":
            raise self.error(0, "empty expression", "an expression")
        e = self.expr()
        if self.tok.kind != "end":
            raise self.error(self.tok.pos, f"unexpected {self._describe(self.tok)}", "operator or end of input")
        return e

    def expr(self):
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.advance().text
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            start = self.tok.pos
            exponent = self.unary()
            return Pow(base, self._fold(exponent, start))
        return base

    def _fold(self, e, pos) -> Fraction:
        if isinstance(e, Const):
            return Fraction(repr(e.value))
        if isinstance(e, Neg):
            return -self._fold(e.arg, pos)
        if isinstance(e, _Binary):
            a = self._fold(e.left, pos)
            b = self._fold(e.right, pos)
            if isinstance(e, Add):
                return a + b
            if isinstance(e, Sub):
                return a - b
            if isinstance(e, Mul):
                return a * b
            if b == 0:
                raise self.error(pos, "division by zero in exponent")
            return a / b
        if isinstance(e, Pow) and e.exponent.denominator == 1:
            a = self._fold(e.base, pos)
            if a == 0 and e.exponent < 0:
                raise self.error(pos, "division by zero in exponent")
            return a ** int(e.exponent)
        raise self.error(pos, "exponent must be a rational constant", "a numeric exponent")

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "name":
            self.advance()
            is_call = self.tok.kind == "op" and self.tok.text == "("
            if tok.text in FUNCTION_NAMES:
                if not is_call:
                    raise self.error(self.tok.pos, f"function {tok.text!r} needs an argument", "'('")
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            if is_call:
                raise self.error(tok.pos, f"unknown function {tok.text!r}", ", ".join(sorted(FUNCTION_NAMES)))
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        raise self.error(tok.pos, f"unexpected {self._describe(tok)}", "a number, name or '('")


def parse(text: str) -> Expr:
    """Parse infix text into an :class:`Expr` tree."""
    return _Parser(text).parse()


# -- symbolic derivatives and compilation ------------------------------------


def _is_const(e, v=None):
    return isinstance(e, Const) and (v is None or e.value == v)


def _add(a, b):
    if _is_const(a, 0):
        return b
    if _is_const(b, 0):
        return a
    return Add(a, b)


def _sub(a, b):
    if _is_const(b, 0):
        return a
    if _is_const(a, 0):
        return _neg(b)
    return Sub(a, b)


def _neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is_const(a, 0) or _is_const(b, 0):
        return Const(0.0)
    if _is_const(a, 1):
        return b
    if _is_const(b, 1):
        return a
    return Mul(a, b)


def diff(e: Expr, name: str) -> Expr:
    """Partial derivative of ``e`` along the variable ``name``."""
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == name else 0.0)
    if name not in e.free_variables():
        return Const(0.0)
    if isinstance(e, Neg):
        return _neg(diff(e.arg, name))
    if isinstance(e, Add):
        return _add(diff(e.left, name), diff(e.right, name))
    if isinstance(e, Sub):
        return _sub(diff(e.left, name), diff(e.right, name))
    if isinstance(e, Mul):
        return _add(_mul(diff(e.left, name), e.right), _mul(e.left, diff(e.right, name)))
    if isinstance(e, Div):
        da, db = diff(e.left, name), diff(e.right, name)
        first = Div(da, e.right) if not _is_const(da, 0) else Const(0.0)
        second = Div(_mul(e.left, db), Mul(e.right, e.right)) if not _is_const(db, 0) else Const(0.0)
        return _sub(first, second)
    if isinstance(e, Pow):
        k = e.exponent
        inner = e.base if k - 1 == 1 else (Const(1.0) if k == 1 else Pow(e.base, k - 1))
        return _mul(_mul(Const(float(k)), inner), diff(e.base, name))
    if isinstance(e, Call):
        a = e.arg
        da = diff(a, name)
        outer = {
            "exp": lambda: e,
            "log": lambda: Div(Const(1.0), a),
            "sin": lambda: Call("cos", a),
            "cos": lambda: Neg(Call("sin", a)),
            "sqrt": lambda: Div(Const(0.5), e),
        }[e.func]()
        return _mul(outer, da)
    raise TypeError(f"cannot differentiate {e!r}")


def _source(e: Expr, index: Mapping, consts: dict) -> str:
    if isinstance(e, Const):
        return f"({e.value!r})"
    if isinstance(e, Var):
        if e.name not in index:
            raise UnboundVariable(e.name)
        return f"xs[{index[e.name]}]"
    if isinstance(e, Neg):
        return f"(-{_source(e.arg, index, consts)})"
    if isinstance(e, Div):
        return f"_div({_source(e.left, index, consts)}, {_source(e.right, index, consts)})"
    if isinstance(e, _Binary):
        return f"({_source(e.left, index, consts)} {e.symbol} {_source(e.right, index, consts)})"
    if isinstance(e, Pow):
        key = f"_k{len(consts)}"
        consts[key] = e.exponent
        return f"_pow({_source(e.base, index, consts)}, {key})"
    if isinstance(e, Call):
        return f"_{e.func}({_source(e.arg, index, consts)})"
    raise TypeError(f"cannot compile {e!r}")


def compile_expr(e: Expr, coords):
    """A function of a coordinate sequence performing the same operations as ``e.eval``."""
    consts = {}
    body = _source(e, {c: i for i, c in enumerate(coords)}, consts)
    ns = {"_div": ad.divide, "_pow": ad.power, **{f"_{k}": f for k, f in ad.FUNCTIONS.items()}, **consts}
    return eval(compile(f"lambda xs: {body}", "<expr>", "eval"), ns)
