"""Small expression language for coefficient functions.

Expressions are built from numbers, the variables ``x``, ``t`` and ``eps``,
the constant ``pi``, the binary operators ``+ - * / ^``, unary minus and the
one-argument functions ``sin cos exp log tanh sqrt``.  Trees are immutable;
:func:`compile_expr` turns a tree into a vectorized numpy callable.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

VARIABLES = ("x", "t", "eps")
FUNCTIONS = ("sin", "cos", "exp", "log", "tanh", "sqrt")
NAMED_CONSTANTS = {"pi": math.pi}


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r}", offset)
        self.name = name


class ArityError(ExprSyntaxError):
    pass


class DomainError(ExprError, ArithmeticError):
    def __init__(self, message: str, subexpression: "Node"):
        super().__init__(f"{message} in '{to_string(subexpression)}'")
        self.subexpression = subexpression


class UnboundVariableError(ExprError, KeyError):
    pass


# ---------------------------------------------------------------------------
# tree


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Const, Neg, BinOp, Call]


# ---------------------------------------------------------------------------
# tokenizer and Pratt parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)

_BINARY_POWER = {"+": (10, 11), "-": (10, 11), "*": (20, 21), "/": (20, 21), "^": (41, 40)}
_UNARY_MINUS_POWER = 30


@dataclass
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, constants: Mapping[str, float]):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.constants = constants

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.advance()
        if tok.text != text:
            found = tok.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {found!r}", tok.offset)
        return tok

    def parse(self) -> Node:
        node = self.expression(0)
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected token {tok.text!r}", tok.offset)
        return node

    def expression(self, min_power: int) -> Node:
        left = self.prefix()
        while True:
            tok = self.peek()
            if tok.kind != "op" or tok.text not in _BINARY_POWER:
                break
            lpow, rpow = _BINARY_POWER[tok.text]
            if lpow < min_power:
                break
            self.advance()
            left = BinOp(tok.text, left, self.expression(rpow))
        return left

    def prefix(self) -> Node:
        tok = self.advance()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.text == "-":
            return Neg(self.expression(_UNARY_MINUS_POWER))
        if tok.text == "+":
            return self.expression(_UNARY_MINUS_POWER)
        if tok.text == "(":
            node = self.expression(0)
            self.expect(")")
            return node
        if tok.kind == "name":
            return self.name(tok)
        found = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", tok.offset)

    def name(self, tok: _Token) -> Node:
        name = tok.text
        if name in FUNCTIONS:
            if self.peek().text != "(":
                raise ArityError(f"function {name!r} requires one argument", tok.offset)
            self.advance()
            if self.peek().text == ")":
                raise ArityError(f"function {name!r} called with no arguments", tok.offset)
            arg = self.expression(0)
            nxt = self.peek()
            if nxt.text == ",":
                raise ArityError(f"function {name!r} takes exactly one argument", nxt.offset)
            self.expect(")")
            return Call(name, arg)
        if self.peek().text == "(":
            raise UnknownIdentifierError(name, tok.offset)
        if name in VARIABLES:
            return Var(name)
        if name in NAMED_CONSTANTS:
            return Const(name)
        if name in self.constants:
            return Num(float(self.constants[name]))
        raise UnknownIdentifierError(name, tok.offset)


def parse(text: str, constants: Mapping[str, float] | None = None) -> Node:
    """Parse ``text`` into an expression tree.

    ``constants`` maps extra names (for example ``T``) to numbers that are
    substituted as literals while parsing.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text, constants or {}).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3


def _format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def to_string(node: Node) -> str:
    """Render a tree so that :func:`parse` rebuilds the same tree."""
    return _render(node)[0]


def _render(node: Node) -> tuple[str, int]:
    if isinstance(node, Num):
        if node.value < 0 or math.copysign(1.0, node.value) < 0:
            return f"(0-{_format_number(-node.value)})", 5
        return _format_number(node.value), 5
    if isinstance(node, (Var, Const)):
        return node.name, 5
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})", 5
    if isinstance(node, Neg):
        inner, prec = _render(node.operand)
        if prec < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}", _NEG_PREC
    prec = _PREC[node.op]
    left, lp = _render(node.left)
    right, rp = _render(node.right)
    if node.op == "^":
        if lp <= prec:
            left = f"({left})"
        if rp < _NEG_PREC:
            right = f"({right})"
    else:
        if lp < prec:
            left = f"({left})"
        if rp <= prec:
            right = f"({right})"
    return f"{left}{node.op}{right}", prec


# ---------------------------------------------------------------------------
# evaluation

Array = Union[float, np.ndarray]


def _check_log(v, node):
    if np.any(np.asarray(v) <= 0):
        raise DomainError("log of non-positive value", node)


def _check_sqrt(v, node):
    if np.any(np.asarray(v) < 0):
        raise DomainError("sqrt of negative value", node)


_UFUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "tanh": np.tanh,
    "sqrt": np.sqrt,
}
_CHECKS = {"log": _check_log, "sqrt": _check_sqrt}


def _power(base, expo, node):
    base_a = np.asarray(base, dtype=float)
    expo_a = np.asarray(expo, dtype=float)
    bad = (base_a < 0) & (expo_a != np.round(expo_a))
    if np.any(bad):
        raise DomainError("non-integer power of a negative base", node)
    if np.any((base_a == 0) & (expo_a < 0)):
        raise DomainError("division by zero", node)
    return np.power(base_a, expo_a)


def _divide(num, den, node):
    if np.any(np.asarray(den) == 0):
        raise DomainError("division by zero", node)
    return np.divide(num, den)


def compile_expr(node: Node) -> Callable[[Mapping[str, Array]], Array]:
    """Compile a tree into ``f(env)`` evaluating with numpy broadcasting."""
    if isinstance(node, Num):
        value = node.value
        return lambda env: value
    if isinstance(node, Const):
        value = NAMED_CONSTANTS[node.name]
        return lambda env: value
    if isinstance(node, Var):
        name = node.name

        def var(env):
            try:
                return env[name]
            except KeyError:
                raise UnboundVariableError(f"variable {name!r} is not bound") from None

        return var
    if isinstance(node, Neg):
        inner = compile_expr(node.operand)
        return lambda env: -inner(env)
    if isinstance(node, Call):
        inner = compile_expr(node.arg)
        ufunc = _UFUNCS[node.func]
        check = _CHECKS.get(node.func)
        if check is None:
            return lambda env: ufunc(inner(env))

        def call(env):
            v = inner(env)
            check(v, node)
            return ufunc(v)

        return call
    left = compile_expr(node.left)
    right = compile_expr(node.right)
    op = node.op
    if op == "+":
        return lambda env: left(env) + right(env)
    if op == "-":
        return lambda env: left(env) - right(env)
    if op == "*":
        return lambda env: left(env) * right(env)
    if op == "/":
        return lambda env: _divide(left(env), right(env), node)
    return lambda env: _power(left(env), right(env), node)


def evaluate(node: Node, env: Mapping[str, Array]) -> Array:
    """Evaluate ``node`` with variables taken from ``env``.

    Scalars in give a float out; arrays broadcast.
    """
    with np.errstate(over="ignore"):
        out = compile_expr(node)(env)
    if np.ndim(out) == 0:
        return float(out)
    return out


def variables(node: Node) -> frozenset[str]:
    """Names of the variables occurring in ``node``."""
    if isinstance(node, Var):
        return frozenset([node.name])
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, Call):
        return variables(node.arg)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return frozenset()


def substitute(node: Node, mapping: Mapping[str, Node]) -> Node:
    """Replace variables by trees."""
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Neg):
        return Neg(substitute(node.operand, mapping))
    if isinstance(node, Call):
        return Call(node.func, substitute(node.arg, mapping))
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, mapping), substitute(node.right, mapping))
    return node


# ---------------------------------------------------------------------------
# symbolic differentiation
#
# The constructors below fold the trivial identities produced by the chain
# rule (0*u, 1*u, u+0) so derivative trees stay small enough to evaluate on
# large grids.


ZERO = Num(0.0)
ONE = Num(1.0)


def _is_num(node: Node, value: float | None = None) -> bool:
    return isinstance(node, Num) and (value is None or node.value == value)


def add(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    if isinstance(b, Neg):
        return BinOp("-", a, b.operand)
    return BinOp("+", a, b)


def sub(a: Node, b: Node) -> Node:
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return neg(b)
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def div(a: Node, b: Node) -> Node:
    if _is_num(b, 1.0):
        return a
    if _is_num(a, 0.0):
        return ZERO
    return BinOp("/", a, b)


def neg(a: Node) -> Node:
    if isinstance(a, Num):
        return Num(-a.value) if a.value != 0.0 else ZERO
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def power(a: Node, b: Node) -> Node:
    if _is_num(b, 1.0):
        return a
    if _is_num(b, 0.0):
        return ONE
    return BinOp("^", a, b)


def differentiate(node: Node, var: str) -> Node:
    """Symbolic derivative of ``node`` with respect to ``var``."""
    if var not in VARIABLES:
        raise ExprError(f"cannot differentiate with respect to {var!r}")
    return _diff(node, var)


def _diff(node: Node, var: str) -> Node:
    if isinstance(node, (Num, Const)):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == var else ZERO
    if isinstance(node, Neg):
        return neg(_diff(node.operand, var))
    if isinstance(node, Call):
        u = node.arg
        du = _diff(u, var)
        if _is_num(du, 0.0):
            return ZERO
        f = node.func
        if f == "sin":
            outer = Call("cos", u)
        elif f == "cos":
            outer = neg(Call("sin", u))
        elif f == "exp":
            outer = node
        elif f == "log":
            return div(du, u)
        elif f == "tanh":
            outer = sub(ONE, power(node, Num(2.0)))
        else:  # sqrt
            return div(du, mul(Num(2.0), node))
        return mul(outer, du)
    u, v = node.left, node.right
    du, dv = _diff(u, var), _diff(v, var)
    op = node.op
    if op == "+":
        return add(du, dv)
    if op == "-":
        return sub(du, dv)
    if op == "*":
        return add(mul(du, v), mul(u, dv))
    if op == "/":
        if _is_num(dv, 0.0):
            return div(du, v)
        return div(sub(mul(du, v), mul(u, dv)), power(v, Num(2.0)))
    # power
    if _is_num(dv, 0.0):
        if _is_num(du, 0.0):
            return ZERO
        if isinstance(v, Num):
            lowered = Num(v.value - 1.0)
        else:
            lowered = sub(v, ONE)
        return mul(mul(v, power(u, lowered)), du)
    # u^v * (v' log u + v u'/u)
    return mul(node, add(mul(dv, Call("log", u)), div(mul(v, du), u)))
