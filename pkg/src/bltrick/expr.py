"""Scalar arithmetic expressions for user-supplied nonlinearities.

Grammar (Pratt parser, no implicit multiplication)::

    expr   := number | name | '-' expr | expr op expr | name '(' args ')' | '(' expr ')'
    op     := '+' | '-' | '*' | '/' | '^'

Precedence from tightest to loosest: ``^`` (right-associative), unary ``-``,
``* /``, ``+ -``.  So ``-2^2`` is ``-(2^2)`` and ``2^3^2`` is ``2^(3^2)``.

Builtin functions: abs, min, max, exp, log, sqrt, pow, sign, pos
(``pos(x) = max(x, 0)``).

ASTs are immutable.  Evaluation works on Python floats (:func:`evaluate`) or
elementwise on numpy arrays (:func:`evaluate_array`).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "DomainError",
    "UnboundVariableError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expr",
    "parse",
    "evaluate",
    "evaluate_array",
    "diff_numeric",
    "to_source",
    "variables_of",
    "FUNCTIONS",
]


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ArityError(ExprSyntaxError):
    pass


class DomainError(ExprError):
    def __init__(self, message: str, subexpr: str):
        super().__init__(f"{message} in '{subexpr}'")
        self.subexpr = subexpr


class UnboundVariableError(ExprError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]

# name -> arity
FUNCTIONS = {
    "abs": 1,
    "min": 2,
    "max": 2,
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "pow": 2,
    "sign": 1,
    "pos": 1,
}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)

# left binding powers
_LBP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}
_UNARY_BP = 25


@dataclass
class _Token:
    kind: str  # 'num', 'name', 'op', 'end'
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    byte_pos = 0
    n = len(source)
    while pos < n:
        if source[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            stripped = len(source[pos:]) - len(source[pos:].lstrip())
            bad = pos + stripped
            raise ExprSyntaxError(
                f"unexpected character {source[bad]!r}", len(source[:bad].encode())
            )
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(_Token(kind, m.group(kind), len(source[:start].encode())))
        pos = m.end()
    byte_pos = len(source.encode())
    tokens.append(_Token("end", "", byte_pos))
    return tokens


class _Parser:
    def __init__(self, source: str, variables: frozenset):
        self.tokens = _tokenize(source)
        self.i = 0
        self.variables = variables

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> None:
        t = self.tok
        if t.kind != "op" or t.text != text:
            found = "end of input" if t.kind == "end" else repr(t.text)
            raise ExprSyntaxError(f"expected {text!r}, found {found}", t.offset)
        self.advance()

    def lbp(self, t: _Token) -> int:
        if t.kind == "op":
            return _LBP.get(t.text, 0)
        if t.kind in ("num", "name"):
            # adjacent operands: implicit multiplication is not supported
            raise ExprSyntaxError(f"unexpected {t.text!r}", t.offset)
        return 0

    def expression(self, rbp: int = 0) -> Expr:
        left = self.nud(self.advance())
        while rbp < self.lbp(self.tok):
            left = self.led(self.advance(), left)
        return left

    def nud(self, t: _Token) -> Expr:
        if t.kind == "num":
            return Num(float(t.text))
        if t.kind == "name":
            if self.tok.kind == "op" and self.tok.text == "(":
                return self.call(t)
            if t.text in FUNCTIONS:
                raise ExprSyntaxError(f"function {t.text!r} used without arguments", t.offset)
            if t.text not in self.variables:
                raise UnknownIdentifierError(f"unknown identifier {t.text!r}", t.offset)
            return Var(t.text)
        if t.kind == "op" and t.text == "-":
            return Neg(self.expression(_UNARY_BP))
        if t.kind == "op" and t.text == "(":
            e = self.expression(0)
            self.expect(")")
            return e
        if t.kind == "end":
            raise ExprSyntaxError("unexpected end of input", t.offset)
        raise ExprSyntaxError(f"unexpected {t.text!r}", t.offset)

    def led(self, t: _Token, left: Expr) -> Expr:
        op = t.text
        if op == "^":
            right = self.expression(_LBP["^"] - 1)
        else:
            right = self.expression(_LBP[op])
        return BinOp(op, left, right)

    def call(self, name_tok: _Token) -> Expr:
        name = name_tok.text
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function {name!r}", name_tok.offset)
        self.expect("(")
        args = []
        if not (self.tok.kind == "op" and self.tok.text == ")"):
            args.append(self.expression(0))
            while self.tok.kind == "op" and self.tok.text == ",":
                self.advance()
                args.append(self.expression(0))
        self.expect(")")
        if len(args) != FUNCTIONS[name]:
            raise ArityError(
                f"{name}() takes {FUNCTIONS[name]} argument(s), got {len(args)}",
                name_tok.offset,
            )
        return Call(name, tuple(args))


def parse(source: str, variables: Iterable[str] = ()) -> Expr:
    """Parse ``source`` into an AST whose variables are drawn from ``variables``."""
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0)
    p = _Parser(source, frozenset(variables))
    e = p.expression(0)
    if p.tok.kind != "end":
        raise ExprSyntaxError(f"unexpected {p.tok.text!r}", p.tok.offset)
    return e


def to_source(e: Expr) -> str:
    """Fully parenthesized source text; re-parses to an equivalent AST."""
    if isinstance(e, Num):
        text = repr(float(e.value))
        return f"({text})" if e.value < 0 else text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


def variables_of(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return variables_of(e.operand)
    if isinstance(e, BinOp):
        return variables_of(e.left) | variables_of(e.right)
    if isinstance(e, Call):
        out: set[str] = set()
        for a in e.args:
            out |= variables_of(a)
        return out
    return set()


def _sign(x: float) -> float:
    return float((x > 0) - (x < 0))


_SCALAR_FUNCS = {
    "abs": abs,
    "min": min,
    "max": max,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "pow": math.pow,
    "sign": _sign,
    "pos": lambda x: max(x, 0.0),
}


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate at scalar bindings; raises DomainError outside the domain."""
    if isinstance(e, Num):
        return float(e.value)
    if isinstance(e, Var):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise UnboundVariableError(f"variable {e.name!r} is not bound") from None
    if isinstance(e, Neg):
        return -evaluate(e.operand, bindings)
    if isinstance(e, BinOp):
        a = evaluate(e.left, bindings)
        b = evaluate(e.right, bindings)
        try:
            if e.op == "+":
                r = a + b
            elif e.op == "-":
                r = a - b
            elif e.op == "*":
                r = a * b
            elif e.op == "/":
                r = a / b
            else:
                r = math.pow(a, b)
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise DomainError(str(exc), to_source(e)) from None
        if not math.isfinite(r):
            raise DomainError("non-finite result", to_source(e))
        return r
    if isinstance(e, Call):
        args = [evaluate(a, bindings) for a in e.args]
        try:
            r = float(_SCALAR_FUNCS[e.func](*args))
        except (ValueError, OverflowError, ZeroDivisionError) as exc:
            raise DomainError(str(exc), to_source(e)) from None
        if not math.isfinite(r):
            raise DomainError("non-finite result", to_source(e))
        return r
    raise TypeError(f"not an expression node: {e!r}")


_ARRAY_FUNCS = {
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "pow": np.power,
    "sign": np.sign,
    "pos": lambda x: np.maximum(x, 0.0),
}


def _eval_arr(e: Expr, bindings: Mapping[str, np.ndarray]) -> np.ndarray:
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, Var):
        try:
            return bindings[e.name]
        except KeyError:
            raise UnboundVariableError(f"variable {e.name!r} is not bound") from None
    if isinstance(e, Neg):
        return -_eval_arr(e.operand, bindings)
    if isinstance(e, BinOp):
        a = _eval_arr(e.left, bindings)
        b = _eval_arr(e.right, bindings)
        if e.op == "+":
            r = a + b
        elif e.op == "-":
            r = a - b
        elif e.op == "*":
            r = a * b
        elif e.op == "/":
            r = a / b
        else:
            r = np.power(a, b)
    elif isinstance(e, Call):
        r = _ARRAY_FUNCS[e.func](*[_eval_arr(a, bindings) for a in e.args])
    else:
        raise TypeError(f"not an expression node: {e!r}")
    if not np.all(np.isfinite(r)):
        raise DomainError("non-finite result", to_source(e))
    return r


def evaluate_array(e: Expr, bindings: Mapping[str, np.ndarray]) -> np.ndarray:
    """Elementwise evaluation over numpy arrays (broadcasting bindings)."""
    arrays = {k: np.asarray(v, dtype=float) for k, v in bindings.items()}
    shape = np.broadcast_shapes(*(a.shape for a in arrays.values())) if arrays else ()
    with np.errstate(all="ignore"):
        out = _eval_arr(e, arrays)
    return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()


def diff_numeric(e: Expr, var: str, point: Mapping[str, float], step: float = 1e-6) -> float:
    """Central difference of ``e`` in ``var`` with step ``step * max(1, |x|)``."""
    if not step > 0:
        raise ValueError("step must be positive")
    x = float(point[var])
    h = step * max(1.0, abs(x))
    hi = dict(point)
    lo = dict(point)
    hi[var] = x + h
    lo[var] = x - h
    return (evaluate(e, hi) - evaluate(e, lo)) / (2.0 * h)
