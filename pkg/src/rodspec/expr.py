"""Small arithmetic expression language for coefficient and level-set fields.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

``^`` binds tighter than unary minus, so ``-x1^2`` is ``-(x1^2)``.  The only
free variables are ``x1``, ``y1`` and ``y2``; ``pi`` is a constant.

Evaluation is vectorised: any variable may be bound to a numpy array and the
result broadcasts accordingly.
"""
from __future__ import annotations

import math
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

VARIABLES = ("x1", "y1", "y2")
CONSTANTS = {"pi": math.pi}
FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "abs": (1, np.abs),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}
MAX_DEPTH = 200


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, offset: int, message: str):
        self.offset = offset
        self.message = message
        super().__init__(f"offset {offset}: {message}")


class EvalError(ExprError):
    pass


# --- AST -----------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
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
    name: str
    args: tuple


Node = Union[Const, Var, Neg, BinOp, Call]


# --- tokenizer -----------------------------------------------------------

def _tokenize(src: str):
    tokens = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch in " \t\r\n":
            i += 1
        elif ch.isdigit() or (ch == "." and i + 1 < n and src[i + 1].isdigit()):
            start = i
            while i < n and src[i].isdigit():
                i += 1
            if i < n and src[i] == ".":
                i += 1
                while i < n and src[i].isdigit():
                    i += 1
            if i < n and src[i] in "eE":
                j = i + 1
                if j < n and src[j] in "+-":
                    j += 1
                if j < n and src[j].isdigit():
                    while j < n and src[j].isdigit():
                        j += 1
                    i = j
                else:
                    raise ParseError(i, "malformed exponent in number")
            tokens.append(("num", src[start:i], start))
        elif ch.isascii() and (ch.isalpha() or ch == "_"):
            start = i
            while i < n and src[i].isascii() and (src[i].isalnum() or src[i] == "_"):
                i += 1
            tokens.append(("name", src[start:i], start))
        elif ch in "+-*/^(),":
            tokens.append((ch, ch, i))
            i += 1
        else:
            raise ParseError(i, f"unexpected character {ch!r}")
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.tokens = _tokenize(src)
        self.pos = 0
        self.depth = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str):
        tok = self.peek()
        if tok[0] != kind:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ParseError(tok[2], f"expected {kind!r}, found {what}")
        return self.take()

    def enter(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise ParseError(self.peek()[2], "expression nested too deeply")

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(tok[2], f"unexpected {tok[1]!r}")
        return node

    def expr(self) -> Node:
        self.enter()
        node = self.term()
        while self.peek()[0] in "+-":
            op = self.take()[0]
            node = BinOp(op, node, self.term())
        self.depth -= 1
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind = self.peek()[0]
        if kind in ("-", "+"):
            self.enter()
            self.take()
            operand = self.unary()
            self.depth -= 1
            return Neg(operand) if kind == "-" else operand
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            self.enter()
            exponent = self.unary()
            self.depth -= 1
            return BinOp("^", base, exponent)
        return base

    def atom(self) -> Node:
        kind, text, offset = self.peek()
        if kind == "num":
            self.take()
            return Const(float(text))
        if kind == "name":
            self.take()
            if self.peek()[0] == "(":
                if text not in FUNCTIONS:
                    raise ParseError(offset, f"unknown function {text!r}")
                arity, _ = FUNCTIONS[text]
                self.take()
                args = [self.expr()]
                while self.peek()[0] == ",":
                    self.take()
                    args.append(self.expr())
                close = self.expect(")")
                if len(args) != arity:
                    raise ParseError(close[2], f"{text} takes {arity} argument(s), got {len(args)}")
                return Call(text, tuple(args))
            if text in VARIABLES:
                return Var(text)
            if text in CONSTANTS:
                return Const(CONSTANTS[text])
            raise ParseError(offset, f"unknown identifier {text!r}")
        if kind == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(text)
        raise ParseError(offset, f"expected operand, found {what}")


# --- evaluation ----------------------------------------------------------

@contextmanager
def _stack_headroom():
    # parser and evaluator recurse ~5 frames per nesting level; make sure the
    # configured MAX_DEPTH is reachable regardless of the caller's stack depth
    need = 8 * MAX_DEPTH + 1000
    old = sys.getrecursionlimit()
    if old < need + 1000:
        sys.setrecursionlimit(need + 1000)
    yield

def _int_power(base, n: int):
    # binary exponentiation keeps integer powers exact and deterministic
    if n < 0:
        return 1.0 / _checked_nonzero(_int_power(base, -n))
    result = np.ones_like(base, dtype=float) if isinstance(base, np.ndarray) else 1.0
    while n:
        if n & 1:
            result = result * base
        base = base * base
        n >>= 1
    return result


def _checked_nonzero(x):
    if np.any(np.asarray(x) == 0):
        raise EvalError("division by zero")
    return x


def _eval(node: Node, env: Mapping[str, object]):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise EvalError(f"unbound variable {node.name!r}") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Call):
        _, fn = FUNCTIONS[node.name]
        value = fn(*[_eval(a, env) for a in node.args])
        return float(value) if np.ndim(value) == 0 else value
    left = _eval(node.left, env)
    right = _eval(node.right, env)
    if node.op == "^" and np.ndim(right) == 0 and abs(float(right)) <= 2 ** 31 \
            and float(right).is_integer():
        return _int_power(left, int(right))
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "/":
        return left / _checked_nonzero(right)
    # general real exponent via exp/log
    base = np.asarray(left, dtype=float)
    expo = np.asarray(right, dtype=float)
    if np.any(base < 0):
        raise EvalError("negative base with non-integer exponent")
    if np.any((base == 0) & (expo <= 0)):
        raise EvalError("zero base with non-positive exponent")
    with np.errstate(divide="ignore"):
        out = np.where(base > 0, np.exp(expo * np.log(np.where(base > 0, base, 1.0))), 0.0)
    return float(out) if out.ndim == 0 else out


def _tree_depth(node: Node) -> int:
    depth, stack = 0, [(node, 1)]
    while stack:
        n, d = stack.pop()
        depth = max(depth, d)
        if isinstance(n, Neg):
            stack.append((n.operand, d + 1))
        elif isinstance(n, BinOp):
            stack.extend([(n.left, d + 1), (n.right, d + 1)])
        elif isinstance(n, Call):
            stack.extend((a, d + 1) for a in n.args)
    return depth


def _variables(node: Node, acc: set):
    if isinstance(node, Var):
        acc.add(node.name)
    elif isinstance(node, Neg):
        _variables(node.operand, acc)
    elif isinstance(node, BinOp):
        _variables(node.left, acc)
        _variables(node.right, acc)
    elif isinstance(node, Call):
        for a in node.args:
            _variables(a, acc)
    return acc


def _pretty(node: Node) -> str:
    if isinstance(node, Const):
        return repr(float(node.value)) if node.value >= 0 else f"({float(node.value)!r})"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_pretty(node.operand)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(_pretty(a) for a in node.args)})"
    return f"({_pretty(node.left)} {node.op} {_pretty(node.right)})"


@dataclass(frozen=True)
class Expr:
    """Parsed expression; immutable and safe to share between workers."""

    ast: Node
    source: str = ""

    def __call__(self, x1=None, y1=None, y2=None):
        env = {k: v for k, v in (("x1", x1), ("y1", y1), ("y2", y2)) if v is not None}
        return evaluate(self, env)

    @property
    def variables(self) -> frozenset:
        return frozenset(_variables(self.ast, set()))

    @property
    def is_constant(self) -> bool:
        return not self.variables

    def pretty(self) -> str:
        return _pretty(self.ast)

    def __str__(self):
        return self.source or self.pretty()


def parse(src) -> Expr:
    """Parse ``src`` (str or bytes) into an :class:`Expr`.

    Raises
    ------
    ParseError
        With the byte offset of the offending token.
    """
    if isinstance(src, (bytes, bytearray)):
        try:
            src = bytes(src).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(exc.start, "input is not valid UTF-8") from None
    if not isinstance(src, str):
        raise TypeError("expression source must be str or bytes")
    if not src.strip():
        raise ParseError(0, "empty expression")
    with _stack_headroom():
        ast = _Parser(src).parse()
    if _tree_depth(ast) > 2 * MAX_DEPTH:
        raise ParseError(0, "expression tree too deep")
    return Expr(ast, src)


def evaluate(e: Expr, env: Mapping[str, object]):
    """Evaluate ``e`` with variables bound by ``env``.

    Scalars give a float, arrays give a float array.  Division by zero and
    out-of-domain powers raise :class:`EvalError` rather than producing
    ``inf``/``nan``.
    """
    env = {k: (np.asarray(v, dtype=float) if not np.isscalar(v) else float(v)) for k, v in env.items()}
    with _stack_headroom():
        value = _eval(e.ast, env)
    if isinstance(value, np.ndarray):
        return value.astype(float, copy=False)
    return float(value)


def as_expr(value) -> Expr:
    """Coerce a number, source string or :class:`Expr` into an :class:`Expr`."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return Expr(Const(float(value)), repr(float(value)))
    return parse(value)


def constant(src) -> float:
    """Evaluate a constant expression such as ``"1/64"``."""
    e = as_expr(src)
    if not e.is_constant:
        raise EvalError(f"expected a constant, got variables {sorted(e.variables)}")
    return evaluate(e, {})
