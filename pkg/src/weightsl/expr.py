"""A small arithmetic expression language for weights, loads and currents.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' exponent)?          right associative
    exponent := ('-' | '+') exponent | power
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Variables are ``x``, ``y`` and ``t``; ``pi`` is a constant.  Evaluation is
vectorised over numpy arrays.  Values can also be evaluated together with
their spatial gradient by forward-mode differentiation of the tree.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

VARIABLES = ("x", "y", "t")
CONSTANTS = {"pi": math.pi}
FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "abs": 1, "pow": 2}


class ExpressionError(ValueError):
    """Base class for parse and evaluation failures."""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, position: int, source: str = ""):
        self.position = position
        self.source = source
        super().__init__(f"{message} at position {position}")


class EvaluationError(ExpressionError):
    def __init__(self, message: str, point: Mapping[str, float]):
        self.point = dict(point)
        where = ", ".join(f"{k}={v!r}" for k, v in self.point.items())
        super().__init__(f"{message} at ({where})")


# -- syntax tree -----------------------------------------------------------


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
    name: str
    args: tuple


Node = Num | Var | Const | Neg | BinOp | Call


# -- tokenizer / parser ----------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None:
            stripped = len(source[pos:]) - len(source[pos:].lstrip())
            raise ExpressionSyntaxError(
                f"unexpected character {source[pos + stripped]!r}", pos + stripped, source
            )
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ExpressionSyntaxError(f"expected {value!r}, found {found}", pos, self.source)

    def error(self, message: str):
        raise ExpressionSyntaxError(message, self.peek()[2], self.source)

    def parse(self) -> Node:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {text!r}", pos, self.source)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def exponent(self) -> Node:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.exponent())
        if kind == "op" and text == "+":
            self.take()
            return self.exponent()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek() == ("op", "^", self.peek()[2]):
            self.take()
            return BinOp("^", base, self.exponent())
        return base

    def atom(self) -> Node:
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise ExpressionSyntaxError(f"unknown function {text!r}", pos, self.source)
                self.take()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise ExpressionSyntaxError(
                        f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}", pos, self.source
                    )
                return Call(text, tuple(args))
            if text in VARIABLES:
                return Var(text)
            if text in CONSTANTS:
                return Const(text)
            raise ExpressionSyntaxError(f"unknown identifier {text!r}", pos, self.source)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExpressionSyntaxError(f"unexpected {found}", pos, self.source)


def unparse(node: Node) -> str:
    """Fully parenthesised source text; ``parse(unparse(t)) == t``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Neg):
        return f"(-{unparse(node.operand)})"
    if isinstance(node, BinOp):
        return f"({unparse(node.left)}{node.op}{unparse(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(unparse(a) for a in node.args)})"
    raise TypeError(node)


def _depends(node: Node, names: Sequence[str]) -> bool:
    if isinstance(node, Var):
        return node.name in names
    if isinstance(node, Neg):
        return _depends(node.operand, names)
    if isinstance(node, BinOp):
        return _depends(node.left, names) or _depends(node.right, names)
    if isinstance(node, Call):
        return any(_depends(a, names) for a in node.args)
    return False


# -- evaluation ------------------------------------------------------------


class _Evaluator:
    """Walks the tree with numpy arrays, optionally carrying derivatives."""

    def __init__(self, env: Mapping[str, np.ndarray], wrt: Sequence[str] = ()):
        self.env = env
        self.wrt = tuple(wrt)
        self.shape = np.broadcast_shapes(*(np.shape(v) for v in env.values())) if env else ()

    def fail(self, message: str, mask: np.ndarray):
        idx = np.flatnonzero(np.broadcast_to(mask, self.shape) if self.shape else np.atleast_1d(mask))[0]
        point = {}
        for name, value in self.env.items():
            arr = np.broadcast_to(np.asarray(value, dtype=float), self.shape)
            point[name] = float(arr.reshape(-1)[idx]) if arr.ndim else float(arr)
        raise EvaluationError(message, point)

    def zeros(self):
        return [0.0 for _ in self.wrt]

    def run(self, node: Node):
        """Return (value, [d value / d w for w in wrt])."""
        if isinstance(node, Num):
            return node.value, self.zeros()
        if isinstance(node, Const):
            return CONSTANTS[node.name], self.zeros()
        if isinstance(node, Var):
            if node.name not in self.env:
                raise EvaluationError(f"variable {node.name!r} is not bound", {})
            val = np.asarray(self.env[node.name], dtype=float)
            return val, [1.0 if w == node.name else 0.0 for w in self.wrt]
        if isinstance(node, Neg):
            v, d = self.run(node.operand)
            return -v, [-g for g in d]
        if isinstance(node, BinOp):
            return self.binop(node)
        return self.call(node)

    def binop(self, node: BinOp):
        a, da = self.run(node.left)
        b, db = self.run(node.right)
        op = node.op
        if op == "+":
            return a + b, [p + q for p, q in zip(da, db)]
        if op == "-":
            return a - b, [p - q for p, q in zip(da, db)]
        if op == "*":
            return a * b, [p * b + a * q for p, q in zip(da, db)]
        if op == "/":
            zero = np.asarray(b) == 0
            if np.any(zero):
                self.fail("division by zero", zero)
            val = a / b
            return val, [(p - val * q) / b for p, q in zip(da, db)]
        return self.pow(a, da, b, db, _depends(node.right, self.wrt))

    def pow(self, a, da, b, db, exponent_varies: bool):
        val = np.power(a, b) if (np.ndim(a) or np.ndim(b)) else _scalar_pow(a, b)
        if not self.wrt:
            return val, []
        if exponent_varies:
            loga = np.log(a)
            grads = [val * (q * loga + b * p / a) for p, q in zip(da, db)]
        else:
            dpow = b * np.power(a, b - 1.0)
            grads = [dpow * p if not _is_zero(p) else 0.0 for p in da]
        return val, grads

    def call(self, node: Call):
        name = node.name
        if name == "pow":
            a, da = self.run(node.args[0])
            b, db = self.run(node.args[1])
            return self.pow(a, da, b, db, _depends(node.args[1], self.wrt))
        a, da = self.run(node.args[0])
        if name == "sin":
            return np.sin(a), [np.cos(a) * p for p in da]
        if name == "cos":
            return np.cos(a), [-np.sin(a) * p for p in da]
        if name == "exp":
            e = np.exp(a)
            return e, [e * p for p in da]
        if name == "log":
            neg = np.asarray(a) < 0
            if np.any(neg):
                self.fail("log of a negative argument", neg)
            return np.log(a), [p / a for p in da]
        if name == "sqrt":
            neg = np.asarray(a) < 0
            if np.any(neg):
                self.fail("sqrt of a negative argument", neg)
            r = np.sqrt(a)
            return r, [p / (2.0 * r) if not _is_zero(p) else 0.0 for p in da]
        if name == "abs":
            return np.abs(a), [np.sign(a) * p for p in da]
        raise EvaluationError(f"unknown function {name!r}", {})


def _is_zero(g) -> bool:
    return np.isscalar(g) and g == 0.0


def _scalar_pow(a, b):
    try:
        return float(a) ** float(b) if not (a < 0 and b != int(b)) else math.nan
    except (OverflowError, ZeroDivisionError):
        return math.inf


class Expression:
    """Parsed expression over ``x``, ``y``, ``t``.

    Calling with a coordinate array of shape ``(P, dim)`` returns ``P`` values;
    the time variable comes from ``t`` (default 0).
    """

    def __init__(self, tree: Node, source: str | None = None):
        self.tree = tree
        self.source = source if source is not None else unparse(tree)

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and self.tree == other.tree

    def __hash__(self):
        return hash(self.tree)

    @staticmethod
    def _env(points, t) -> dict:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        env = {"x": pts[:, 0], "t": np.full(pts.shape[0], float(t))}
        env["y"] = pts[:, 1] if pts.shape[1] > 1 else np.zeros(pts.shape[0])
        return env

    def evaluate(self, **variables) -> np.ndarray:
        with np.errstate(all="ignore"):
            val, _ = _Evaluator(variables).run(self.tree)
        return val

    def __call__(self, points, t: float = 0.0) -> np.ndarray:
        env = self._env(points, t)
        with np.errstate(all="ignore"):
            val, _ = _Evaluator(env).run(self.tree)
        return np.broadcast_to(np.asarray(val, dtype=float), env["x"].shape).copy()

    def value_and_gradient(self, points, t: float = 0.0):
        """Values ``(P,)`` and spatial gradient ``(P, dim)`` by forward differentiation."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dim = pts.shape[1]
        env = self._env(pts, t)
        wrt = VARIABLES[:dim]
        with np.errstate(all="ignore"):
            val, grads = _Evaluator(env, wrt).run(self.tree)
        n = pts.shape[0]
        val = np.broadcast_to(np.asarray(val, dtype=float), (n,)).copy()
        grad = np.column_stack([np.broadcast_to(np.asarray(g, dtype=float), (n,)) for g in grads])
        return val, grad

    def gradient(self, points, t: float = 0.0) -> np.ndarray:
        return self.value_and_gradient(points, t)[1]

    def bind(self, t: float) -> Callable:
        return lambda points: self(points, t)

    def uses(self, name: str) -> bool:
        return _depends(self.tree, (name,))


def parse_expression(source: str) -> Expression:
    """Parse ``source`` into an :class:`Expression`.

    Raises :class:`ExpressionSyntaxError` (with the character position) for
    malformed input or unknown identifiers.
    """
    if not isinstance(source, str):
        raise ExpressionSyntaxError("expression must be a string", 0, str(source))
    return Expression(_Parser(source).parse(), source)
