"""A small arithmetic expression language for declaring vector fields.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' power)?            # right associative
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

Names are ``x1..xn``, ``u1..um`` and the constant ``pi``; functions are
``sin``, ``cos`` and ``abs``. Exponents must fold to nonnegative integers.
Evaluation is vectorized: variables may be arrays with a trailing component axis.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainError, EvaluationError, ExprSyntaxError

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "abs": np.abs}
CONSTANTS = {"pi": math.pi}


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "u"
    index: int  # zero-based


@dataclass(frozen=True)
class Unary:
    op: str  # "neg", "sin", "cos", "abs"
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str  # "+", "-", "*", "/"
    left: "Node"
    right: "Node"
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


Node = Union[Const, Var, Unary, Binary, Pow]


@dataclass(frozen=True)
class ExprAst:
    root: Node
    n_x: int
    n_u: int
    source: str = field(default="", compare=False)

    def __call__(self, x, u=None):
        return eval_ast(self, x, u)

    def __str__(self):
        return to_text(self.root)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)
_VAR = re.compile(r"([xu])([1-9][0-9]*)$")


class _Parser:
    def __init__(self, text: str, n_x: int, n_u: int, byte_offsets):
        self.text = text
        self.n_x, self.n_u = n_x, n_u
        self._boff = byte_offsets
        self.toks = self._tokenize()
        self.i = 0

    def _err(self, msg, char_pos):
        raise ExprSyntaxError(msg, self._boff(char_pos))

    def _tokenize(self):
        toks, pos, text = [], 0, self.text
        while True:
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos >= len(text):
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                self._err(f"unexpected character {text[pos]!r}", pos)
            kind = m.lastgroup
            start = m.start(kind)
            toks.append((kind, m.group(kind), start))
            pos = m.end()
        toks.append(("end", "", len(text)))
        return toks

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            self._err(f"expected {value!r}", pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            self._err(f"unexpected {text!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, pos = self.take()
            node = Binary(op, node, self.term(), pos)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, pos = self.take()
            node = Binary(op, node, self.unary(), pos)
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Unary("neg", self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.take()
            exp_pos = self.peek()[2]
            exponent = self.power()
            value = _fold_constant(exponent)
            if value is None or value < 0 or value != int(value) or value > 1024:
                self._err("exponent must be a nonnegative integer constant", exp_pos)
            return Pow(base, int(value))
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                self._err("numeric literal out of range", pos)
            return Const(value)
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if text in CONSTANTS:
                return Const(CONSTANTS[text])
            m = _VAR.match(text)
            if m is None:
                self._err(f"unknown identifier {text!r}", pos)
            var_kind, idx = m.group(1), int(m.group(2))
            limit = self.n_x if var_kind == "x" else self.n_u
            if idx > limit:
                self._err(f"variable {text} out of range (only {limit} declared)", pos)
            return Var(var_kind, idx - 1)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            self._err("unexpected end of input", pos)
        self._err(f"unexpected {text!r}", pos)


def _fold_constant(node: Node):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Pow):
        b = _fold_constant(node.base)
        return None if b is None else b ** node.exponent
    if isinstance(node, Unary) and node.op == "neg":
        v = _fold_constant(node.arg)
        return None if v is None else -v
    return None


def parse_expression(text, n_x: int, n_u: int) -> ExprAst:
    """Parse ``text`` into an :class:`ExprAst` over ``x1..x{n_x}``, ``u1..u{n_u}``.

    ``text`` may be ``str`` or ``bytes``; error offsets are byte offsets.
    """
    if isinstance(text, (bytes, bytearray)):
        # latin-1 keeps a one-to-one char/byte mapping; non-ASCII is rejected by the tokenizer
        text = bytes(text).decode("latin-1")

        def boff(i):
            return i
    else:
        def boff(i):
            return len(text[:i].encode("utf-8", "surrogatepass"))
    if not text.strip():
        raise ExprSyntaxError("empty expression", boff(len(text)))
    root = _Parser(text, n_x, n_u, boff).parse()
    return ExprAst(root, n_x, n_u, text)


def _eval(node: Node, x, u):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        src = x if node.kind == "x" else u
        return src[..., node.index]
    if isinstance(node, Unary):
        a = _eval(node.arg, x, u)
        if node.op == "neg":
            return -a
        return FUNCTIONS[node.op](a)
    if isinstance(node, Pow):
        a = _eval(node.base, x, u)
        out = 1.0
        for _ in range(node.exponent):
            out = out * a
        return out
    a = _eval(node.left, x, u)
    b = _eval(node.right, x, u)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if np.any(np.asarray(b) == 0):
        raise DomainError(f"division by zero (operator at offset {node.offset})")
    return a / b


def eval_ast(ast: ExprAst, x, u=None):
    """Evaluate in double precision. Scalar in, float out; batches broadcast."""
    x = np.asarray(x, dtype=float)
    u = np.zeros(x.shape[:-1] + (0,)) if u is None else np.asarray(u, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if u.ndim == 0:
        u = u.reshape(1)
    if x.shape[-1] != ast.n_x or u.shape[-1] != ast.n_u:
        raise ValueError(f"expected {ast.n_x} states and {ast.n_u} inputs")
    with np.errstate(all="ignore"):
        val = _eval(ast.root, x, u)
    val = np.broadcast_to(np.asarray(val, dtype=float), np.broadcast_shapes(x.shape[:-1], u.shape[:-1]))
    if not np.all(np.isfinite(val)):
        raise EvaluationError(f"non-finite value of {to_text(ast.root)}")
    return float(val) if val.ndim == 0 else val.copy()


_INFIX = {"+", "-", "*", "/"}


def to_text(node: Node) -> str:
    """Fully parenthesized text that re-parses to the same tree."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"{node.kind}{node.index + 1}"
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{to_text(node.arg)})"
        return f"{node.op}({to_text(node.arg)})"
    if isinstance(node, Pow):
        return f"({to_text(node.base)} ^ {node.exponent})"
    return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
