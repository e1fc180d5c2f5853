"""Expression language for user-defined maps.

Grammar::

    map      := expr (";" expr)*
    expr     := term (("+"|"-") term)*
    term     := factor (("*"|"/") factor)*
    factor   := "-" factor | base ("^" integer)?
    base     := number | variable | func "(" expr ")" | "(" expr ")"
    variable := "x" positive-integer
    func     := "sin" | "cos" | "exp" | "tanh" | "abs"

``^`` binds tighter than unary minus, so ``-x1^2`` means ``-(x1^2)``.

Parsed trees are compiled to straight-line Python code twice: once for plain
values and once carrying forward-mode tangent components alongside every
intermediate (dual arithmetic unrolled per input coordinate). The same
generated source runs on floats (``math`` namespace) and on numpy arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from miranda.errors import ParseError

FUNCTIONS = ("sin", "cos", "exp", "tanh", "abs")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, as written in the source


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, Bin, Pow, Call]


# --------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^();])
    """,
    re.VERBOSE,
)
_VAR_RE = re.compile(r"x([1-9]\d*)\Z")


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def take(self, text: str | None = None) -> _Tok:
        tok = self.tok
        if text is not None and tok.text != text:
            found = tok.text or "end of input"
            raise ParseError(f"expected {text!r}, found {found!r}", tok.pos)
        self.i += 1
        return tok

    def parse_map(self) -> list[Node]:
        exprs = [self.parse_expr()]
        while self.tok.text == ";":
            self.take()
            exprs.append(self.parse_expr())
        if self.tok.kind != "end":
            raise ParseError(f"unexpected token {self.tok.text!r}", self.tok.pos)
        return exprs

    def parse_expr(self) -> Node:
        node = self.parse_term()
        while self.tok.text in ("+", "-"):
            op = self.take().text
            node = Bin(op, node, self.parse_term())
        return node

    def parse_term(self) -> Node:
        node = self.parse_factor()
        while self.tok.text in ("*", "/"):
            op = self.take().text
            node = Bin(op, node, self.parse_factor())
        return node

    def parse_factor(self) -> Node:
        if self.tok.text == "-":
            self.take()
            return Neg(self.parse_factor())
        node = self.parse_base()
        if self.tok.text == "^":
            self.take()
            tok = self.tok
            if tok.kind != "num" or not tok.text.isdigit():
                raise ParseError("exponent must be a non-negative integer literal", tok.pos)
            self.take()
            node = Pow(node, int(tok.text))
        return node

    def parse_base(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.take()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.take()
            if tok.text in FUNCTIONS:
                self.take("(")
                arg = self.parse_expr()
                self.take(")")
                return Call(tok.text, arg)
            m = _VAR_RE.match(tok.text)
            if m is None:
                raise ParseError(f"unknown identifier {tok.text!r}", tok.pos)
            return Var(int(m.group(1)))
        if tok.text == "(":
            self.take()
            node = self.parse_expr()
            self.take(")")
            return node
        found = tok.text or "end of input"
        raise ParseError(f"unexpected {found!r}", tok.pos)


def parse_exprs(text: str) -> list[Node]:
    """Parse semicolon-separated expressions into syntax trees."""
    return _Parser(text).parse_map()


# --------------------------------------------------------------------------
# Tree utilities


def to_text(node: Node) -> str:
    """Fully parenthesized source text; re-parses to an identically evaluating tree."""
    if isinstance(node, Num):
        if node.value < 0 or (node.value == 0 and math.copysign(1.0, node.value) < 0):
            return f"(-{-node.value!r})"
        return repr(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, Bin):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Pow):
        return f"({to_text(node.base)}^{node.exponent})"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def walk(node: Node):
    yield node
    if isinstance(node, (Neg, Call)):
        yield from walk(node.arg)
    elif isinstance(node, Bin):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, Pow):
        yield from walk(node.base)


def max_var_index(node: Node) -> int:
    return max((n.index for n in walk(node) if isinstance(n, Var)), default=0)


def has_abs(node: Node) -> bool:
    return any(isinstance(n, Call) and n.func == "abs" for n in walk(node))


def substitute(node: Node, mapping) -> Node:
    """Rebuild ``node`` with every ``Var`` replaced by ``mapping(index)``."""
    if isinstance(node, Var):
        return mapping(node.index)
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.arg, mapping))
    if isinstance(node, Call):
        return Call(node.func, substitute(node.arg, mapping))
    if isinstance(node, Bin):
        return Bin(node.op, substitute(node.left, mapping), substitute(node.right, mapping))
    if isinstance(node, Pow):
        return Pow(substitute(node.base, mapping), node.exponent)
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# Code generation

_ONE = "1.0"


class _Emitter:
    def __init__(self, n_in: int, with_tangent: bool):
        self.n_in = n_in
        self.with_tangent = with_tangent
        self.lines: list[str] = []
        self.memo: dict = {}
        self.count = 0

    def tmp(self, rhs: str) -> str:
        name = f"t{self.count}"
        self.count += 1
        self.lines.append(f"    {name} = {rhs}")
        return name

    def combo(self, terms) -> str | None:
        # sum of coef * deriv; coef None means 1, deriv None means structural zero
        parts = []
        for coef, d in terms:
            if d is None:
                continue
            if coef is None:
                parts.append(d)
            elif d == _ONE:
                parts.append(coef)
            else:
                parts.append(f"{coef} * {d}")
        if not parts:
            return None
        if len(parts) == 1 and parts[0] == _ONE:
            return _ONE
        return self.tmp(" + ".join(parts))

    def emit(self, node: Node):
        hit = self.memo.get(node)
        if hit is not None:
            return hit
        out = self._emit(node)
        self.memo[node] = out
        return out

    def _emit(self, node: Node):
        n = self.n_in
        tan = self.with_tangent
        zero = [None] * n
        if isinstance(node, Num):
            return f"({node.value!r})", zero
        if isinstance(node, Var):
            d = list(zero)
            d[node.index - 1] = _ONE
            return f"x{node.index}", d
        if isinstance(node, Neg):
            v, da = self.emit(node.arg)
            dv = [self.tmp(f"-{a}") if (tan and a is not None) else None for a in da]
            return self.tmp(f"-{v}"), dv
        if isinstance(node, Bin):
            a, da = self.emit(node.left)
            b, db = self.emit(node.right)
            op = node.op
            v = self.tmp(f"{a} {op} {b}")
            if not tan:
                return v, zero
            if op == "+":
                dv = [self.combo([(None, p), (None, q)]) for p, q in zip(da, db)]
            elif op == "-":
                dv = [self.combo([(None, p), ("-1.0", q)]) for p, q in zip(da, db)]
            elif op == "*":
                dv = [self.combo([(b, p), (a, q)]) for p, q in zip(da, db)]
            else:
                dv = []
                for p, q in zip(da, db):
                    num = self.combo([(None, p), (f"-{v}", q)])
                    dv.append(None if num is None else self.tmp(f"{num} / {b}"))
            return v, dv
        if isinstance(node, Pow):
            a, da = self.emit(node.base)
            k = node.exponent
            if k == 0:
                return "1.0", zero
            v = self.tmp(f"{a} ** {k}")
            if not tan:
                return v, zero
            if k == 1:
                coef = None
            elif k == 2:
                coef = self.tmp(f"2.0 * {a}")
            else:
                coef = self.tmp(f"{float(k)!r} * {a} ** {k - 1}")
            return v, [self.combo([(coef, p)]) for p in da]
        if isinstance(node, Call):
            a, da = self.emit(node.arg)
            f = node.func
            v = self.tmp(f"{f}({a})")
            if not tan:
                return v, zero
            if f == "sin":
                coef = self.tmp(f"cos({a})")
            elif f == "cos":
                coef = self.tmp(f"-sin({a})")
            elif f == "exp":
                coef = v
            elif f == "tanh":
                coef = self.tmp(f"1.0 - {v} * {v}")
            else:  # abs: one-sided slope, +1 at the kink
                coef = self.tmp(f"copysign(1.0, {a})")
            return v, [self.combo([(coef, p)]) for p in da]
        raise TypeError(f"not an expression node: {node!r}")


def generate_source(exprs, n_in: int, with_tangent: bool) -> str:
    em = _Emitter(n_in, with_tangent)
    args = ", ".join(f"x{i + 1}" for i in range(n_in))
    outs = [em.emit(e) for e in exprs]
    vals = ", ".join(v for v, _ in outs)
    body = list(em.lines)
    if with_tangent:
        rows = ", ".join(
            "(" + ", ".join("0.0" if d is None else d for d in ds) + ",)" for _, ds in outs
        )
        body.append(f"    return ({vals},), ({rows},)")
    else:
        body.append(f"    return ({vals},)")
    return f"def _f({args}):\n" + "\n".join(body) + "\n"


SCALAR_NAMESPACE = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "tanh": math.tanh,
    "abs": abs,
    "copysign": math.copysign,
}

ARRAY_NAMESPACE = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "abs": np.abs,
    "copysign": np.copysign,
}


def compile_source(source: str, namespace: dict):
    scope = dict(namespace)
    exec(compile(source, "<miranda-map>", "exec"), scope)
    return scope["_f"]
