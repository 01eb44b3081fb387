"""Scalar expressions over chart coordinates ``q1..qn``.

Expressions are parsed into an immutable tree and evaluated together with
their exact gradient by forward-mode automatic differentiation.  Two
evaluators share the same derivative rules:

* :func:`eval_with_jet` walks the tree with :class:`Dual` numbers;
* :func:`compile_jet` unrolls the same dual arithmetic into straight-line
  Python source, which is what the integrators call in their inner loops.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := number | qK | func '(' expr ')' | '(' expr ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ParseError, UnknownIdentifierError

FUNCTIONS = ("sin", "cos", "exp", "sqrt")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)
_VAR_RE = re.compile(r"q([1-9][0-9]*)$")


# ---------------------------------------------------------------------------
# tree nodes


class Node:
    __slots__ = ()

    def variables(self) -> frozenset[int]:
        raise NotImplementedError


@dataclass(frozen=True)
class Num(Node):
    value: float

    def variables(self):
        return frozenset()

    def __str__(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class Var(Node):
    index: int  # zero based

    def variables(self):
        return frozenset((self.index,))

    def __str__(self):
        return f"q{self.index + 1}"


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def variables(self):
        return self.left.variables() | self.right.variables()

    def __str__(self):
        return f"({self.left}{self.op}{self.right})"


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"{self.func}({self.arg})"


# ---------------------------------------------------------------------------
# parsing


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos), text)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int, aliases: dict[str, int] | None = None):
        self.text = text
        self.n = n
        self.aliases = aliases or {}
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok):
        raise ParseError(message, _byte_offset(self.text, tok[2]), self.text)

    def expect(self, value):
        tok = self.advance()
        if tok[1] != value or tok[0] == "end":
            self.fail(f"expected {value!r}", tok)
        return tok

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.fail(f"unexpected token {tok[1]!r}", tok)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        tok = self.advance()
        kind, value, _ = tok
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            if value in self.aliases:
                return Var(self.aliases[value])
            m = _VAR_RE.match(value)
            if m is None or int(m.group(1)) > self.n:
                raise UnknownIdentifierError(
                    f"unknown identifier {value!r}", _byte_offset(self.text, tok[2]), self.text
                )
            return Var(int(m.group(1)) - 1)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            self.fail("unexpected end of input", tok)
        self.fail(f"unexpected token {value!r}", tok)


# ---------------------------------------------------------------------------
# the user-facing expression


def _fold(node: Node) -> Node:
    """Constant-fold a freshly built node one level deep."""
    if isinstance(node, Neg) and isinstance(node.arg, Num):
        return Num(-node.arg.value)
    if isinstance(node, BinOp):
        a, b = node.left, node.right
        if isinstance(a, Num) and isinstance(b, Num) and node.op != "^":
            try:
                return Num(_BINARY[node.op](a.value, b.value))
            except ZeroDivisionError:
                return node
        if node.op == "+":
            if a == Num(0.0):
                return b
            if b == Num(0.0):
                return a
        elif node.op == "-":
            if b == Num(0.0):
                return a
            if a == Num(0.0):
                return _fold(Neg(b))
        elif node.op == "*":
            if a == Num(0.0) or b == Num(0.0):
                return Num(0.0)
            if a == Num(1.0):
                return b
            if b == Num(1.0):
                return a
        elif node.op == "/" and b == Num(1.0):
            return a
    return node


_BINARY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a / b,
}


class Expr:
    """An immutable scalar expression on an ``n``-dimensional chart."""

    __slots__ = ("root", "n", "_jet", "_value")

    def __init__(self, root: Node, n: int):
        bad = [i for i in root.variables() if i >= n]
        if bad:
            raise ValueError(f"variable q{max(bad) + 1} outside chart of dimension {n}")
        self.root = root
        self.n = n
        self._jet = None
        self._value = None

    @classmethod
    def const(cls, value: float, n: int) -> "Expr":
        return cls(Num(float(value)), n)

    @classmethod
    def var(cls, index: int, n: int) -> "Expr":
        """Coordinate function ``q{index+1}``."""
        return cls(Var(index), n)

    def embed(self, n: int, offset: int = 0) -> "Expr":
        """Same expression on a larger chart, variables shifted by ``offset``."""
        return Expr(_shift(self.root, offset), n)

    @property
    def is_constant(self) -> bool:
        return not self.root.variables()

    def apply(self, func: str) -> "Expr":
        """Wrap in one of the supported functions (``sin``, ``cos``, ``exp``, ``sqrt``)."""
        if func not in FUNCTIONS:
            raise ValueError(f"unknown function {func!r}")
        return Expr(_fold(Call(func, self.root)), self.n)

    def __str__(self):
        return str(self.root)

    def __repr__(self):
        return f"Expr({str(self.root)!r}, n={self.n})"

    def __eq__(self, other):
        return isinstance(other, Expr) and self.n == other.n and self.root == other.root

    def __hash__(self):
        return hash((self.root, self.n))

    # building -----------------------------------------------------------
    def _coerce(self, other) -> Node:
        if isinstance(other, Expr):
            if other.n != self.n:
                raise ValueError("chart dimensions differ")
            return other.root
        return Num(float(other))

    def _bin(self, op, other, reverse=False):
        a, b = self.root, self._coerce(other)
        if reverse:
            a, b = b, a
        return Expr(_fold(BinOp(op, a, b)), self.n)

    def __add__(self, other):
        return self._bin("+", other)

    def __radd__(self, other):
        return self._bin("+", other, reverse=True)

    def __sub__(self, other):
        return self._bin("-", other)

    def __rsub__(self, other):
        return self._bin("-", other, reverse=True)

    def __mul__(self, other):
        return self._bin("*", other)

    def __rmul__(self, other):
        return self._bin("*", other, reverse=True)

    def __truediv__(self, other):
        return self._bin("/", other)

    def __neg__(self):
        return Expr(_fold(Neg(self.root)), self.n)

    # evaluation -----------------------------------------------------------
    def evaluate(self, q: Sequence[float]) -> float:
        if self._value is None:
            self._value = compile_values([self], self.n)
        return self._value(q)[0]

    def jet(self, q: Sequence[float]) -> tuple[float, np.ndarray]:
        """Value and exact gradient, through the compiled path."""
        if self._jet is None:
            self._jet = compile_jet([self], self.n)
        v, g = self._jet(q)
        return v[0], np.asarray(g[0])


def _shift(node: Node, offset: int) -> Node:
    if offset == 0:
        return node
    if isinstance(node, Var):
        return Var(node.index + offset)
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return Neg(_shift(node.arg, offset))
    if isinstance(node, BinOp):
        return BinOp(node.op, _shift(node.left, offset), _shift(node.right, offset))
    return Call(node.func, _shift(node.arg, offset))


def parse(text: str, n: int, aliases: dict[str, int] | None = None) -> Expr:
    """Parse ``text`` into an expression over ``q1..qn``.

    ``aliases`` maps extra identifiers to 0-based variable indices, e.g.
    ``{"t": 0}`` for a function of time.
    """
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty expression", 0, text if isinstance(text, str) else "")
    return Expr(_Parser(text, n, aliases).parse(), n)


def as_expr(value, n: int) -> Expr:
    """Accept an :class:`Expr`, an expression string or a number."""
    if isinstance(value, Expr):
        if value.n != n:
            return value.embed(n)
        return value
    if isinstance(value, (int, float)):
        return Expr.const(value, n)
    return parse(value, n)


# ---------------------------------------------------------------------------
# dual numbers


class Dual:
    """First-order dual number with a dense gradient."""

    __slots__ = ("v", "d")

    def __init__(self, v: float, d: np.ndarray):
        self.v = v
        self.d = d


def _pow_const(a: float, c: float) -> float:
    if a < 0.0 and c != int(c):
        raise DomainError(f"negative base {a} with non-integer exponent {c}")
    try:
        return a**c
    except ZeroDivisionError as exc:
        raise DomainError(f"0 raised to negative power {c}") from exc


def _dual_eval(node: Node, q: np.ndarray, n: int) -> Dual:
    if isinstance(node, Num):
        return Dual(node.value, np.zeros(n))
    if isinstance(node, Var):
        d = np.zeros(n)
        d[node.index] = 1.0
        return Dual(float(q[node.index]), d)
    if isinstance(node, Neg):
        a = _dual_eval(node.arg, q, n)
        return Dual(-a.v, -a.d)
    if isinstance(node, Call):
        a = _dual_eval(node.arg, q, n)
        if node.func == "sin":
            return Dual(math.sin(a.v), math.cos(a.v) * a.d)
        if node.func == "cos":
            return Dual(math.cos(a.v), -math.sin(a.v) * a.d)
        if node.func == "exp":
            v = math.exp(a.v)
            return Dual(v, v * a.d)
        if a.v < 0.0:
            raise DomainError(f"sqrt of negative value {a.v}")
        v = math.sqrt(a.v)
        if v == 0.0:
            if np.any(a.d):
                raise DomainError("sqrt is not differentiable at 0")
            return Dual(0.0, np.zeros(n))
        return Dual(v, a.d / (2.0 * v))
    a = _dual_eval(node.left, q, n)
    if node.op == "^" and not node.right.variables():
        c = _dual_eval(node.right, q, n).v
        v = _pow_const(a.v, c)
        if not np.any(a.d):
            return Dual(v, np.zeros(n))
        return Dual(v, c * _pow_const(a.v, c - 1.0) * a.d)
    b = _dual_eval(node.right, q, n)
    if node.op == "+":
        return Dual(a.v + b.v, a.d + b.d)
    if node.op == "-":
        return Dual(a.v - b.v, a.d - b.d)
    if node.op == "*":
        return Dual(a.v * b.v, a.d * b.v + a.v * b.d)
    if node.op == "/":
        if b.v == 0.0:
            raise DomainError("division by zero")
        v = a.v / b.v
        return Dual(v, (a.d - v * b.d) / b.v)
    # variable exponent: a^b = exp(b log a)
    if a.v <= 0.0:
        raise DomainError(f"non-positive base {a.v} with variable exponent")
    la = math.log(a.v)
    v = math.exp(b.v * la)
    return Dual(v, v * (b.d * la + b.v * a.d / a.v))


def eval_with_jet(e: Expr, q: Sequence[float]) -> tuple[float, np.ndarray]:
    """Value and gradient of ``e`` at ``q`` by a dual-number tree walk."""
    q = np.asarray(q, dtype=float)
    try:
        out = _dual_eval(e.root, q, len(q))
    except (ZeroDivisionError, OverflowError, ValueError) as exc:
        raise DomainError(str(exc)) from exc
    if not math.isfinite(out.v) or not np.all(np.isfinite(out.d)):
        raise DomainError("non-finite result")
    return out.v, out.d


def evaluate(e: Expr, q: Sequence[float]) -> float:
    return eval_with_jet(e, q)[0]


# ---------------------------------------------------------------------------
# compiled jets


class _Emitter:
    def __init__(self, with_derivatives: bool):
        self.lines: list[str] = []
        self.count = 0
        self.with_d = with_derivatives

    def tmp(self, code: str) -> str:
        name = f"t{self.count}"
        self.count += 1
        self.lines.append(f"    {name} = {code}")
        return name

    def emit(self, node: Node) -> tuple[str, dict[int, str]]:
        """Return (value code, {variable index: derivative code})."""
        if isinstance(node, Num):
            return repr(float(node.value)), {}
        if isinstance(node, Var):
            return f"q{node.index}", ({node.index: "1.0"} if self.with_d else {})
        if isinstance(node, Neg):
            v, d = self.emit(node.arg)
            return self.tmp(f"-{v}"), {k: self.tmp(f"-{c}") for k, c in d.items()}
        if isinstance(node, Call):
            v, d = self.emit(node.arg)
            if node.func == "sin":
                out = self.tmp(f"_sin({v})")
                if d:
                    c = self.tmp(f"_cos({v})")
                    return out, {k: self.tmp(f"{c}*{dk}") for k, dk in d.items()}
                return out, {}
            if node.func == "cos":
                out = self.tmp(f"_cos({v})")
                if d:
                    s = self.tmp(f"-_sin({v})")
                    return out, {k: self.tmp(f"{s}*{dk}") for k, dk in d.items()}
                return out, {}
            if node.func == "exp":
                out = self.tmp(f"_exp({v})")
                return out, {k: self.tmp(f"{out}*{dk}") for k, dk in d.items()}
            out = self.tmp(f"_sqrt({v})")
            if d:
                inv = self.tmp(f"0.5/{out}")
                return out, {k: self.tmp(f"{inv}*{dk}") for k, dk in d.items()}
            return out, {}
        if node.op == "^" and not node.right.variables():
            c = _dual_eval(node.right, np.zeros(0), 0).v
            v, d = self.emit(node.left)
            out = self.tmp(f"_powc({v}, {c!r})")
            if d:
                f = self.tmp(f"{c!r}*_powc({v}, {c - 1.0!r})")
                return out, {k: self.tmp(f"{f}*{dk}") for k, dk in d.items()}
            return out, {}
        a, da = self.emit(node.left)
        b, db = self.emit(node.right)
        keys = sorted(set(da) | set(db))
        if node.op in ("+", "-"):
            out = self.tmp(f"{a}{node.op}{b}")
            dd = {}
            for k in keys:
                if k in da and k in db:
                    dd[k] = self.tmp(f"{da[k]}{node.op}{db[k]}")
                elif k in da:
                    dd[k] = da[k]
                else:
                    dd[k] = db[k] if node.op == "+" else self.tmp(f"-{db[k]}")
            return out, dd
        if node.op == "*":
            out = self.tmp(f"{a}*{b}")
            dd = {}
            for k in keys:
                terms = []
                if k in da:
                    terms.append(f"{da[k]}*{b}")
                if k in db:
                    terms.append(f"{a}*{db[k]}")
                dd[k] = self.tmp("+".join(terms))
            return out, dd
        if node.op == "/":
            out = self.tmp(f"{a}/{b}")
            dd = {}
            for k in keys:
                num = da.get(k, "0.0") + (f"-{out}*{db[k]}" if k in db else "")
                dd[k] = self.tmp(f"({num})/{b}")
            return out, dd
        # variable exponent
        la = self.tmp(f"_logpos({a})")
        out = self.tmp(f"_exp({b}*{la})")
        dd = {}
        for k in keys:
            terms = []
            if k in db:
                terms.append(f"{db[k]}*{la}")
            if k in da:
                terms.append(f"{b}*{da[k]}/{a}")
            dd[k] = self.tmp(f"{out}*({'+'.join(terms)})")
        return out, dd


def _logpos(a: float) -> float:
    if a <= 0.0:
        raise DomainError(f"non-positive base {a} with variable exponent")
    return math.log(a)


def _sqrt(a: float) -> float:
    if a < 0.0:
        raise DomainError(f"sqrt of negative value {a}")
    return math.sqrt(a)


_NAMESPACE = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": math.exp,
    "_sqrt": _sqrt,
    "_powc": _pow_const,
    "_logpos": _logpos,
}


def _build(exprs: Sequence[Expr], n: int, with_d: bool) -> Callable:
    em = _Emitter(with_d)
    outs = []
    for e in exprs:
        if e.n != n:
            e = e.embed(n)
        outs.append(em.emit(e.root))
    head = ["def _f(q):"]
    used = sorted(set().union(*(e.root.variables() for e in exprs))) if exprs else []
    head += [f"    q{i} = float(q[{i}])" for i in used]
    body = em.lines
    values = "[" + ", ".join(v for v, _ in outs) + "]"
    if with_d:
        rows = []
        for _, d in outs:
            rows.append("[" + ", ".join(d.get(k, "0.0") for k in range(n)) + "]")
        ret = [f"    return {values}, [" + ", ".join(rows) + "]"]
    else:
        ret = [f"    return {values}"]
    src = "\n".join(head + body + ret)
    ns = dict(_NAMESPACE)
    exec(compile(src, "<subriem-jet>", "exec"), ns)
    raw = ns["_f"]

    def guarded(q):
        try:
            out = raw(q)
        except (ZeroDivisionError, OverflowError, ValueError) as exc:
            raise DomainError(str(exc)) from exc
        vals = out[0] if with_d else out
        if not all(map(math.isfinite, vals)):
            raise DomainError("non-finite result")
        return out

    guarded.source = src
    return guarded


def compile_jet(exprs: Sequence[Expr], n: int) -> Callable:
    """Compile expressions into ``q -> (values, gradients)`` (lists of floats)."""
    return _build(exprs, n, True)


def compile_values(exprs: Sequence[Expr], n: int) -> Callable:
    """Compile expressions into ``q -> values`` without derivatives."""
    return _build(exprs, n, False)


def central_gradient(f: Callable[[np.ndarray], float], q, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient; used as an independent check."""
    q = np.asarray(q, dtype=float)
    g = np.empty_like(q)
    for k in range(len(q)):
        e = np.zeros_like(q)
        e[k] = h
        g[k] = (f(q + e) - f(q - e)) / (2.0 * h)
    return g
