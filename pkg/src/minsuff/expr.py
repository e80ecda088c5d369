"""Density expression language: tokenizer, recursive-descent parser, evaluators.

Expressions are written over a sample vector ``x[0..n-1]`` and a parameter
vector ``theta[0..p-1]``::

    exp(-(x[0]-theta[0])^2/2)
    prod{i}(1/(pi*(1+(x[i]-theta[0])^2)))
    exp(n*theta[0] - sum{i}(x[i])) * ind(min{i}(x[i]) > theta[0])

Two evaluators are provided.  :func:`evaluate` works on the linear scale and
is total (IEEE conventions, plus ``0 * inf = 0`` so that a vanishing indicator
annihilates).  :func:`evaluate_log` works on the log scale and rewrites
``exp``, products, quotients and powers into sums so that tiny densities do
not underflow.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Sequence

__all__ = [
    "Evaluation",
    "Expr",
    "ExprError",
    "ExprSyntaxError",
    "IndexRangeError",
    "NegativeDensityError",
    "StatisticSpec",
    "UnknownIdentifierError",
    "depth",
    "evaluate",
    "evaluate_log",
    "evaluate_with_diagnostics",
    "free_symbols",
    "parse",
    "parse_statistic",
    "unparse",
]

FUNCS = ("exp", "log", "abs", "sqrt")
AGGS = ("sum", "prod", "min", "max")
CMPS = ("<", "<=", ">", ">=", "==")
KEYWORDS = frozenset(FUNCS + AGGS + ("ind", "and", "or", "pi", "n", "x", "theta"))

NEG_INF = float("-inf")
POS_INF = float("inf")
NAN = float("nan")


class ExprError(ValueError):
    """Base class for expression-language errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownIdentifierError(ExprSyntaxError):
    pass


class IndexRangeError(ExprSyntaxError):
    pass


class NegativeDensityError(ExprError):
    """Raised by :func:`evaluate_log` when the expression is negative."""


@dataclass(frozen=True)
class Expr:
    """Immutable AST node.

    ``kind`` is one of ``num pi n x theta neg add sub mul div pow func agg
    ind cmp and or``.  ``value`` carries the literal, the vector index (an
    int, or a bound name for ``x``), or the operator name for ``func``,
    ``agg`` and ``cmp`` nodes.  ``binder`` is the bound index name of an
    aggregate.
    """

    kind: str
    children: tuple[Expr, ...] = ()
    value: float | int | str | None = None
    binder: str | None = None

    @cached_property
    def _linear(self) -> Callable:
        return _compile_linear(self)

    @cached_property
    def _slog(self) -> Callable:
        return _compile_slog(self)

    def __str__(self) -> str:
        return unparse(self)


class Evaluation(NamedTuple):
    value: float
    nan: bool


# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|[-+*/^()\[\]{}<>])
    """,
    re.VERBOSE,
)


class _Token(NamedTuple):
    kind: str  # num, ident, op, end
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            chunk = m.group()
            if "\n" in chunk:
                line += chunk.count("\n")
                line_start = pos + chunk.rindex("\n") + 1
        else:
            tokens.append(_Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(_Token("end", "", line, pos - line_start + 1))
    return tokens


# --------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text: str, sample_dim: int, param_dim: int, bound: Sequence[str]):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.sample_dim = sample_dim
        self.param_dim = param_dim
        self.bound = list(bound)

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def error(self, message: str, tok: _Token | None = None, cls=ExprSyntaxError):
        tok = tok or self.tok
        return cls(message, tok.line, tok.column)

    def accept(self, text: str) -> bool:
        if self.tok.kind in ("op", "ident") and self.tok.text == text:
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> _Token:
        tok = self.tok
        if not self.accept(text):
            found = tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}", tok)
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            kind = "add" if self.tok.text == "+" else "sub"
            self.pos += 1
            left = Expr(kind, (left, self.term()))
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            kind = "mul" if self.tok.text == "*" else "div"
            self.pos += 1
            left = Expr(kind, (left, self.unary()))
        return left

    def unary(self) -> Expr:
        # -a^b reads as -(a^b)
        if self.accept("-"):
            return Expr("neg", (self.unary(),))
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("^"):
            return Expr("pow", (base, self.unary()))
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.pos += 1
            return Expr("num", value=float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            self.pos += 1
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind != "ident":
            raise self.error(f"unexpected {tok.text or 'end of input'!r}")
        name = tok.text
        self.pos += 1
        if name == "pi":
            return Expr("pi")
        if name == "n":
            return Expr("n")
        if name in ("x", "theta"):
            return self.indexed(name, tok)
        if name in FUNCS:
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Expr("func", (arg,), value=name)
        if name in AGGS:
            self.expect("{")
            btok = self.tok
            if btok.kind != "ident" or btok.text in KEYWORDS:
                raise self.error("expected an index name", btok)
            self.pos += 1
            self.expect("}")
            self.expect("(")
            self.bound.append(btok.text)
            try:
                body = self.expr()
            finally:
                self.bound.pop()
            self.expect(")")
            return Expr("agg", (body,), value=name, binder=btok.text)
        if name == "ind":
            self.expect("(")
            c = self.cond()
            self.expect(")")
            return Expr("ind", (c,))
        raise self.error(f"unknown identifier {name!r}", tok, UnknownIdentifierError)

    def indexed(self, name: str, tok: _Token) -> Expr:
        self.expect("[")
        itok = self.tok
        if itok.kind == "num" and itok.text.isdigit():
            self.pos += 1
            index: int | str = int(itok.text)
            limit = self.sample_dim if name == "x" else self.param_dim
            if index >= limit:
                raise self.error(
                    f"index {index} out of range for {name} of dimension {limit}", itok, IndexRangeError
                )
        elif itok.kind == "ident" and name == "x":
            if itok.text not in self.bound:
                raise self.error(f"unknown index {itok.text!r}", itok, UnknownIdentifierError)
            self.pos += 1
            index = itok.text
        else:
            raise self.error("expected an integer index", itok)
        self.expect("]")
        return Expr(name, value=index)

    def cond(self) -> Expr:
        parts = [self.conj()]
        while self.accept("or"):
            parts.append(self.conj())
        return parts[0] if len(parts) == 1 else Expr("or", tuple(parts))

    def conj(self) -> Expr:
        parts = [self.comparison()]
        while self.accept("and"):
            parts.append(self.comparison())
        return parts[0] if len(parts) == 1 else Expr("and", tuple(parts))

    def comparison(self) -> Expr:
        left = self.expr()
        tok = self.tok
        if tok.kind == "op" and tok.text in CMPS:
            self.pos += 1
            return Expr("cmp", (left, self.expr()), value=tok.text)
        raise self.error("expected a comparison operator", tok)


def parse(text: str, sample_dim: int, param_dim: int, bound: Sequence[str] = ()) -> Expr:
    """Parse ``text`` into an :class:`Expr`.

    Indices of ``x`` must be below ``sample_dim`` unless they name an
    enclosing aggregate binder (or one of ``bound``); indices of ``theta``
    must be below ``param_dim``.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 1, 1)
    if sample_dim < 0 or param_dim < 0:
        raise ValueError("dimensions must be non-negative")
    return _Parser(text, sample_dim, param_dim, bound).parse()


# --------------------------------------------------------------------------
# unparse / structural helpers

_BINARY_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


def _num_text(v: float) -> str:
    if math.isfinite(v) and v.is_integer() and abs(v) < 1e16:
        text = str(int(v))
    else:
        text = repr(v)
    return f"({text})" if v < 0 else text


def unparse(e: Expr) -> str:
    """Render ``e`` as text that parses back to a structurally equal tree."""
    k = e.kind
    if k == "num":
        return _num_text(e.value)
    if k in ("pi", "n"):
        return k
    if k in ("x", "theta"):
        return f"{k}[{e.value}]"
    if k == "neg":
        return f"(-{unparse(e.children[0])})"
    if k in _BINARY_SYMBOL:
        a, b = e.children
        return f"({unparse(a)} {_BINARY_SYMBOL[k]} {unparse(b)})"
    if k == "func":
        return f"{e.value}({unparse(e.children[0])})"
    if k == "agg":
        return f"{e.value}{{{e.binder}}}({unparse(e.children[0])})"
    if k == "ind":
        return f"ind({unparse(e.children[0])})"
    if k == "cmp":
        a, b = e.children
        return f"{unparse(a)} {e.value} {unparse(b)}"
    if k in ("and", "or"):
        return f" {k} ".join(unparse(c) for c in e.children)
    raise ExprError(f"unknown node kind {k!r}")


def depth(e: Expr) -> int:
    """Number of edges on the longest root-to-leaf path."""
    if not e.children:
        return 0
    return 1 + max(depth(c) for c in e.children)


def free_symbols(e: Expr) -> set[str]:
    """Names of the vectors an expression reads: a subset of {"x", "theta"}."""
    found = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if node.kind in ("x", "theta"):
            found.add(node.kind)
        stack.extend(node.children)
    return found


# --------------------------------------------------------------------------
# linear-scale evaluation


def _mul(a: float, b: float) -> float:
    if (a == 0.0 and b == b) or (b == 0.0 and a == a):
        return 0.0
    return a * b


def _div(a: float, b: float) -> float:
    if b == 0.0:
        if a == 0.0 or a != a:
            return NAN
        return math.copysign(POS_INF, a)
    return a / b


def _pow(a: float, b: float) -> float:
    if a != a or b != b:
        return NAN
    if a == 0.0:
        if b > 0:
            return 0.0
        return 1.0 if b == 0 else POS_INF
    try:
        return math.pow(a, b)
    except ValueError:  # negative base, fractional exponent
        return NAN
    except OverflowError:
        if a < 0 and float(b).is_integer() and int(b) % 2:
            return NEG_INF
        return POS_INF


def _exp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError:
        return POS_INF


def _log(a: float) -> float:
    if a == 0.0:
        return NEG_INF
    if a < 0 or a != a:
        return NAN
    return math.log(a)


def _sqrt(a: float) -> float:
    if a < 0 or a != a:
        return NAN
    return math.sqrt(a)


_LINEAR_FUNCS = {"exp": _exp, "log": _log, "abs": abs, "sqrt": _sqrt}
_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
}


def _reduce_sum(values):
    total = 0.0
    for v in values:
        total += v
    return total


def _reduce_prod(values):
    total = 1.0
    for v in values:
        total = _mul(total, v)
    return total


_LINEAR_AGGS = {"sum": _reduce_sum, "prod": _reduce_prod, "min": min, "max": max}


def _compile_linear(e: Expr) -> Callable:
    """Compile to ``f(x, theta, env) -> float``; ``env`` maps binders to ints."""
    k = e.kind
    if k == "num":
        v = float(e.value)
        return lambda x, t, env: v
    if k == "pi":
        return lambda x, t, env: math.pi
    if k == "n":
        return lambda x, t, env: float(len(x))
    if k == "x":
        idx = e.value
        if isinstance(idx, int):
            return lambda x, t, env: float(x[idx])
        return lambda x, t, env: float(x[env[idx]])
    if k == "theta":
        idx = e.value
        return lambda x, t, env: float(t[idx])
    children = [c._linear for c in e.children]
    if k == "neg":
        (a,) = children
        return lambda x, t, env: -a(x, t, env)
    if k == "add":
        a, b = children
        return lambda x, t, env: a(x, t, env) + b(x, t, env)
    if k == "sub":
        a, b = children
        return lambda x, t, env: a(x, t, env) - b(x, t, env)
    if k in ("mul", "div", "pow"):
        a, b = children
        op = {"mul": _mul, "div": _div, "pow": _pow}[k]
        return lambda x, t, env: op(a(x, t, env), b(x, t, env))
    if k == "func":
        (a,) = children
        fn = _LINEAR_FUNCS[e.value]
        return lambda x, t, env: fn(a(x, t, env))
    if k == "agg":
        (body,) = children
        reduce = _LINEAR_AGGS[e.value]
        name = e.binder

        def agg(x, t, env):
            return reduce(body(x, t, {**env, name: i}) for i in range(len(x)))

        return agg
    if k == "ind":
        (c,) = children
        return lambda x, t, env: 1.0 if c(x, t, env) else 0.0
    if k == "cmp":
        a, b = children
        cmp = _CMP[e.value]
        return lambda x, t, env: cmp(a(x, t, env), b(x, t, env))
    if k == "and":
        return lambda x, t, env: all(c(x, t, env) for c in children)
    if k == "or":
        return lambda x, t, env: any(c(x, t, env) for c in children)
    raise ExprError(f"unknown node kind {k!r}")


def evaluate(e: Expr, x: Sequence[float], theta: Sequence[float]) -> float:
    """Evaluate on the linear scale.  Never raises for well-formed input."""
    return e._linear(x, theta, {})


def evaluate_with_diagnostics(e: Expr, x: Sequence[float], theta: Sequence[float]) -> Evaluation:
    v = evaluate(e, x, theta)
    return Evaluation(v, v != v)


# --------------------------------------------------------------------------
# log-scale evaluation: every node yields (sign, log|value|)

_ZERO = (0.0, NEG_INF)
_SNAN = (NAN, NAN)


def _from_linear(v: float) -> tuple[float, float]:
    if v != v:
        return _SNAN
    if v == 0.0:
        return _ZERO
    return (1.0 if v > 0 else -1.0, math.log(abs(v)) if math.isfinite(v) else POS_INF)


def _signed_logsumexp(terms) -> tuple[float, float]:
    terms = list(terms)
    live = []
    for s, l in terms:
        if s != s:
            return _SNAN
        if s != 0.0:
            live.append((s, l))
    if not live:
        return _ZERO
    m = max(l for _, l in live)
    if m == POS_INF:
        signs = {s for s, l in live if l == POS_INF}
        return (signs.pop(), POS_INF) if len(signs) == 1 else _SNAN
    if len(live) == 1:
        return live[0]
    total = 0.0
    for s, l in live:
        total += s * math.exp(l - m)
    if total == 0.0:
        return _ZERO
    return (1.0 if total > 0 else -1.0, m + math.log(abs(total)))


def _slog_mul(a, b):
    sa, la = a
    sb, lb = b
    if sa != sa or sb != sb:
        return _SNAN
    if sa == 0.0 or sb == 0.0:
        return _ZERO
    return (sa * sb, la + lb)


def _slog_div(a, b):
    sa, la = a
    sb, lb = b
    if sa != sa or sb != sb:
        return _SNAN
    if sb == 0.0:
        return _SNAN if sa == 0.0 else (sa, POS_INF)
    if sa == 0.0:
        return _ZERO
    if la == POS_INF and lb == POS_INF:
        return _SNAN
    return (sa * sb, la - lb)


def _slog_pow(a, b: float):
    sa, la = a
    if sa != sa or b != b:
        return _SNAN
    if b == 0.0:
        return (1.0, 0.0)
    if sa == 0.0:
        return _ZERO if b > 0 else (1.0, POS_INF)
    if sa > 0:
        return (1.0, b * la)
    if not float(b).is_integer():
        return _SNAN
    return (-1.0 if int(b) % 2 else 1.0, b * la)


def _slog_key(sl):
    s, l = sl
    if s > 0:
        return (1, l)
    if s < 0:
        return (-1, -l)
    return (0, 0.0)


def _compile_slog(e: Expr) -> Callable:
    k = e.kind
    if k in ("num", "pi", "n", "x", "theta"):
        lin = e._linear
        return lambda x, t, env: _from_linear(lin(x, t, env))
    if k in ("ind", "cmp", "and", "or"):
        lin = e._linear
        return lambda x, t, env: (1.0, 0.0) if lin(x, t, env) else _ZERO
    if k == "func":
        (arg,) = e.children
        name = e.value
        if name == "log":
            a = arg._slog

            def slog_log(x, t, env):
                s, l = a(x, t, env)
                if s != s or s < 0:
                    return _SNAN
                if s == 0.0:
                    return (-1.0, POS_INF)
                return _from_linear(l)

            return slog_log
        if name == "exp":
            lin = arg._linear

            def slog_exp(x, t, env):
                v = lin(x, t, env)
                if v != v:
                    return _SNAN
                return _ZERO if v == NEG_INF else (1.0, v)

            return slog_exp
        a = arg._slog
        if name == "abs":

            def slog_abs(x, t, env):
                s, l = a(x, t, env)
                return (abs(s), l)

            return slog_abs
        # sqrt

        def slog_sqrt(x, t, env):
            s, l = a(x, t, env)
            if s != s or s < 0:
                return _SNAN
            return _ZERO if s == 0.0 else (1.0, 0.5 * l)

        return slog_sqrt
    if k == "neg":
        a = e.children[0]._slog
        return lambda x, t, env: (lambda s, l: (-s, l))(*a(x, t, env))
    if k in ("add", "sub"):
        a, b = (c._slog for c in e.children)
        flip = -1.0 if k == "sub" else 1.0

        def slog_add(x, t, env):
            sb, lb = b(x, t, env)
            return _signed_logsumexp((a(x, t, env), (flip * sb, lb)))

        return slog_add
    if k == "mul":
        a, b = (c._slog for c in e.children)
        return lambda x, t, env: _slog_mul(a(x, t, env), b(x, t, env))
    if k == "div":
        a, b = (c._slog for c in e.children)
        return lambda x, t, env: _slog_div(a(x, t, env), b(x, t, env))
    if k == "pow":
        a = e.children[0]._slog
        b = e.children[1]._linear
        return lambda x, t, env: _slog_pow(a(x, t, env), b(x, t, env))
    if k == "agg":
        body = e.children[0]._slog
        name = e.binder
        op = e.value

        def slog_agg(x, t, env):
            terms = [body(x, t, {**env, name: i}) for i in range(len(x))]
            if op == "sum":
                return _signed_logsumexp(terms)
            if op == "prod":
                acc = (1.0, 0.0)
                for term in terms:
                    acc = _slog_mul(acc, term)
                return acc
            if any(s != s for s, _ in terms):
                return _SNAN
            pick = min if op == "min" else max
            return pick(terms, key=_slog_key)

        return slog_agg
    raise ExprError(f"unknown node kind {k!r}")


def evaluate_log(e: Expr, x: Sequence[float], theta: Sequence[float]) -> float:
    """Natural log of ``evaluate(e, x, theta)``; ``-inf`` exactly when it is 0.

    Raises :class:`NegativeDensityError` when the value is negative.  A NaN
    result is returned as NaN.
    """
    s, l = e._slog(x, theta, {})
    if s != s:
        return NAN
    if s < 0:
        raise NegativeDensityError(f"expression is negative at x={list(x)}, theta={list(theta)}")
    return NEG_INF if s == 0.0 else l


# --------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class StatisticSpec:
    """Vector-valued statistic.

    Output layout: the plain ``components`` first, then for every entry of
    ``sorted`` the ascending rearrangement of that elementwise expression over
    ``i = 0..n-1``.  Sorted entries are written in terms of the free index
    ``i``, e.g. ``abs(x[i])``.
    """

    components: tuple[Expr, ...] = ()
    sorted: tuple[Expr, ...] = field(default=())

    def __post_init__(self):
        if not self.components and not self.sorted:
            raise ExprError("a statistic needs at least one component")

    def output_dim(self, sample_dim: int) -> int:
        return len(self.components) + sample_dim * len(self.sorted)

    def __call__(self, x: Sequence[float]) -> tuple[float, ...]:
        out = [evaluate(c, x, ()) for c in self.components]
        for elem in self.sorted:
            f = elem._linear
            out.extend(sorted(f(x, (), {"i": i}) for i in range(len(x))))
        return tuple(out)


def parse_statistic(
    components: Sequence[str], sorted_exprs: Sequence[str] = (), sample_dim: int = 1
) -> StatisticSpec:
    comps = tuple(parse(c, sample_dim, 0) for c in components)
    elems = tuple(parse(s, sample_dim, 0, bound=("i",)) for s in sorted_exprs)
    return StatisticSpec(comps, elems)
