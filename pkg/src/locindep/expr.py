"""Arithmetic expression language for drifts, intensities and jump sizes.

Expressions are parsed into an immutable AST. Identifiers are component
values ``x1..xm``, time ``t`` and free parameters ``theta1..thetaP``; the
function set is fixed (``exp log sin cos abs sqrt``).

Evaluation is vectorised: the state argument may be a single vector of
length ``m`` or an array whose last axis has length ``m``.  Scalar and array
evaluation share one code path so they agree bit for bit.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Expr", "Num", "Var", "Time", "Param", "Unary", "Binary",
    "ExprSyntaxError", "ExprDomainError",
    "parse", "to_source", "evaluate", "evaluate_columns", "eval_scalar",
    "free_components", "free_params", "uses_time",
    "fix_params", "bounds",
]

FUNCTIONS = ("exp", "log", "sin", "cos", "abs", "sqrt")
BINARY_OPS = ("+", "-", "*", "/", "^")


class ExprSyntaxError(ValueError):
    """Malformed source text. ``offset`` is a byte offset into the UTF-8 source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprDomainError(ArithmeticError):
    """Evaluation left the real domain (log of x <= 0, 0 division, ...)."""

    def __init__(self, message: str, subexpr: "Expr"):
        super().__init__(f"{message} in '{to_source(subexpr)}'")
        self.subexpr = subexpr


# --------------------------------------------------------------------- AST


class Expr:
    __slots__ = ()

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 1-based component index


@dataclass(frozen=True)
class Time(Expr):
    pass


@dataclass(frozen=True)
class Param(Expr):
    index: int  # 1-based parameter index


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "neg" or one of FUNCTIONS
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


# ------------------------------------------------------------------ parsing

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)
_INDEXED = re.compile(r"(x|theta)(\d+)")


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(source)
    while True:
        while pos < n and source[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", _byte_offset(source, pos))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


class _Parser:
    # expr    := term (('+'|'-') term)*
    # term    := '-' term | product
    # product := factor (('*'|'/') factor)*
    # factor  := '-' factor | power
    # power   := atom ('^' expo)?
    # expo    := '-' expo | power
    # atom    := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

    def __init__(self, source: str, m: int | None, n_params: int | None):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0
        self.m = m
        self.n_params = n_params

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, _byte_offset(self.source, tok[2]))

    def at_op(self, *ops: str) -> bool:
        kind, text, _ = self.peek()
        return kind == "op" and text in ops

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.at_op("+", "-"):
            op = self.take()[1]
            left = Binary(op, left, self.term())
        return left

    def term(self) -> Expr:
        if self.at_op("-"):
            self.take()
            return Unary("neg", self.term())
        return self.product()

    def product(self) -> Expr:
        left = self.factor()
        while self.at_op("*", "/"):
            op = self.take()[1]
            left = Binary(op, left, self.factor())
        return left

    def factor(self) -> Expr:
        if self.at_op("-"):
            self.take()
            return Unary("neg", self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.at_op("^"):
            self.take()
            return Binary("^", base, self.expo())
        return base

    def expo(self) -> Expr:
        if self.at_op("-"):
            self.take()
            return Unary("neg", self.expo())
        return self.power()

    def atom(self) -> Expr:
        tok = self.take()
        kind, text, _ = tok
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                raise self.error("numeric literal overflows", tok)
            return Num(value)
        if kind == "ident":
            return self.identifier(tok)
        if kind == "op" and text == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "end":
            raise self.error("unexpected end of input", tok)
        raise self.error(f"unexpected token {text!r}", tok)

    def identifier(self, tok) -> Expr:
        text = tok[1]
        if text in FUNCTIONS:
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Unary(text, arg)
        if text == "t":
            return Time()
        m = _INDEXED.fullmatch(text)
        if m is None:
            raise self.error(f"unknown identifier {text!r}", tok)
        index = int(m.group(2))
        if m.group(1) == "x":
            if index == 0 or (self.m is not None and index > self.m):
                raise self.error(f"variable {text} out of range 1..{self.m}", tok)
            return Var(index)
        if index == 0 or (self.n_params is not None and index > self.n_params):
            raise self.error(f"parameter {text} out of range 1..{self.n_params}", tok)
        return Param(index)

    def expect(self, op: str) -> None:
        kind, text, _ = self.peek()
        if kind != "op" or text != op:
            what = "end of input" if kind == "end" else repr(text)
            raise self.error(f"expected {op!r}, found {what}")
        self.take()


def parse(source: str, m: int | None = None, n_params: int | None = None) -> Expr:
    """Parse ``source`` into an AST.

    ``m`` and ``n_params`` bound the admissible ``x<k>`` and ``theta<k>``
    indices; ``None`` leaves them unchecked.
    """
    return _Parser(source, m, n_params).parse()


def to_source(e: Expr) -> str:
    """Render ``e`` as text that parses back to the same tree."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Time):
        return "t"
    if isinstance(e, Param):
        return f"theta{e.index}"
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_source(e.arg)})"
        return f"{e.op}({to_source(e.arg)})"
    if isinstance(e, Binary):
        return f"({to_source(e.left)}{e.op}{to_source(e.right)})"
    raise TypeError(f"not an expression: {e!r}")


# --------------------------------------------------------------- analysis


def _walk(e: Expr):
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Unary):
            stack.append(node.arg)
        elif isinstance(node, Binary):
            stack.append(node.left)
            stack.append(node.right)


def free_components(e: Expr | None) -> frozenset[int]:
    """Indices of the component variables that occur syntactically in ``e``."""
    if e is None:
        return frozenset()
    return frozenset(n.index for n in _walk(e) if isinstance(n, Var))


def free_params(e: Expr | None) -> frozenset[int]:
    if e is None:
        return frozenset()
    return frozenset(n.index for n in _walk(e) if isinstance(n, Param))


def uses_time(e: Expr | None) -> bool:
    return e is not None and any(isinstance(n, Time) for n in _walk(e))


def _number(value: float) -> Expr:
    # negative constants are stored as neg(literal) so printing round-trips
    if value < 0 or (value == 0 and math.copysign(1.0, value) < 0):
        return Unary("neg", Num(-value))
    return Num(value)


def _is_zero(e: Expr) -> bool:
    return (isinstance(e, Num) and e.value == 0) or (
        isinstance(e, Unary) and e.op == "neg" and _is_zero(e.arg)
    )


def fix_params(e: Expr, values: Mapping[int, float]) -> Expr:
    """Substitute the given parameters by constants.

    Products and quotients with a literal zero factor collapse to zero and
    zero summands are dropped, so that fixing an edge coefficient at 0
    removes the variable it multiplies. No other simplification happens.
    """
    if isinstance(e, Param):
        return _number(float(values[e.index])) if e.index in values else e
    if isinstance(e, Unary):
        arg = fix_params(e.arg, values)
        if e.op == "neg" and _is_zero(arg):
            return Num(0.0)
        return Unary(e.op, arg)
    if isinstance(e, Binary):
        left = fix_params(e.left, values)
        right = fix_params(e.right, values)
        if e.op == "*" and (_is_zero(left) or _is_zero(right)):
            return Num(0.0)
        if e.op == "/" and _is_zero(left):
            return Num(0.0)
        if e.op == "+":
            if _is_zero(left):
                return right
            if _is_zero(right):
                return left
        if e.op == "-":
            if _is_zero(right):
                return left
            if _is_zero(left):
                return Unary("neg", right)
        return Binary(e.op, left, right)
    return e


# ------------------------------------------------------------- evaluation

ArrayLike = Union[float, np.ndarray]


def evaluate(e: Expr, state, t: ArrayLike = 0.0, theta: Sequence[float] | None = None):
    """Evaluate ``e`` on ``state[..., m]`` at time(s) ``t``.

    Returns an array shaped like ``state[..., 0]`` broadcast against ``t``.
    Raises :class:`ExprDomainError` naming the offending subexpression when
    any element leaves the real domain.
    """
    state = np.asarray(state, dtype=float)
    columns = [state[..., i] for i in range(state.shape[-1])]
    return evaluate_columns(e, columns, t, theta, state.shape[:-1])


def evaluate_columns(e: Expr, columns: Sequence[np.ndarray], t: ArrayLike = 0.0,
                     theta: Sequence[float] | None = None, shape=None):
    """Like :func:`evaluate`, with the state given as one array per component.

    Contiguous columns make repeated evaluation (inside an optimiser) cheaper.
    """
    t = np.asarray(t, dtype=float)
    theta = np.zeros(0) if theta is None else np.asarray(theta, dtype=float)
    if shape is None:
        shape = columns[0].shape if len(columns) else ()
    shape = np.broadcast_shapes(tuple(shape), t.shape)
    with np.errstate(all="ignore"):
        out = _eval(e, columns, t, theta)
    return np.broadcast_to(out, shape)


def eval_scalar(e: Expr, state: Sequence[float], t: float = 0.0,
                theta: Sequence[float] | None = None) -> float:
    return float(evaluate(e, state, t, theta))


def _eval(e: Expr, x: Sequence[np.ndarray], t: np.ndarray, theta: np.ndarray):
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, Var):
        if e.index > len(x):
            raise ExprDomainError(f"state has only {len(x)} components", e)
        return x[e.index - 1]
    if isinstance(e, Time):
        return t
    if isinstance(e, Param):
        if e.index > theta.shape[0]:
            raise ExprDomainError(f"theta has only {theta.shape[0]} entries", e)
        return theta[e.index - 1]
    if isinstance(e, Unary):
        a = _eval(e.arg, x, t, theta)
        return _UNARY[e.op](a, e)
    if isinstance(e, Binary):
        a = _eval(e.left, x, t, theta)
        b = _eval(e.right, x, t, theta)
        return _BINARY[e.op](a, b, e)
    raise TypeError(f"not an expression: {e!r}")


def _log(a, e):
    if np.any(a <= 0):
        raise ExprDomainError("log of non-positive value", e)
    return np.log(a)


def _sqrt(a, e):
    if np.any(a < 0):
        raise ExprDomainError("sqrt of negative value", e)
    return np.sqrt(a)


def _div(a, b, e):
    if np.any(b == 0):
        raise ExprDomainError("division by zero", e)
    return a / b


def _pow(a, b, e):
    a, b = np.broadcast_arrays(a, b)
    if np.any((a < 0) & (b != np.round(b))):
        raise ExprDomainError("negative base with non-integer exponent", e)
    if np.any((a == 0) & (b < 0)):
        raise ExprDomainError("zero raised to a negative power", e)
    return np.power(a, b)


_UNARY = {
    "neg": lambda a, e: -a,
    "exp": lambda a, e: np.exp(a),
    "log": _log,
    "sin": lambda a, e: np.sin(a),
    "cos": lambda a, e: np.cos(a),
    "abs": lambda a, e: np.abs(a),
    "sqrt": _sqrt,
}

_BINARY = {
    "+": lambda a, b, e: a + b,
    "-": lambda a, b, e: a - b,
    "*": lambda a, b, e: a * b,
    "/": _div,
    "^": _pow,
}


# ------------------------------------------------------ interval bounds


def bounds(e: Expr, var_range: tuple[float, float] = (-math.inf, math.inf),
           t_range: tuple[float, float] = (0.0, math.inf),
           theta: Sequence[float] | None = None) -> tuple[float, float]:
    """Conservative interval enclosing every value ``e`` can take.

    All components range over ``var_range``; parameters must be bound.
    Used to certify that jump sizes are bounded.
    """
    theta = [] if theta is None else list(theta)
    return _interval(e, var_range, t_range, theta)


def _mul_iv(a, b):
    prods = []
    for p in a:
        for q in b:
            if (p == 0 and math.isinf(q)) or (q == 0 and math.isinf(p)):
                prods.append(0.0)
            else:
                prods.append(p * q)
    return min(prods), max(prods)


def _exp(v):
    if v == -math.inf:
        return 0.0
    return math.exp(v) if v < 700 else math.inf


def _interval(e, xr, tr, theta):
    lo, hi = _interval_raw(e, xr, tr, theta)
    # inf - inf and friends: widen instead of propagating nan
    return (-math.inf if math.isnan(lo) else lo), (math.inf if math.isnan(hi) else hi)


def _interval_raw(e, xr, tr, theta):
    inf = math.inf
    if isinstance(e, Num):
        return e.value, e.value
    if isinstance(e, Var):
        return xr
    if isinstance(e, Time):
        return tr
    if isinstance(e, Param):
        v = float(theta[e.index - 1]) if e.index <= len(theta) else None
        return (v, v) if v is not None else (-inf, inf)
    if isinstance(e, Unary):
        lo, hi = _interval(e.arg, xr, tr, theta)
        op = e.op
        if op == "neg":
            return -hi, -lo
        if op == "exp":
            return _exp(lo), _exp(hi)
        if op == "log":
            if hi <= 0:
                return -inf, inf  # empty domain; evaluation raises anyway
            return (math.log(lo) if lo > 0 else -inf), (math.log(hi) if hi < inf else inf)
        if op in ("sin", "cos"):
            return -1.0, 1.0
        if op == "abs":
            if lo >= 0:
                return lo, hi
            if hi <= 0:
                return -hi, -lo
            return 0.0, max(-lo, hi)
        if op == "sqrt":
            if hi < 0:
                return -inf, inf
            return math.sqrt(max(lo, 0.0)), math.sqrt(hi) if hi < inf else inf
    if isinstance(e, Binary):
        a = _interval(e.left, xr, tr, theta)
        b = _interval(e.right, xr, tr, theta)
        if e.op == "+":
            return a[0] + b[0], a[1] + b[1]
        if e.op == "-":
            return a[0] - b[1], a[1] - b[0]
        if e.op == "*":
            return _mul_iv(a, b)
        if e.op == "/":
            if b[0] <= 0 <= b[1]:
                return -inf, inf
            return _mul_iv(a, (1.0 / b[1], 1.0 / b[0]))
        if e.op == "^":
            if b[0] == b[1] and float(b[0]).is_integer() and b[0] >= 0:
                n = int(b[0])
                if n == 0:
                    return 1.0, 1.0
                lo, hi = a
                cands = [lo ** n if math.isfinite(lo) else (inf if n % 2 == 0 or lo > 0 else -inf),
                         hi ** n if math.isfinite(hi) else inf]
                if n % 2 == 0 and lo < 0 < hi:
                    return 0.0, max(cands)
                return min(cands), max(cands)
            return -inf, inf
    raise TypeError(f"not an expression: {e!r}")
