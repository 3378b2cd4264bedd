"""Scalar expressions over chart coordinates.

Nodes are interned: two structurally equal trees are the same Python object,
so ``==`` is identity and repeated subtrees cost nothing to share.  Every
traversal here is iterative, which keeps long sums from hitting the
interpreter recursion limit.
"""

from __future__ import annotations

import math
import re
import struct
import weakref
from dataclasses import dataclass, field

from .errors import (
    EvalError,
    ExprSyntaxError,
    MissingCoordinate,
    NameCollision,
    NonIntegerExponent,
    UnknownVariable,
)

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")

_M64 = (1 << 64) - 1


def _fmix(h):
    h &= _M64
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _M64
    return h ^ (h >> 31)


def _text_hash(s):
    h = 0xCBF29CE484222325
    for byte in s.encode():
        h = ((h ^ byte) * 0x100000001B3) & _M64
    return h


def _float_bits(v):
    return struct.unpack("<Q", struct.pack("<d", v))[0]


_table = weakref.WeakValueDictionary()


class Expr:
    """Base node.  Use the subclasses or :func:`parse` to build trees."""

    __slots__ = ("args", "data", "skey", "simp", "__weakref__")
    tag = 0

    def __hash__(self):
        return self.skey

    def __str__(self):
        return to_str(self)

    def __repr__(self):
        return f"Expr({to_str(self)!r})"

    def __reduce__(self):
        return (parse, (to_str(self),))

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        if isinstance(n, float) and n.is_integer():
            n = int(n)
        if not isinstance(n, int):
            raise NonIntegerExponent(repr(n))
        return power(self, n)


def _make(cls, args, data, data_hash):
    key = (cls, data_hash, tuple(id(a) for a in args))
    node = _table.get(key)
    if node is not None:
        return node
    node = object.__new__(cls)
    node.args = args
    node.data = data
    node.simp = None
    h = _fmix(cls.tag * 0x9E3779B97F4A7C15 + data_hash)
    for a in args:
        h = _fmix(h * 31 + a.skey)
    node.skey = h
    _table[key] = node
    return node


def _check(*args):
    for a in args:
        if not isinstance(a, Expr):
            raise TypeError(f"expected Expr, got {type(a).__name__}")


class Const(Expr):
    __slots__ = ()
    tag = 1

    def __new__(cls, value):
        value = float(value) + 0.0  # folds -0.0 into 0.0
        return _make(cls, (), value, _float_bits(value))

    @property
    def value(self):
        return self.data


class Var(Expr):
    __slots__ = ()
    tag = 2

    def __new__(cls, name):
        return _make(cls, (), name, _text_hash(name))

    @property
    def name(self):
        return self.data


class _Binary(Expr):
    __slots__ = ()

    def __new__(cls, left, right):
        _check(left, right)
        return _make(cls, (left, right), None, 0)

    @property
    def left(self):
        return self.args[0]

    @property
    def right(self):
        return self.args[1]


class Add(_Binary):
    __slots__ = ()
    tag = 3


class Sub(_Binary):
    __slots__ = ()
    tag = 4


class Mul(_Binary):
    __slots__ = ()
    tag = 5


class Div(_Binary):
    __slots__ = ()
    tag = 6


class Neg(Expr):
    __slots__ = ()
    tag = 7

    def __new__(cls, arg):
        _check(arg)
        return _make(cls, (arg,), None, 0)

    @property
    def arg(self):
        return self.args[0]


class Pow(Expr):
    __slots__ = ()
    tag = 8

    def __new__(cls, base, exponent):
        _check(base)
        if not isinstance(exponent, int) or isinstance(exponent, bool):
            raise NonIntegerExponent(repr(exponent))
        return _make(cls, (base,), exponent, exponent & _M64)

    @property
    def base(self):
        return self.args[0]

    @property
    def exponent(self):
        return self.data


class Func(Expr):
    """Elementary function application: exp, log, sin, cos or sqrt."""

    __slots__ = ()
    tag = 9

    def __new__(cls, fn, arg):
        if fn not in FUNCTIONS:
            raise ValueError(f"unknown function {fn!r}")
        _check(arg)
        return _make(cls, (arg,), fn, _text_hash(fn))

    @property
    def fn(self):
        return self.data

    @property
    def arg(self):
        return self.args[0]


ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(value):
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Const(value)
    if isinstance(value, str):
        return parse(value)
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def fold(root, visit):
    """Bottom-up evaluation over the DAG; ``visit(node, child_results)``."""
    memo = {}
    stack = [root]
    while stack:
        node = stack[-1]
        if node in memo:
            stack.pop()
            continue
        pending = [c for c in node.args if c not in memo]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        memo[node] = visit(node, [memo[c] for c in node.args])
    return memo[root]


def nodes(root):
    """All distinct nodes of ``root`` in post-order."""
    order = []
    fold(root, lambda n, _: order.append(n))
    return order


# ---------------------------------------------------------------- builders


def powi(x, n):
    """Integer power by repeated squaring; the compiled kernel uses the same scheme."""
    m = -n if n < 0 else n
    result = 1.0
    base = x
    while m:
        if m & 1:
            result *= base
        base *= base
        m >>= 1
    if n < 0:
        return 1.0 / result if result != 0.0 else math.inf
    return result


def add(a, b):
    if type(a) is Const and type(b) is Const:
        return Const(a.value + b.value)
    if a is ZERO:
        return b
    if b is ZERO:
        return a
    return Add(a, b)


def sub(a, b):
    if type(a) is Const and type(b) is Const:
        return Const(a.value - b.value)
    if a is b:
        return ZERO
    if b is ZERO:
        return a
    if a is ZERO:
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if type(a) is Const and type(b) is Const:
        return Const(a.value * b.value)
    if a is ZERO or b is ZERO:
        return ZERO
    if a is ONE:
        return b
    if b is ONE:
        return a
    if type(a) is Const and a.value == -1.0:
        return neg(b)
    if type(b) is Const and b.value == -1.0:
        return neg(a)
    return Mul(a, b)


def div(a, b):
    if b is ONE:
        return a
    if type(b) is Const and b.value != 0.0:
        if type(a) is Const:
            return Const(a.value / b.value)
        if a is ZERO:
            return ZERO
    if a is ZERO and b is not ZERO:
        return ZERO
    return Div(a, b)


def neg(a):
    if type(a) is Const:
        return Const(-a.value)
    if type(a) is Neg:
        return a.arg
    return Neg(a)


def power(a, n):
    if n == 0:
        return ONE
    if n == 1:
        return a
    if type(a) is Const and not (a.value == 0.0 and n < 0):
        return Const(powi(a.value, n))
    if type(a) is Pow:
        return Pow(a.base, a.exponent * n)
    return Pow(a, n)


def func(fn, a):
    if type(a) is Const:
        v = _apply_fn(fn, a.value, strict=False)
        if v is not None:
            return Const(v)
    return Func(fn, a)


def exp(a):
    return func("exp", as_expr(a))


def log(a):
    return func("log", as_expr(a))


def sin(a):
    return func("sin", as_expr(a))


def cos(a):
    return func("cos", as_expr(a))


def sqrt(a):
    return func("sqrt", as_expr(a))


def sum_exprs(items):
    total = ZERO
    for item in items:
        total = add(total, item)
    return total


def _apply_fn(fn, x, strict=True):
    if fn == "log" and x <= 0.0:
        if strict:
            raise EvalError("log of non-positive value")
        return None
    if fn == "sqrt" and x < 0.0:
        if strict:
            raise EvalError("sqrt of negative value")
        return None
    try:
        v = getattr(math, fn)(x)
    except OverflowError:
        v = math.inf
    if not math.isfinite(v):
        if strict:
            raise EvalError("non-finite value")
        return None
    return v


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.lastgroup is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text, allowed):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        raise ExprSyntaxError(message, tok[2], self.text)

    def expect(self, op):
        tok = self.peek()
        if tok[0] != "op" or tok[1] != op:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            self.fail(f"expected {op!r}, found {what}")
        return self.take()

    def expr(self):
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            right = self.term()
            left = Add(left, right) if op == "+" else Sub(left, right)
        return left

    def term(self):
        left = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            right = self.factor()
            left = Mul(left, right) if op == "*" else Div(left, right)
        return left

    def factor(self):
        depth = 0
        while self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            depth += 1
        node = self.power()
        for _ in range(depth):
            node = Neg(node)
        return node

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            return Pow(base, self.exponent())
        return base

    def exponent(self):
        paren = False
        if self.peek()[0] == "op" and self.peek()[1] == "(":
            self.take()
            paren = True
        sign = 1
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            if self.take()[1] == "-":
                sign = -sign
        tok = self.peek()
        if tok[0] == "num":
            value = float(tok[1])
            if not value.is_integer():
                raise NonIntegerExponent(tok[1], tok[2])
            self.take()
            n = sign * int(value)
        elif tok[0] == "end":
            self.fail("expected integer exponent, found end of input")
        else:
            raise NonIntegerExponent(tok[1], tok[2])
        if paren:
            nxt = self.peek()
            if nxt[0] != "op" or nxt[1] != ")":
                raise NonIntegerExponent(self.text[tok[2]:].strip(), tok[2])
            self.take()
        return n

    def atom(self):
        tok = self.peek()
        kind, text, pos = tok
        if kind == "num":
            self.take()
            return Const(float(text))
        if kind == "id":
            self.take()
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {text!r}", pos, self.text)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            if text in FUNCTIONS:
                raise ExprSyntaxError(f"function {text!r} needs an argument", pos, self.text)
            if self.allowed is not None and text not in self.allowed:
                raise UnknownVariable(text, pos)
            return Var(text)
        if kind == "op" and text == "(":
            self.take()
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "end":
            self.fail("unexpected end of input")
        self.fail(f"unexpected token {text!r}")


def parse(text, coordinates=None):
    """Parse ``text`` into an expression tree.

    ``coordinates`` (names or a :class:`Chart`) restricts which identifiers
    are accepted; ``None`` accepts any identifier.
    """
    if isinstance(coordinates, Chart):
        coordinates = coordinates.coordinates
    allowed = None if coordinates is None else frozenset(coordinates)
    p = _Parser(text, allowed)
    node = p.expr()
    tok = p.peek()
    if tok[0] != "end":
        p.fail(f"unexpected token {tok[1]!r}")
    return node


# ---------------------------------------------------------------- printing


def _fmt_number(v):
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _str_visit(node, kids):
    t = type(node)
    if t is Const:
        return _fmt_number(node.value), (3 if node.value < 0 else 5)
    if t is Var:
        return node.name, 5
    if t is Func:
        return f"{node.fn}({kids[0][0]})", 5
    if t is Neg:
        s, p = kids[0]
        return "-" + (s if p >= 3 else f"({s})"), 3
    if t is Pow:
        s, p = kids[0]
        return (s if p >= 5 else f"({s})") + f"^{node.exponent}", 4
    (ls, lp), (rs, rp) = kids
    if t is Add or t is Sub:
        op, prec = (" + ", 1) if t is Add else (" - ", 1)
    else:
        op, prec = ("*", 2) if t is Mul else ("/", 2)
    if lp < prec:
        ls = f"({ls})"
    if rp <= prec:
        rs = f"({rs})"
    return ls + op + rs, prec


def to_str(e):
    """Render with minimal parentheses; ``parse(to_str(e))`` rebuilds ``e``."""
    return fold(e, _str_visit)[0]


# ---------------------------------------------------------------- queries


def free_vars(e):
    return frozenset(n.name for n in nodes(e) if type(n) is Var)


def is_const(e):
    return type(e) is Const


def node_count(e):
    return len(nodes(e))


def substitute(e, mapping):
    """Replace variables by expressions (``mapping`` name -> Expr)."""
    mapping = {k: as_expr(v) for k, v in mapping.items()}

    def visit(node, kids):
        t = type(node)
        if t is Var:
            return mapping.get(node.name, node)
        if t is Const:
            return node
        return _rebuild(node, kids)

    return fold(e, visit)


def _rebuild(node, kids):
    t = type(node)
    if t is Add:
        return add(*kids)
    if t is Sub:
        return sub(*kids)
    if t is Mul:
        return mul(*kids)
    if t is Div:
        return div(*kids)
    if t is Neg:
        return neg(kids[0])
    if t is Pow:
        return power(kids[0], node.exponent)
    if t is Func:
        return func(node.fn, kids[0])
    return node


# ---------------------------------------------------------------- calculus


def differentiate(e, var, coordinates=None):
    """Partial derivative with respect to coordinate ``var`` (simplified).

    When ``coordinates`` is given, ``var`` must be one of them.
    """
    if isinstance(var, Var):
        var = var.name
    if coordinates is not None and var not in coordinates:
        raise UnknownVariable(var)

    def visit(node, kids):
        t = type(node)
        if t is Const:
            return ZERO
        if t is Var:
            return ONE if node.name == var else ZERO
        if t is Add:
            return add(kids[0], kids[1])
        if t is Sub:
            return sub(kids[0], kids[1])
        a = node.args[0]
        if t is Neg:
            return neg(kids[0])
        if t is Mul:
            b = node.args[1]
            return add(mul(kids[0], b), mul(a, kids[1]))
        if t is Div:
            b = node.args[1]
            return sub(div(kids[0], b), div(mul(a, kids[1]), power(b, 2)))
        da = kids[0]
        if da is ZERO:
            return ZERO
        if t is Pow:
            n = node.exponent
            return mul(mul(Const(n), power(a, n - 1)), da)
        fn = node.fn
        if fn == "exp":
            return mul(node, da)
        if fn == "log":
            return div(da, a)
        if fn == "sin":
            return mul(func("cos", a), da)
        if fn == "cos":
            return neg(mul(func("sin", a), da))
        return div(da, mul(Const(2.0), node))

    return simplify(fold(e, visit))


def gradient(e, coordinates):
    return [differentiate(e, c) for c in coordinates]


# ---------------------------------------------------------------- simplification
#
# Sums are flattened into (coefficient, factors) terms, like terms are
# collected and products merge integer powers of equal bases.  The result is
# rebuilt in a fixed order, which makes the rewrite idempotent.  Products of
# sums are not expanded.


def _is_sum(e):
    t = type(e)
    return t is Add or t is Sub


def _coeff_factors(node):
    t = type(node)
    if t is Const:
        return node.value, {}
    if t is Neg:
        c, f = _coeff_factors(node.arg)
        return -c, f
    if t is Mul:
        c1, f1 = _coeff_factors(node.args[0])
        c2, f2 = _coeff_factors(node.args[1])
        return c1 * c2, _merge(f1, f2, 1)
    if t is Div:
        c2, f2 = _coeff_factors(node.args[1])
        if c2 == 0.0:
            return 1.0, {node: 1}
        c1, f1 = _coeff_factors(node.args[0])
        return c1 / c2, _merge(f1, f2, -1)
    if t is Pow:
        base, n = node.base, node.exponent
        if _is_sum(base):
            return 1.0, {base: n}
        c, f = _coeff_factors(base)
        if c == 0.0 and n < 0:
            return 1.0, {node: 1}
        return powi(c, n), {b: e * n for b, e in f.items()}
    return 1.0, {node: 1}


def _merge(f1, f2, sign):
    out = dict(f1)
    for b, e in f2.items():
        total = out.get(b, 0) + sign * e
        if total:
            out[b] = total
        else:
            out.pop(b, None)
    return out


def _terms(e):
    """Top-level additive terms of ``e`` as (coefficient, factors) pairs."""
    out = []
    stack = [(e, 1.0)]
    while stack:
        node, sign = stack.pop()
        t = type(node)
        if t is Add:
            stack.append((node.args[1], sign))
            stack.append((node.args[0], sign))
        elif t is Sub:
            stack.append((node.args[1], -sign))
            stack.append((node.args[0], sign))
        elif t is Neg:
            stack.append((node.arg, -sign))
        else:
            c, f = _coeff_factors(node)
            out.append((sign * c, f))
    return out


def additive_terms(e):
    """Top-level additive terms as expressions (used for relative tolerances)."""
    out = []
    stack = [(e, False)]
    while stack:
        node, negated = stack.pop()
        t = type(node)
        if t is Add:
            stack.append((node.args[1], negated))
            stack.append((node.args[0], negated))
        elif t is Sub:
            stack.append((node.args[1], not negated))
            stack.append((node.args[0], negated))
        elif t is Neg:
            stack.append((node.arg, not negated))
        else:
            out.append(node)
    return out


def _factor_key(b):
    t = type(b)
    if t is Var:
        return (0, b.name)
    if t is Func:
        return (1, b.fn, b.skey)
    return (2, "", b.skey)


def _mono(factors):
    if not factors:
        return ONE
    items = sorted(factors.items(), key=lambda be: _factor_key(be[0]))
    num = None
    den = None
    for b, e in items:
        if e > 0:
            piece = b if e == 1 else Pow(b, e)
            num = piece if num is None else Mul(num, piece)
        else:
            piece = b if e == -1 else Pow(b, -e)
            den = piece if den is None else Mul(den, piece)
    if den is None:
        return num
    return Div(ONE if num is None else num, den)


def _term_key(factors):
    sig = tuple(sorted(((_factor_key(b), -e) for b, e in factors.items())))
    return (not factors, sig)


def _term(c, factors):
    """Rebuild ``c * prod(factors)`` as a left-associated chain."""
    if not factors:
        return Const(c)
    items = sorted(factors.items(), key=lambda be: _factor_key(be[0]))
    num = [b if e == 1 else Pow(b, e) for b, e in items if e > 0]
    den = [b if e == -1 else Pow(b, -e) for b, e in items if e < 0]
    if c == -1.0 and num:
        num[0] = Neg(num[0])
    elif c != 1.0 or not num:
        num.insert(0, Const(c))
    acc = num[0]
    for piece in num[1:]:
        acc = Mul(acc, piece)
    if not den:
        return acc
    bottom = den[0]
    for piece in den[1:]:
        bottom = Mul(bottom, piece)
    return Div(acc, bottom)


def _collect(terms, distribute):
    acc = {}
    order = {}
    stack = list(reversed(terms))
    while stack:
        c, f = stack.pop()
        if c == 0.0:
            continue
        if distribute and len(f) == 1:
            (b, e), = f.items()
            if e == 1 and _is_sum(b):
                stack.extend(reversed([(c * c2, f2) for c2, f2 in _terms(b)]))
                continue
        mono = _mono(f)
        if mono in acc:
            acc[mono] += c
        else:
            acc[mono] = c
            order[mono] = f
    items = [(order[m], c) for m, c in acc.items() if c != 0.0]
    items.sort(key=lambda fc: (_term_key(fc[0]), _mono(fc[0]).skey))
    return items


def _build_sum(items):
    if not items:
        return ZERO
    f, c = items[0]
    acc = _term(c, f)
    for f, c in items[1:]:
        if c > 0:
            acc = Add(acc, _term(c, f))
        else:
            acc = Sub(acc, _term(-c, f))
    return acc


def _single(e):
    terms = _terms(e)
    if len(terms) == 1:
        return terms[0]
    return 1.0, {e: 1}


def _simp_visit(node, kids):
    t = type(node)
    if t is Const or t is Var:
        return node
    if t is Add:
        return _build_sum(_collect(_terms(kids[0]) + _terms(kids[1]), True))
    if t is Sub:
        rhs = [(-c, f) for c, f in _terms(kids[1])]
        return _build_sum(_collect(_terms(kids[0]) + rhs, True))
    if t is Neg:
        return _build_sum(_collect([(-c, f) for c, f in _terms(kids[0])], True))
    if t is Func:
        return func(node.fn, kids[0])
    if t is Pow:
        a, n = kids[0], node.exponent
        if n == 0:
            return ONE
        if _is_sum(a):
            return _build_sum(_collect([(1.0, {a: n})], False))
        c, f = _single(a)
        if c == 0.0:
            return ZERO if n > 0 else Pow(a, n)
        return _build_sum(_collect([(powi(c, n), {b: e * n for b, e in f.items()})], False))
    a, b = kids
    if t is Mul:
        if a is ZERO or b is ZERO:
            return ZERO
        ca, fa = _single(a)
        cb, fb = _single(b)
        return _build_sum(_collect([(ca * cb, _merge(fa, fb, 1))], False))
    # Div
    cb, fb = _single(b)
    if cb == 0.0:
        return Div(a, b)
    if a is ZERO:
        return ZERO
    ca, fa = _single(a)
    return _build_sum(_collect([(ca / cb, _merge(fa, fb, -1))], False))


def simplify(e):
    """Constant folding, identity elimination and like-term collection.

    Results are cached on the (immutable, hash-consed) nodes, so simplified
    subtrees are not revisited.
    """
    memo = {}
    stack = [e]
    while stack:
        node = stack[-1]
        if node in memo:
            stack.pop()
            continue
        if node.simp is not None:
            memo[node] = node.simp
            stack.pop()
            continue
        pending = [c for c in node.args if c not in memo]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        r = _simp_visit(node, [memo[c] for c in node.args])
        node.simp = r
        if r.simp is None:
            r.simp = r
        memo[node] = r
    return memo[e]


# ---------------------------------------------------------------- evaluation


def evaluate(e, point):
    """Evaluate at a single point given as a mapping name -> float."""

    def visit(node, kids):
        t = type(node)
        if t is Const:
            return node.value
        if t is Var:
            try:
                return float(point[node.name])
            except KeyError:
                raise MissingCoordinate(node.name) from None
        if t is Add:
            v = kids[0] + kids[1]
        elif t is Sub:
            v = kids[0] - kids[1]
        elif t is Mul:
            v = kids[0] * kids[1]
        elif t is Div:
            if kids[1] == 0.0:
                raise EvalError("division by zero", node, dict(point))
            v = kids[0] / kids[1]
        elif t is Neg:
            v = -kids[0]
        elif t is Pow:
            if kids[0] == 0.0 and node.exponent < 0:
                raise EvalError("division by zero", node, dict(point))
            try:
                v = powi(kids[0], node.exponent)
            except OverflowError:
                v = math.inf
        else:
            try:
                v = _apply_fn(node.fn, kids[0])
            except EvalError as exc:
                raise EvalError(exc.reason, node, dict(point)) from None
        if not math.isfinite(v):
            raise EvalError("non-finite value", node, dict(point))
        return v

    return fold(e, visit)


OPCODES = {
    "const": 0, "var": 1, "add": 2, "sub": 3, "mul": 4, "div": 5, "neg": 6,
    "pow": 7, "exp": 8, "log": 9, "sin": 10, "cos": 11, "sqrt": 12,
}


@dataclass
class Program:
    """Register program for batch evaluation of several outputs.

    Instruction ``k`` writes register ``k`` from registers ``a[k]``/``b[k]``;
    shared subtrees are computed once.
    """

    op: list
    a: list
    b: list
    imm: list
    outputs: list
    variables: tuple
    source: list = field(repr=False)


def compile_program(exprs, variables):
    variables = tuple(variables)
    col = {name: i for i, name in enumerate(variables)}
    op, a, b, imm, source = [], [], [], [], []
    reg = {}

    def emit(node, code, x=0, y=0, value=0.0):
        reg[node] = len(op)
        op.append(code)
        a.append(x)
        b.append(y)
        imm.append(value)
        source.append(node)

    for root in exprs:
        stack = [root]
        while stack:
            node = stack[-1]
            if node in reg:
                stack.pop()
                continue
            pending = [c for c in node.args if c not in reg]
            if pending:
                stack.extend(pending)
                continue
            stack.pop()
            t = type(node)
            if t is Const:
                emit(node, 0, value=node.value)
            elif t is Var:
                if node.name not in col:
                    raise MissingCoordinate(node.name)
                emit(node, 1, col[node.name])
            elif t is Neg:
                emit(node, 6, reg[node.arg])
            elif t is Pow:
                emit(node, 7, reg[node.base], node.exponent)
            elif t is Func:
                emit(node, OPCODES[node.fn], reg[node.arg])
            else:
                code = {Add: 2, Sub: 3, Mul: 4, Div: 5}[t]
                emit(node, code, reg[node.args[0]], reg[node.args[1]])
    outputs = [reg[e] for e in exprs]
    return Program(op, a, b, imm, outputs, variables, source)


# ---------------------------------------------------------------- charts


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Chart:
    """Ordered coordinate names with optional sampling intervals."""

    coordinates: tuple
    domain: tuple = ()

    def __post_init__(self):
        coords = tuple(self.coordinates)
        object.__setattr__(self, "coordinates", coords)
        if len(set(coords)) != len(coords):
            raise ValueError(f"duplicate coordinate names in {coords}")
        for c in coords:
            if not _IDENT.match(c) or c in FUNCTIONS:
                raise ValueError(f"invalid coordinate name {c!r}")
        dom = self.domain
        if isinstance(dom, dict):
            dom = tuple(sorted((k, (float(v[0]), float(v[1]))) for k, v in dom.items()))
        for name, (lo, hi) in dom:
            if name not in coords:
                raise ValueError(f"domain given for unknown coordinate {name!r}")
            if not lo < hi:
                raise ValueError(f"empty interval for {name!r}: [{lo}, {hi}]")
        object.__setattr__(self, "domain", tuple(dom))

    @property
    def dim(self):
        return len(self.coordinates)

    def index(self, name):
        return self.coordinates.index(name)

    def interval(self, name):
        for k, iv in self.domain:
            if k == name:
                return iv
        return (-1.0, 1.0)

    def vars(self):
        return [Var(c) for c in self.coordinates]

    def extend(self, names, domain=None):
        names = tuple(names)
        clash = set(names) & set(self.coordinates)
        if clash:
            raise NameCollision(f"coordinate names already in chart: {sorted(clash)}")
        dom = dict(self.domain)
        dom.update(dict(domain or {}))
        return Chart(self.coordinates + names, dom)

    def parse(self, text):
        return parse(text, self.coordinates)

    def differentiate(self, e, var):
        return differentiate(e, var, self.coordinates)
