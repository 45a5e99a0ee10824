"""Arithmetic expression trees with exact symbolic partial derivatives.

Expressions carry metric components and conformal-factor profiles.  Trees are
immutable; evaluation accepts scalars or numpy arrays and raises on domain
violations (log of a nonpositive number, division by zero, ...) instead of
propagating NaNs into the tensor calculus downstream.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Pow",
    "FieldTerm",
    "ParseError",
    "EvalError",
    "parse",
    "differentiate",
    "evaluate",
    "to_string",
    "substitute",
]


class ParseError(ValueError):
    """Syntax or identifier error, with the offending source position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalError(ArithmeticError):
    """Domain error or unbound variable during evaluation."""


class Expr:
    """Base class for expression nodes."""

    __slots__ = ()

    def __call__(self, **env):
        return evaluate(self, env)

    def diff(self, var):
        return differentiate(self, var)

    def __repr__(self):
        return f"Expr({to_string(self)})"


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name


# sgn appears only as the derivative of abs; evaluating it at 0 is an error.
_UNARY_OPS = ("neg", "exp", "ln", "sin", "cos", "sqrt", "abs", "sgn")
_BINARY_OPS = ("+", "-", "*", "/")


class Unary(Expr):
    __slots__ = ("op", "arg")

    def __init__(self, op, arg):
        if op not in _UNARY_OPS:
            raise ValueError(f"unknown unary op {op!r}")
        self.op = op
        self.arg = arg


class Binary(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op, left, right):
        if op not in _BINARY_OPS:
            raise ValueError(f"unknown binary op {op!r}")
        self.op = op
        self.left = left
        self.right = right


class Pow(Expr):
    """Power with a constant real exponent."""

    __slots__ = ("base", "exponent")

    def __init__(self, base, exponent):
        self.base = base
        self.exponent = float(exponent)


class FieldTerm(Expr):
    """Leaf backed by an external scalar field.

    The field object must provide ``eval(env) -> value`` and
    ``partial(var) -> Expr``.  Used to splice numerically defined profiles
    (e.g. piecewise conformal factors) into symbolic component expressions.
    """

    __slots__ = ("field",)

    def __init__(self, field):
        self.field = field


_ZERO = Const(0.0)
_ONE = Const(1.0)


def _is_const(e, value=None):
    if not isinstance(e, Const):
        return False
    return value is None or e.value == value


# -- smart constructors (constant folding only; no general simplification) --

def add(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Binary("+", a, b)


def sub(a, b):
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return _ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Binary("*", a, b)


def div(a, b):
    if _is_const(a, 0.0):
        return _ZERO
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    return Binary("/", a, b)


def neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def pow_(base, exponent):
    exponent = float(exponent)
    if exponent == 0.0:
        return _ONE
    if exponent == 1.0:
        return base
    if isinstance(base, Const):
        return Const(base.value ** exponent)
    return Pow(base, exponent)


def func(name, arg):
    if isinstance(arg, Const):
        return Const(_apply_unary(name, arg.value))
    return Unary(name, arg)


# ---------------------------------------------------------------------------
# parsing

_FUNCTIONS = {"exp", "ln", "log", "sin", "cos", "sqrt", "abs"}


class _Tokenizer:
    def __init__(self, source):
        self.source = source
        self.pos = 0
        self.tokens = []
        self._scan()
        self.index = 0

    def _scan(self):
        s = self.source
        i = 0
        while i < len(s):
            ch = s[i]
            if ch.isspace():
                i += 1
                continue
            if ch.isdigit() or (ch == "." and i + 1 < len(s) and s[i + 1].isdigit()):
                j = i
                while j < len(s) and (s[j].isdigit() or s[j] == "."):
                    j += 1
                if j < len(s) and s[j] in "eE":
                    k = j + 1
                    if k < len(s) and s[k] in "+-":
                        k += 1
                    if k < len(s) and s[k].isdigit():
                        while k < len(s) and s[k].isdigit():
                            k += 1
                        j = k
                try:
                    value = float(s[i:j])
                except ValueError:
                    raise ParseError(f"malformed number {s[i:j]!r}", i)
                self.tokens.append(("num", value, i))
                i = j
                continue
            if ch.isalpha() or ch == "_":
                j = i
                while j < len(s) and (s[j].isalnum() or s[j] == "_"):
                    j += 1
                self.tokens.append(("ident", s[i:j], i))
                i = j
                continue
            if ch == "*" and i + 1 < len(s) and s[i + 1] == "*":
                self.tokens.append(("op", "^", i))
                i += 2
                continue
            if ch in "+-*/^()":
                self.tokens.append(("op", ch, i))
                i += 1
                continue
            raise ParseError(f"unexpected character {ch!r}", i)
        self.tokens.append(("end", None, len(s)))

    def peek(self):
        return self.tokens[self.index]

    def advance(self):
        tok = self.tokens[self.index]
        self.index += 1
        return tok


class _Parser:
    """Recursive descent; precedence: ^  >  unary -  >  * /  >  + -."""

    def __init__(self, source, variables):
        self.tok = _Tokenizer(source)
        self.variables = set(variables)

    def parse(self):
        e = self._sum()
        kind, _, pos = self.tok.peek()
        if kind != "end":
            raise ParseError("unexpected trailing input", pos)
        return e

    def _sum(self):
        e = self._term()
        while True:
            kind, value, _ = self.tok.peek()
            if kind == "op" and value in "+-":
                self.tok.advance()
                rhs = self._term()
                e = add(e, rhs) if value == "+" else sub(e, rhs)
            else:
                return e

    def _term(self):
        e = self._unary()
        while True:
            kind, value, _ = self.tok.peek()
            if kind == "op" and value in "*/":
                self.tok.advance()
                rhs = self._unary()
                e = mul(e, rhs) if value == "*" else div(e, rhs)
            else:
                return e

    def _unary(self):
        kind, value, _ = self.tok.peek()
        if kind == "op" and value == "-":
            self.tok.advance()
            return neg(self._unary())
        return self._power()

    def _power(self):
        base = self._atom()
        kind, value, pos = self.tok.peek()
        if kind == "op" and value == "^":
            self.tok.advance()
            exponent = self._constant_exponent()
            return pow_(base, exponent)
        return base

    def _constant_exponent(self):
        sign = 1.0
        kind, value, pos = self.tok.peek()
        if kind == "op" and value == "-":
            self.tok.advance()
            sign = -1.0
            kind, value, pos = self.tok.peek()
        if kind == "num":
            self.tok.advance()
            return sign * value
        if kind == "op" and value == "(":
            self.tok.advance()
            inner = self._constant_exponent()
            kind, value, pos = self.tok.peek()
            if not (kind == "op" and value == ")"):
                raise ParseError("expected ')' after exponent", pos)
            self.tok.advance()
            return sign * inner
        raise ParseError("exponent must be a numeric constant", pos)

    def _atom(self):
        kind, value, pos = self.tok.advance()
        if kind == "num":
            return Const(value)
        if kind == "ident":
            nkind, nvalue, _ = self.tok.peek()
            if nkind == "op" and nvalue == "(":
                if value not in _FUNCTIONS:
                    raise ParseError(f"unknown function {value!r}", pos)
                self.tok.advance()
                arg = self._sum()
                ckind, cvalue, cpos = self.tok.peek()
                if not (ckind == "op" and cvalue == ")"):
                    raise ParseError("unbalanced parenthesis", cpos)
                self.tok.advance()
                name = "ln" if value == "log" else value
                return func(name, arg)
            if value == "pi":
                return Const(math.pi)
            if value == "e":
                return Const(math.e)
            if value not in self.variables:
                raise ParseError(f"unknown identifier {value!r}", pos)
            return Var(value)
        if kind == "op" and value == "(":
            e = self._sum()
            ckind, cvalue, cpos = self.tok.peek()
            if not (ckind == "op" and cvalue == ")"):
                raise ParseError("unbalanced parenthesis", cpos)
            self.tok.advance()
            return e
        raise ParseError("expected a value", pos)


def parse(source, variables):
    """Parse ``source`` over the declared variable names into an Expr."""
    return _Parser(source, variables).parse()


# ---------------------------------------------------------------------------
# differentiation

def differentiate(e, var):
    """Exact symbolic partial derivative of ``e`` with respect to ``var``.

    Repeatedly differentiated trees share subtrees; memoizing on node
    identity keeps the result a compact DAG instead of an exponential tree.
    """
    return _differentiate(e, var, {})


def _differentiate(e, var, memo):
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    out = _differentiate_node(e, var, memo)
    memo[key] = out
    return out


def _differentiate_node(e, var, memo):
    if isinstance(e, Const):
        return _ZERO
    if isinstance(e, Var):
        return _ONE if e.name == var else _ZERO
    if isinstance(e, FieldTerm):
        return e.field.partial(var)
    if isinstance(e, Unary):
        d = _differentiate(e.arg, var, memo)
        if e.op == "neg":
            return neg(d)
        if e.op == "exp":
            return mul(func("exp", e.arg), d)
        if e.op == "ln":
            return div(d, e.arg)
        if e.op == "sin":
            return mul(func("cos", e.arg), d)
        if e.op == "cos":
            return neg(mul(func("sin", e.arg), d))
        if e.op == "sqrt":
            return div(d, mul(Const(2.0), func("sqrt", e.arg)))
        if e.op == "abs":
            return mul(func("sgn", e.arg), d)
        if e.op == "sgn":
            return _ZERO
    if isinstance(e, Binary):
        dl = _differentiate(e.left, var, memo)
        dr = _differentiate(e.right, var, memo)
        if e.op == "+":
            return add(dl, dr)
        if e.op == "-":
            return sub(dl, dr)
        if e.op == "*":
            return add(mul(dl, e.right), mul(e.left, dr))
        if e.op == "/":
            return div(sub(mul(dl, e.right), mul(e.left, dr)), mul(e.right, e.right))
    if isinstance(e, Pow):
        d = _differentiate(e.base, var, memo)
        return mul(mul(Const(e.exponent), pow_(e.base, e.exponent - 1.0)), d)
    raise TypeError(f"cannot differentiate {type(e).__name__}")


# ---------------------------------------------------------------------------
# evaluation

def _apply_unary(op, x):
    if op == "neg":
        return -x
    if op == "exp":
        with np.errstate(over="ignore"):
            return np.exp(x)
    if op == "ln":
        if np.any(np.asarray(x) <= 0.0):
            raise EvalError("ln of a nonpositive value")
        return np.log(x)
    if op == "sin":
        return np.sin(x)
    if op == "cos":
        return np.cos(x)
    if op == "sqrt":
        if np.any(np.asarray(x) < 0.0):
            raise EvalError("sqrt of a negative value")
        return np.sqrt(x)
    if op == "abs":
        return np.abs(x)
    if op == "sgn":
        if np.any(np.asarray(x) == 0.0):
            raise EvalError("sign of abs-derivative undefined at its kink")
        return np.sign(x)
    raise ValueError(op)


def evaluate(e, env):
    """Evaluate ``e`` with variables bound by ``env`` (scalars or arrays).

    Evaluation is memoized on node identity, so shared subtrees of heavily
    differentiated expressions are computed once.
    """
    return _evaluate(e, env, {})


def _evaluate(e, env, memo):
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    out = _evaluate_node(e, env, memo)
    memo[key] = out
    return out


def _evaluate_node(e, env, memo):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, FieldTerm):
        return e.field.eval(env)
    if isinstance(e, Unary):
        return _apply_unary(e.op, _evaluate(e.arg, env, memo))
    if isinstance(e, Binary):
        a = _evaluate(e.left, env, memo)
        b = _evaluate(e.right, env, memo)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0.0):
            raise EvalError("division by zero")
        return a / b
    if isinstance(e, Pow):
        base = _evaluate(e.base, env, memo)
        if e.exponent != int(e.exponent) and np.any(np.asarray(base) < 0.0):
            raise EvalError("fractional power of a negative base")
        return base ** e.exponent
    raise TypeError(f"cannot evaluate {type(e).__name__}")


# ---------------------------------------------------------------------------
# printing and substitution

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "pow": 4, "atom": 5}


def _render(e):
    """Returns (string, precedence)."""
    if isinstance(e, Const):
        if e.value < 0:
            return repr(e.value), _PREC["neg"]
        return repr(e.value), _PREC["atom"]
    if isinstance(e, Var):
        return e.name, _PREC["atom"]
    if isinstance(e, FieldTerm):
        return f"{e.field!s}", _PREC["atom"]
    if isinstance(e, Unary):
        if e.op == "neg":
            s, p = _render(e.arg)
            if p < _PREC["neg"]:
                s = f"({s})"
            return f"-{s}", _PREC["neg"]
        s, _ = _render(e.arg)
        return f"{e.op}({s})", _PREC["atom"]
    if isinstance(e, Binary):
        ls, lp = _render(e.left)
        rs, rp = _render(e.right)
        p = _PREC[e.op]
        if lp < p:
            ls = f"({ls})"
        # -, / are left associative
        if rp < p or (rp == p and e.op in "-/"):
            rs = f"({rs})"
        return f"{ls} {e.op} {rs}", p
    if isinstance(e, Pow):
        bs, bp = _render(e.base)
        if bp < _PREC["atom"]:
            bs = f"({bs})"
        exp = repr(e.exponent)
        if e.exponent < 0:
            exp = f"({exp})"
        return f"{bs}^{exp}", _PREC["pow"]
    raise TypeError(type(e).__name__)


def to_string(e):
    """Render ``e`` so that parsing the result is evaluation-equivalent."""
    return _render(e)[0]


def substitute(e, bindings):
    """Replace variables by constant values (a dict name -> float)."""
    if isinstance(e, Const) or isinstance(e, FieldTerm):
        return e
    if isinstance(e, Var):
        if e.name in bindings:
            return Const(bindings[e.name])
        return e
    if isinstance(e, Unary):
        return func(e.op, substitute(e.arg, bindings)) if e.op != "neg" else neg(
            substitute(e.arg, bindings)
        )
    if isinstance(e, Binary):
        ops = {"+": add, "-": sub, "*": mul, "/": div}
        return ops[e.op](substitute(e.left, bindings), substitute(e.right, bindings))
    if isinstance(e, Pow):
        return pow_(substitute(e.base, bindings), e.exponent)
    raise TypeError(type(e).__name__)
