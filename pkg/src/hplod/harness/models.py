"""Coefficient fields and right-hand sides for the experiments."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..assembly import Coefficient, load_coefficient
from ..errors import ConfigError
from ..mesh import build_mesh, is_power_of_two

COEFFICIENT_RANGES = {
    "rough-a1": (0.25, 2.5),
    "rough-a2": (1.0, 4.0),
}
MODEL_KINDS = ("rough-a1", "rough-a2", "constant", "file")


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "rough-a1"
    dim: int = 2
    n_eps: int = 32
    seed: int = 0
    value: float = 1.0  # constant kind only
    path: str | None = None  # file kind only
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model {self.kind!r}; choose from {', '.join(MODEL_KINDS)}")
        if self.kind == "file" and not self.path:
            raise ConfigError("model 'file' needs a coefficient file path")
        if not is_power_of_two(self.n_eps):
            raise ConfigError(f"eps must be a negative power of two (got 1/{self.n_eps})")
        lo, hi = self.value_range
        if not (0.0 < lo <= hi < math.inf):
            raise ConfigError(f"invalid coefficient range [{lo}, {hi}]")

    @property
    def value_range(self) -> tuple[float, float]:
        if self.kind in COEFFICIENT_RANGES:
            lo, hi = COEFFICIENT_RANGES[self.kind]
            return (self.lo if self.lo is not None else lo, self.hi if self.hi is not None else hi)
        if self.kind == "constant":
            return self.value, self.value
        return (1.0, 1.0) if self.lo is None else (self.lo, self.hi)


def generate_coefficient(spec: ModelSpec) -> Coefficient:
    """Piecewise constant field on the eps-mesh.

    Rough models draw i.i.d. uniform values from a Philox (counter-based)
    stream keyed by the seed; cell ``i`` in lexicographic order receives the
    ``i``-th draw, so fields are reproducible across platforms.
    """
    if spec.kind == "file":
        coef = load_coefficient(spec.path)
        if coef.eps_mesh.dim != spec.dim:
            raise ConfigError(f"coefficient file is {coef.eps_mesh.dim}D, study is {spec.dim}D")
        return coef
    mesh = build_mesh(spec.dim, spec.n_eps)
    if spec.kind == "constant":
        return Coefficient(mesh, np.full(mesh.num_elements, float(spec.value)))
    lo, hi = spec.value_range
    gen = np.random.Generator(np.random.Philox(key=spec.seed))
    return Coefficient(mesh, lo + (hi - lo) * gen.random(mesh.num_elements))


# --------------------------------------------------------------------------
# right-hand sides


def f1(x):
    return np.sin(5 * np.pi * x[:, 0]) * np.cos(3 * np.pi * x[:, 1])


def f2(x):
    return (x[:, 0] + np.cos(3 * np.pi * x[:, 0])) * x[:, 1] ** 3


def _const(x):
    return np.ones(x.shape[0])


BUILTIN_RHS = {"f1": f1, "f2": f2, "const": _const}


def make_rhs(rhs_id: str, dim: int = 2) -> Callable:
    if rhs_id.startswith("expr="):
        return parse_expression(rhs_id[len("expr="):], dim)
    if rhs_id not in BUILTIN_RHS:
        raise ConfigError(f"unknown right-hand side {rhs_id!r}; use f1, f2, const or expr=<formula>")
    if rhs_id in ("f1", "f2") and dim != 2:
        raise ConfigError(f"{rhs_id} is defined in 2D only")
    return BUILTIN_RHS[rhs_id]


# --------------------------------------------------------------------------
# expression grammar
#
#   expr  := term (('+' | '-') term)*
#   term  := unary (('*' | '/') unary)*
#   unary := ('+' | '-') unary | power
#   power := atom ('^' unary)?
#   atom  := NUMBER | x1 | x2 | pi | (sin | cos) '(' expr ')' | '(' expr ')'

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+)|([A-Za-z_]\w*)|(.))")
_FUNCS = {"sin": np.sin, "cos": np.cos}
_BINOPS = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide}


def _binary(fn, a, b):
    return lambda x: fn(a(x), b(x))


def _tokenize(text: str) -> list[tuple[str, str]]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        num, ident, op = m.groups()
        if num is not None:
            out.append(("num", num))
        elif ident is not None:
            out.append(("id", ident))
        elif op is not None:
            if op not in "+-*/^()":
                raise ConfigError(f"unexpected character {op!r} in expression {text!r}")
            out.append(("op", op))
        pos = m.end()
    out.append(("end", ""))
    return out


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            raise ConfigError(f"expected {value!r} in expression {self.text!r}, found {tok[1] or 'end'!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ConfigError(f"trailing input {self.peek()[1]!r} in expression {self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = _binary(_BINOPS[op], node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = _binary(_BINOPS[op], node, self.unary())
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            arg = self.unary()
            return lambda x: -arg(x)
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return _binary(np.power, base, self.unary())
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            c = float(val)
            return lambda x: np.full(x.shape[0], c)
        if kind == "id":
            if val in _FUNCS:
                fn = _FUNCS[val]
                self.take("(")
                arg = self.expr()
                self.take(")")
                return lambda x: fn(arg(x))
            if val == "pi":
                return lambda x: np.full(x.shape[0], np.pi)
            m = re.fullmatch(r"x([12])", val)
            if m:
                ax = int(m.group(1)) - 1
                if ax >= self.dim:
                    raise ConfigError(f"{val} is not available in {self.dim}D")
                return lambda x: x[:, ax]
            raise ConfigError(f"unknown identifier {val!r} in expression {self.text!r}")
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.take(")")
            return node
        raise ConfigError(f"unexpected {val or 'end of input'!r} in expression {self.text!r}")


def parse_expression(text: str, dim: int = 2) -> Callable:
    """Compile a formula over ``x1``, ``x2`` into a vectorized callable."""
    if not text.strip():
        raise ConfigError("empty expression")
    fn = _Parser(text, dim).parse()
    return lambda x: np.asarray(fn(np.atleast_2d(np.asarray(x, dtype=float))), dtype=float)
