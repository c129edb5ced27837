"""Symbolic coefficient expressions compiled to vectorized numpy callables.

Model files describe state-dependent coefficients with a small expression
syntax: arithmetic, ``exp``, ``log``, ``sin``, ``cos``, ``tanh``, ``sqrt`` and
the constants ``pi`` and ``E``. In one dimension the state variable is ``x``;
in ``d`` dimensions the components are ``x1 .. xd``. Derivatives are exact,
taken on the expression tree.
"""

from typing import Sequence, Tuple, Union

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import parse_expr, standard_transformations
from sympy.utilities.lambdify import lambdify

from gle_homog.utils import errors

ExprLike = Union[str, int, float, sp.Expr]

ALLOWED_NAMES = {
    "exp": sp.exp,
    "log": sp.log,
    "sin": sp.sin,
    "cos": sp.cos,
    "tanh": sp.tanh,
    "sqrt": sp.sqrt,
    "pi": sp.pi,
    "E": sp.E,
}

# Named one-dimensional profiles usable in place of an expression string.
BUILTIN_PROFILES = {
    "sqrt-two-plus-sin": "sqrt(2 + sin(x))",
    "two-plus-sin": "2 + sin(x)",
    "one-plus-half-x": "1 + x/2",
    "unit": "1",
}


def state_symbols(dimension: int) -> Tuple[sp.Symbol, ...]:
    """Symbols naming the state components."""
    if dimension < 1:
        raise errors.DimensionMismatchError(f"dimension must be positive, got {dimension}")
    if dimension == 1:
        return (sp.Symbol("x", real=True),)
    return tuple(sp.Symbol(f"x{i + 1}", real=True) for i in range(dimension))


def parse_expression(source: ExprLike, symbols: Sequence[sp.Symbol]) -> sp.Expr:
    """
    Parse an expression string over the given symbols.

    Args:
        source: Expression text, number, builtin profile name or sympy expression
        symbols: The only free symbols the expression may use

    Returns:
        The parsed sympy expression

    Raises:
        ConfigParseError: If the text does not parse or uses unknown names
    """
    if isinstance(source, sp.Expr):
        expr = source
    else:
        text = BUILTIN_PROFILES.get(str(source).strip(), str(source))
        local = dict(ALLOWED_NAMES)
        local.update({s.name: s for s in symbols})
        try:
            expr = parse_expr(text, local_dict=local, transformations=standard_transformations)
        except Exception as e:
            # tokenizer and evaluation failures surface under several exception types
            raise errors.ConfigParseError(f"cannot parse expression '{text}': {e}") from e
        if not isinstance(expr, sp.Expr):
            raise errors.ConfigParseError(f"'{text}' is not an arithmetic expression")

    unknown = expr.free_symbols - set(symbols)
    if unknown:
        names = ", ".join(sorted(s.name for s in unknown))
        raise errors.ConfigParseError(f"unknown symbol(s) {names} in expression '{source}'")
    undefined = expr.atoms(AppliedUndef)
    if undefined:
        names = ", ".join(sorted(str(f.func) for f in undefined))
        raise errors.ConfigParseError(f"unknown function(s) {names} in expression '{source}'")
    return expr


def _evaluate(func, columns, n: int) -> np.ndarray:
    with np.errstate(all="ignore"):
        value = func(*columns)
    return np.broadcast_to(np.asarray(value, dtype=float), (n,))


class ScalarExpression:
    """A scalar function of one variable with its exact derivative."""

    def __init__(self, source: ExprLike, variable: str = "x"):
        self.symbol = sp.Symbol(variable, real=True)
        self.expr = parse_expression(source, (self.symbol,))
        self.source = str(source) if not isinstance(source, sp.Expr) else str(self.expr)
        self._func = lambdify((self.symbol,), self.expr, modules="numpy")
        self._dfunc = lambdify((self.symbol,), sp.diff(self.expr, self.symbol), modules="numpy")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        return _evaluate(self._func, (flat,), flat.size).reshape(x.shape)

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        return _evaluate(self._dfunc, (flat,), flat.size).reshape(x.shape)

    def compose(self, inner: "ScalarExpression") -> "ScalarExpression":
        """Return self(inner(x)) as an expression in the inner variable."""
        composed = self.expr.subs(self.symbol, inner.expr)
        return ScalarExpression(composed, variable=inner.symbol.name)

    @property
    def is_constant(self) -> bool:
        return self.symbol not in self.expr.free_symbols

    def __repr__(self) -> str:
        return f"ScalarExpression({self.expr})"


class ExpressionField:
    """A matrix- or vector-valued field on R^d evaluated over batches of states.

    Evaluating on states of shape ``(n, d)`` returns ``(n, *shape)``; the
    Jacobian appends the derivative index as the last axis.
    """

    def __init__(self, entries, dimension: int):
        self.dimension = dimension
        self.symbols = state_symbols(dimension)
        grid = np.asarray(entries, dtype=object)
        self.shape = grid.shape
        self.exprs = [parse_expression(e, self.symbols) for e in grid.reshape(-1)]
        self._funcs = [lambdify(self.symbols, e, modules="numpy") for e in self.exprs]
        self._dfuncs = [
            [lambdify(self.symbols, sp.diff(e, s), modules="numpy") for s in self.symbols] for e in self.exprs
        ]

    def _columns(self, states) -> Tuple[np.ndarray, Tuple[np.ndarray, ...]]:
        x = np.atleast_2d(np.asarray(states, dtype=float))
        if x.shape[1] != self.dimension:
            raise errors.DimensionMismatchError(f"states have dimension {x.shape[1]}, expected {self.dimension}")
        return x, tuple(x[:, k] for k in range(self.dimension))

    def __call__(self, states) -> np.ndarray:
        x, cols = self._columns(states)
        n = x.shape[0]
        out = np.empty((n, len(self._funcs)))
        for k, func in enumerate(self._funcs):
            out[:, k] = _evaluate(func, cols, n)
        return out.reshape((n,) + self.shape)

    def jacobian(self, states) -> np.ndarray:
        x, cols = self._columns(states)
        n = x.shape[0]
        out = np.empty((n, len(self._dfuncs), self.dimension))
        for k, row in enumerate(self._dfuncs):
            for m, func in enumerate(row):
                out[:, k, m] = _evaluate(func, cols, n)
        return out.reshape((n,) + self.shape + (self.dimension,))

    @property
    def is_constant(self) -> bool:
        return all(not e.free_symbols for e in self.exprs)

    def sources(self) -> list:
        return np.asarray([str(e) for e in self.exprs], dtype=object).reshape(self.shape).tolist()


def matrix_entries(value, rows: int, cols: int):
    """Normalize a scalar shorthand or nested list into a rows x cols grid of entries."""
    if isinstance(value, (str, int, float, sp.Expr)):
        if rows != 1 or cols != 1:
            raise errors.DimensionMismatchError(f"scalar entry given for a {rows}x{cols} field")
        return [[value]]
    grid = np.asarray(value, dtype=object)
    if grid.ndim == 1 and cols == 1:
        grid = grid.reshape(rows, 1) if grid.size == rows else grid
    if grid.shape != (rows, cols):
        raise errors.DimensionMismatchError(f"field has shape {grid.shape}, expected {(rows, cols)}")
    return grid.tolist()


def vector_entries(value, size: int):
    """Normalize a scalar shorthand or list into a vector of entries."""
    if isinstance(value, (str, int, float, sp.Expr)):
        if size != 1:
            raise errors.DimensionMismatchError(f"scalar entry given for a vector of size {size}")
        return [value]
    grid = np.asarray(value, dtype=object).reshape(-1)
    if grid.size != size:
        raise errors.DimensionMismatchError(f"vector has {grid.size} entries, expected {size}")
    return grid.tolist()
