# Copyright (C) 2023 - 2025 ANSYS, Inc. and/or its affiliates.
# SPDX-License-Identifier: MIT
#
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.

"""Coefficient expression language.

Expressions are parsed with a LALR grammar into an immutable tree of :class:`Constant`,
:class:`Variable`, :class:`Unary` and :class:`Binary` nodes. Evaluation is vectorized over
numpy arrays and never returns NaN silently.
"""

from dataclasses import dataclass
import re
from typing import Callable, Dict, FrozenSet, Optional, Union

from lark import Lark, Token, Transformer, v_args
from lark.exceptions import UnexpectedInput, VisitError
import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._exceptions import ArityError, EvaluationError, ExpressionSyntaxError, UnknownIdentifier

GRAMMAR = r"""
    ?start: sum

    ?sum: product
        | sum "+" product      -> add
        | sum "-" product      -> sub

    ?product: unary
        | product "*" unary    -> mul
        | product "/" unary    -> div

    ?unary: power
        | "-" unary            -> neg
        | "+" unary

    ?power: atom
        | atom "^" unary       -> pow

    ?atom: NUMBER              -> number
        | NAME                 -> var
        | NAME "(" ")"         -> call
        | NAME "(" sum ("," sum)* ")" -> call
        | "(" sum ")"

    NAME: /[A-Za-z_][A-Za-z0-9_]*/

    %import common.NUMBER
    %import common.WS
    %ignore WS
"""

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs")
BINARY_OPERATORS = ("+", "-", "*", "/", "^")

_SPACE_VARIABLE = re.compile(r"x([1-9][0-9]*)$")

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_UNARY_PRECEDENCE = 3
_ATOM_PRECEDENCE = 5

Array = NDArray[np.float64]
_Evaluator = Callable[[Array, Array], Union[Array, float]]


@dataclass(frozen=True)
class Constant:
    """Numeric literal."""

    value: float


@dataclass(frozen=True)
class Variable:
    """Time ``t`` or spatial coordinate ``x1``, ``x2``, ..."""

    name: str

    @property
    def space_index(self) -> Optional[int]:
        """Zero-based coordinate index, or ``None`` for the time variable."""
        match = _SPACE_VARIABLE.match(self.name)
        return int(match.group(1)) - 1 if match else None


@dataclass(frozen=True)
class Unary:
    """Negation or one of the built-in functions."""

    op: str
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    """Arithmetic operation between two sub-expressions."""

    op: str
    left: "Node"
    right: "Node"


Node = Union[Constant, Variable, Unary, Binary]


@v_args(inline=True)
class _AstBuilder(Transformer):  # type: ignore[misc]
    def __init__(self, source: str, dimension: Optional[int]) -> None:
        super().__init__()
        self._source = source
        self._dimension = dimension

    def number(self, token: Token) -> Constant:
        return Constant(float(token))

    def var(self, token: Token) -> Variable:
        name = str(token)
        if name == "t":
            return Variable(name)
        match = _SPACE_VARIABLE.match(name)
        if match is None:
            raise UnknownIdentifier(
                f"Unknown identifier '{name}' at byte offset {self._offset(token)}."
            )
        index = int(match.group(1))
        if self._dimension is not None and index > self._dimension:
            raise UnknownIdentifier(
                f"Variable '{name}' exceeds the model dimension {self._dimension}."
            )
        return Variable(name)

    def call(self, token: Token, *args: Node) -> Unary:
        name = str(token)
        if name not in FUNCTIONS:
            raise UnknownIdentifier(
                f"Unknown function '{name}' at byte offset {self._offset(token)}."
            )
        if len(args) != 1:
            raise ArityError(f"Function '{name}' takes exactly 1 argument, got {len(args)}.")
        return Unary(name, args[0])

    def neg(self, operand: Node) -> Unary:
        return Unary("neg", operand)

    def add(self, left: Node, right: Node) -> Binary:
        return Binary("+", left, right)

    def sub(self, left: Node, right: Node) -> Binary:
        return Binary("-", left, right)

    def mul(self, left: Node, right: Node) -> Binary:
        return Binary("*", left, right)

    def div(self, left: Node, right: Node) -> Binary:
        return Binary("/", left, right)

    def pow(self, left: Node, right: Node) -> Binary:
        return Binary("^", left, right)

    def _offset(self, token: Token) -> int:
        return _byte_offset(self._source, token.start_pos)


_parser = Lark(GRAMMAR, parser="lalr", maybe_placeholders=False)


def _byte_offset(source: str, position: Optional[int]) -> int:
    if position is None or position < 0:
        position = len(source)
    return len(source[:position].encode("utf-8"))


def parse_expr(source: str, dimension: Optional[int] = None) -> "CoefficientExpr":
    """
    Parse a coefficient expression.

    The grammar has the usual precedence, from tightest to loosest: ``^`` (right associative),
    unary ``-``/``+``, ``*`` and ``/``, ``+`` and ``-``. Identifiers are ``t`` and ``x1`` ...
    ``xd``; functions are ``sin``, ``cos``, ``exp``, ``sqrt`` and ``abs``.

    Parameters
    ----------
    source : str
        Expression text.
    dimension : int, optional
        Spatial dimension. If given, coordinates beyond ``x<dimension>`` are rejected.

    Returns
    -------
    CoefficientExpr
        Parsed expression.

    Raises
    ------
    ExpressionSyntaxError
        If the text is empty or is not a valid expression. The error carries the UTF-8 byte
        offset of the failure.
    UnknownIdentifier
        If the text refers to an unknown variable or function.
    ArityError
        If a function is called with a number of arguments other than one.

    Examples
    --------
    >>> parse_expr("x1")
    <CoefficientExpr: x1>
    >>> parse_expr("-t^2").root
    Unary(op='neg', operand=Binary(op='^', left=Variable(name='t'), right=Constant(value=2.0)))
    """
    if not source or not source.strip():
        raise ExpressionSyntaxError("Expression is empty", 0)
    try:
        tree = _parser.parse(source)
    except UnexpectedInput as e:
        offset = _byte_offset(source, e.pos_in_stream)
        raise ExpressionSyntaxError("Invalid expression syntax", offset) from e
    try:
        root = _AstBuilder(source, dimension).transform(tree)
    except VisitError as e:
        raise e.orig_exc from e
    return CoefficientExpr(root)


def _format(node: Node) -> str:
    text, _ = _format_with_precedence(node)
    return text


def _wrap(node: Node, minimum: int) -> str:
    text, precedence = _format_with_precedence(node)
    return text if precedence >= minimum else f"({text})"


def _format_with_precedence(node: Node) -> tuple[str, int]:
    if isinstance(node, Constant):
        text = repr(float(node.value))
        if node.value < 0:
            return f"({text})", _ATOM_PRECEDENCE
        return text, _ATOM_PRECEDENCE
    if isinstance(node, Variable):
        return node.name, _ATOM_PRECEDENCE
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"-{_wrap(node.operand, _UNARY_PRECEDENCE)}", _UNARY_PRECEDENCE
        return f"{node.op}({_format(node.operand)})", _ATOM_PRECEDENCE
    precedence = _PRECEDENCE[node.op]
    if node.op == "^":
        base = _wrap(node.left, _ATOM_PRECEDENCE)
        exponent = _wrap(node.right, _UNARY_PRECEDENCE)
        return f"{base}^{exponent}", precedence
    left = _wrap(node.left, precedence)
    right = _wrap(node.right, precedence + 1)
    return f"{left} {node.op} {right}", precedence


def _checked_divide(numerator: Array, denominator: Array) -> Array:
    if np.any(np.asarray(denominator) == 0.0):
        raise EvaluationError("Division by zero while evaluating expression.")
    return np.divide(numerator, denominator)


def _checked_power(base: Array, exponent: Array) -> Array:
    base_arr, exponent_arr = np.broadcast_arrays(np.asarray(base), np.asarray(exponent))
    undefined = (base_arr < 0.0) & (exponent_arr != np.round(exponent_arr))
    if np.any(undefined):
        raise EvaluationError(
            "Negative base raised to a non-integer exponent while evaluating expression."
        )
    if np.any((base_arr == 0.0) & (exponent_arr < 0.0)):
        raise EvaluationError(
            "Division by zero while evaluating expression (0 to a negative power)."
        )
    return np.power(base_arr, exponent_arr)


def _checked_sqrt(value: Array) -> Array:
    if np.any(np.asarray(value) < 0.0):
        raise EvaluationError("Square root of a negative number while evaluating expression.")
    return np.sqrt(value)


_UNARY_FUNCTIONS: Dict[str, Callable[[Array], Array]] = {
    "neg": np.negative,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": _checked_sqrt,
    "abs": np.abs,
}

_BINARY_FUNCTIONS: Dict[str, Callable[[Array, Array], Array]] = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": _checked_divide,
    "^": _checked_power,
}


def _compile(node: Node) -> _Evaluator:
    if isinstance(node, Constant):
        value = float(node.value)
        return lambda t, x: value
    if isinstance(node, Variable):
        index = node.space_index
        if index is None:
            return lambda t, x: t
        return lambda t, x: x[..., index]
    if isinstance(node, Unary):
        function = _UNARY_FUNCTIONS[node.op]
        operand = _compile(node.operand)
        return lambda t, x: function(operand(t, x))
    binary = _BINARY_FUNCTIONS[node.op]
    left = _compile(node.left)
    right = _compile(node.right)
    return lambda t, x: binary(left(t, x), right(t, x))


def _collect_variables(node: Node) -> FrozenSet[str]:
    if isinstance(node, Variable):
        return frozenset({node.name})
    if isinstance(node, Unary):
        return _collect_variables(node.operand)
    if isinstance(node, Binary):
        return _collect_variables(node.left) | _collect_variables(node.right)
    return frozenset()


class CoefficientExpr:
    """
    Parsed coefficient expression.

    Read-only. Build instances with :func:`parse_expr`.

    Parameters
    ----------
    root : Node
        Root of the expression tree.
    """

    def __init__(self, root: Node):
        if isinstance(root, Constant) and not np.isfinite(root.value):
            raise EvaluationError(f"Constant {root.value!r} is not finite.")
        self._root = root
        self._variables = _collect_variables(root)
        self._evaluator = _compile(root)

    @property
    def root(self) -> Node:
        """Root node of the expression tree."""
        return self._root

    @property
    def variables(self) -> FrozenSet[str]:
        """Names of the variables the expression depends on."""
        return self._variables

    @property
    def max_space_index(self) -> int:
        """Highest spatial coordinate used, counting from 1. Zero if none is used."""
        indices = [Variable(name).space_index for name in self._variables]
        return max((i + 1 for i in indices if i is not None), default=0)

    @property
    def is_constant(self) -> bool:
        """Whether the expression depends on neither time nor space."""
        return not self._variables

    def __call__(self, t: ArrayLike, x: ArrayLike) -> Array:
        """
        Evaluate the expression.

        Parameters
        ----------
        t : float or numpy.ndarray
            Time, broadcastable against the leading axes of ``x``.
        x : numpy.ndarray
            Points with the spatial coordinates along the last axis.

        Returns
        -------
        numpy.ndarray
            Values with the broadcast shape of ``t`` and ``x[..., 0]``.

        Raises
        ------
        EvaluationError
            On division by zero, an undefined power or square root, or a non-finite result.
        """
        t_arr = np.asarray(t, dtype=float)
        x_arr = np.asarray(x, dtype=float)
        if x_arr.ndim == 0:
            x_arr = x_arr.reshape(1)
        shape = np.broadcast_shapes(t_arr.shape, x_arr.shape[:-1])
        with np.errstate(over="ignore", invalid="ignore"):
            value = self._evaluator(t_arr, x_arr)
        result = np.array(np.broadcast_to(value, shape), dtype=float)
        if not np.all(np.isfinite(result)):
            raise EvaluationError(f"Expression '{self}' evaluated to a non-finite value.")
        return result

    def __str__(self) -> str:
        return _format(self._root)

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__}: {self}>"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoefficientExpr):
            return NotImplemented
        return self._root == other._root

    def __hash__(self) -> int:
        return hash(self._root)
