"""Closed-form scalar field expressions such as ``"eps*cos(x)"``.

The grammar is a whitelisted subset of Python expression syntax: numeric
literals, the coordinates, named constants, ``sin``, ``cos``, ``exp``,
``+ - * /`` and ``^`` (power). Parsing goes through :mod:`ast`; nothing is
ever handed to ``eval``.
"""

from __future__ import annotations

import ast
import math
import operator

import numpy as np

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


class ExpressionError(ValueError):
    pass


def parse_expression(text: str) -> ast.Expression:
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError(f"unsupported function in {text!r}")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"functions take exactly one argument in {text!r}")
        elif not isinstance(
            node,
            (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Name, ast.Constant, ast.Load)
            + tuple(_BINOPS)
            + tuple(_UNARY),
        ):
            raise ExpressionError(f"unsupported syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ExpressionError(f"only numeric literals are allowed in {text!r}")
    return tree


def evaluate(text: str, variables: dict, constants: dict | None = None) -> np.ndarray:
    """Evaluate ``text`` with ``variables`` (arrays) and scalar ``constants``.

    >>> evaluate("2*x^2", {"x": np.array([1.0, 2.0])})
    array([2., 8.])
    """
    names = {"pi": math.pi}
    names.update(constants or {})
    names.update(variables)
    tree = parse_expression(text)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in names:
                raise ExpressionError(f"unknown identifier {node.id!r} in {text!r}")
            return names[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ExpressionError(f"unsupported node in {text!r}")  # pragma: no cover

    shape = np.broadcast(*variables.values()).shape if variables else ()
    return np.broadcast_to(np.asarray(ev(tree), dtype=float), shape).copy()
