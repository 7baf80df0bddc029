"""
Small closed expression grammar for initial and boundary data.

Accepted: numbers, the variables x, y, t, the constants pi, e and inf, the
operators + - * / ** with unary minus, the functions listed in FUNCTIONS and
pwl(var, x0, y0, x1, y1, ...) for piecewise-linear tables (constant
extrapolation outside the table).
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from relaysim.errors import SchemaError

VARIABLES = ("x", "y", "t")
CONSTANTS = {"pi": math.pi, "e": math.e, "inf": math.inf}
FUNCTIONS: Dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "min": np.minimum,
    "max": np.maximum,
}
_BINARY = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}

Evaluator = Callable[[Dict[str, np.ndarray]], np.ndarray]


def _pwl(var: np.ndarray, *table: np.ndarray) -> np.ndarray:
    if len(table) < 4 or len(table) % 2:
        raise SchemaError("pwl needs at least two (x, y) pairs")
    xs = np.array([float(np.asarray(v)) for v in table[0::2]])
    ys = np.array([float(np.asarray(v)) for v in table[1::2]])
    if np.any(np.diff(xs) <= 0):
        raise SchemaError("pwl abscissae must be strictly increasing")
    return np.interp(var, xs, ys)


def _compile(node: ast.AST, source: str) -> Evaluator:
    if isinstance(node, ast.Expression):
        return _compile(node.body, source)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        name = node.id
        if name in VARIABLES:
            return lambda env: env[name]
        if name in CONSTANTS:
            value = CONSTANTS[name]
            return lambda env: value
        raise SchemaError(f"unknown name '{name}' in expression '{source}'")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        operand = _compile(node.operand, source)
        if isinstance(node.op, ast.USub):
            return lambda env: np.negative(operand(env))
        return operand
    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
        op = _BINARY[type(node.op)]
        left = _compile(node.left, source)
        right = _compile(node.right, source)
        return lambda env: op(left(env), right(env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        name = node.func.id
        args = [_compile(a, source) for a in node.args]
        if name == "pwl":
            return lambda env: _pwl(*[a(env) for a in args])
        if name not in FUNCTIONS:
            raise SchemaError(f"unknown function '{name}' in expression '{source}'")
        func = FUNCTIONS[name]
        arity = 2 if name in ("min", "max") else 1
        if len(args) != arity:
            raise SchemaError(f"{name} takes {arity} argument(s) in expression '{source}'")
        return lambda env: func(*[a(env) for a in args])
    raise SchemaError(f"unsupported syntax in expression '{source}'")


@dataclass(frozen=True)
class Expression:
    """A parsed expression, callable on coordinate arrays"""

    source: str

    def __post_init__(self):
        object.__setattr__(self, "_evaluator", parse_expression(self.source))

    def __call__(self, x=0.0, y=0.0, t=0.0) -> np.ndarray:
        env = {"x": np.asarray(x, dtype=float), "y": np.asarray(y, dtype=float), "t": np.asarray(t, dtype=float)}
        shape = np.broadcast(env["x"], env["y"], env["t"]).shape
        with np.errstate(all="ignore"):
            out = np.asarray(self._evaluator(env), dtype=float)
        return np.broadcast_to(out, shape).copy() if out.shape != shape else out

    def is_constant(self) -> bool:
        try:
            return all(
                n.id not in VARIABLES
                for n in ast.walk(ast.parse(self.source, mode="eval"))
                if isinstance(n, ast.Name)
            )
        except SyntaxError:
            return False


def parse_expression(source: str) -> Evaluator:
    text = str(source).strip()
    if not text:
        raise SchemaError("empty expression")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise SchemaError(f"cannot parse expression '{text}': {exc.msg}") from exc
    return _compile(tree, text)


def as_expression(value) -> Expression:
    """Accept numbers or expression strings from config values"""
    if isinstance(value, Expression):
        return value
    if isinstance(value, bool):
        raise SchemaError(f"expected a number or expression, got {value!r}")
    if isinstance(value, (int, float)):
        return Expression(repr(float(value)))
    if isinstance(value, str):
        return Expression(value)
    raise SchemaError(f"expected a number or expression, got {value!r}")
