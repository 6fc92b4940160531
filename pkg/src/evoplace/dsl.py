"""Sandboxed strategy language: parser, type checker, interpreter, printer.

A strategy program is a sequence of single-assignment statements over the
placement feature environment.  There are no loops, no I/O, and no host
callouts; the only iteration lives inside bounded builtins (kmeans1d).  Each
AST node evaluates exactly once, so the static node count bounds the
per-cell evaluation work.

Grammar (EBNF, also in docs/dsl.md)::

    program   = { statement , terminator } ;
    statement = identifier , "=" , expr ;
    expr      = or_expr ;
    or_expr   = and_expr , { "|" , and_expr } ;
    and_expr  = cmp_expr , { "&" , cmp_expr } ;
    cmp_expr  = sum_expr , [ ( "<" | ">" | "<=" | ">=" | "==" ) , sum_expr ] ;
    sum_expr  = term , { ( "+" | "-" ) , term } ;
    term      = factor , { ( "*" | "/" ) , factor } ;
    factor    = "-" , factor | "~" , factor | atom ;
    atom      = number | identifier | identifier , "(" , [ args ] , ")"
              | "(" , expr , ")" ;

Builtins: mean, std, min, max, quantile, clamp, abs, log, exp, sqrt,
rand_n, kmeans1d, select.  Comments run from '#' to end of line.
Evaluation order is left to right with no fused operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .seeding import rng_for, text_hash

MAX_AST_NODES = 10 ** 6
MAX_DEPTH = 400
KMEANS_MAX_K = 16
KMEANS_ITERS = 50

KIND_INIT = "init"
KIND_PRECOND = "precond"
KIND_OPTPOLICY = "optpolicy"
KINDS = (KIND_INIT, KIND_PRECOND, KIND_OPTPOLICY)

REQUIRED_OUTPUTS = {
    KIND_INIT: ("x_init", "y_init"),
    KIND_PRECOND: ("diag_scale",),
    KIND_OPTPOLICY: ("step_scale", "noise_level", "momentum_scale"),
}
SCALAR_ONLY_OUTPUTS = {KIND_OPTPOLICY}


class DslError(Exception):
    """Base class for strategy-language failures."""


class DslParseError(DslError):
    def __init__(self, line: int, col: int, message: str):
        self.line, self.col = line, col
        super().__init__(f"{line}:{col}: {message}")


class DslTypeError(DslError):
    def __init__(self, expr: str, message: str):
        self.expr = expr
        super().__init__(f"{message} in {expr!r}")


class MissingOutputError(DslError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"program never assigns required output {name!r}")


class BudgetError(DslError):
    pass


class StrategyRuntimeError(DslError):
    pass


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Ident:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "~"
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Union[Num, Ident, Unary, BinOp, Call]


@dataclass(frozen=True)
class Program:
    statements: tuple[tuple[str, Expr], ...]


def node_count(node) -> int:
    if isinstance(node, Program):
        return sum(1 + node_count(e) for _, e in node.statements)
    if isinstance(node, (Num, Ident)):
        return 1
    if isinstance(node, Unary):
        return 1 + node_count(node.operand)
    if isinstance(node, BinOp):
        return 1 + node_count(node.left) + node_count(node.right)
    if isinstance(node, Call):
        return 1 + sum(node_count(a) for a in node.args)
    raise TypeError(node)


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_TWO_CHAR = ("<=", ">=", "==")
_ONE_CHAR = "+-*/()<>,=&|~"


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | op | newline | eof
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        if ch in (" ", "\t", "\r"):
            i += 1
            col += 1
            continue
        if ch in ("\n", ";"):
            tokens.append(Token("newline", ch, line, col))
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1
            continue
        if source[i:i + 2] in _TWO_CHAR:
            tokens.append(Token("op", source[i:i + 2], line, col))
            i += 2
            col += 2
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and (source[j].isdigit() or source[j] == "."):
                j += 1
            if j < n and source[j] in ("e", "E"):
                k = j + 1
                if k < n and source[k] in ("+", "-"):
                    k += 1
                if k < n and source[k].isdigit():
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            text = source[i:j]
            try:
                float(text)
            except ValueError:
                raise DslParseError(line, col, f"bad number {text!r}") from None
            tokens.append(Token("num", text, line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(Token("ident", source[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch in _ONE_CHAR:
            tokens.append(Token("op", ch, line, col))
            i += 1
            col += 1
            continue
        raise DslParseError(line, col, f"unexpected character {ch!r}")
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self.depth = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, text: str) -> Token:
        tok = self.peek()
        if tok.kind != "op" or tok.text != text:
            raise DslParseError(tok.line, tok.col, f"expected {text!r}, got {tok.text!r}")
        return self.advance()

    def parse_program(self) -> Program:
        statements: list[tuple[str, Expr]] = []
        while True:
            while self.peek().kind == "newline":
                self.advance()
            if self.peek().kind == "eof":
                break
            tok = self.peek()
            if tok.kind != "ident":
                raise DslParseError(tok.line, tok.col,
                                    f"expected assignment, got {tok.text!r}")
            name = self.advance().text
            self.expect_op("=")
            expr = self.parse_expr()
            statements.append((name, expr))
            nxt = self.peek()
            if nxt.kind not in ("newline", "eof"):
                raise DslParseError(nxt.line, nxt.col,
                                    f"expected end of statement, got {nxt.text!r}")
        prog = Program(tuple(statements))
        if node_count(prog) > MAX_AST_NODES:
            raise BudgetError(f"program exceeds {MAX_AST_NODES} AST nodes")
        return prog

    def _enter(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise BudgetError(f"expression nesting exceeds {MAX_DEPTH}")

    def parse_expr(self) -> Expr:
        self._enter()
        try:
            return self.parse_or()
        finally:
            self.depth -= 1

    def parse_or(self) -> Expr:
        node = self.parse_and()
        while self.peek().kind == "op" and self.peek().text == "|":
            self.advance()
            node = BinOp("|", node, self.parse_and())
        return node

    def parse_and(self) -> Expr:
        node = self.parse_cmp()
        while self.peek().kind == "op" and self.peek().text == "&":
            self.advance()
            node = BinOp("&", node, self.parse_cmp())
        return node

    def parse_cmp(self) -> Expr:
        node = self.parse_sum()
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("<", ">", "<=", ">=", "=="):
            self.advance()
            node = BinOp(tok.text, node, self.parse_sum())
        return node

    def parse_sum(self) -> Expr:
        node = self.parse_term()
        while self.peek().kind == "op" and self.peek().text in ("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.parse_term())
        return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while self.peek().kind == "op" and self.peek().text in ("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.parse_factor())
        return node

    def parse_factor(self) -> Expr:
        self._enter()
        try:
            tok = self.peek()
            if tok.kind == "op" and tok.text == "-":
                self.advance()
                operand = self.parse_factor()
                # Fold literal negation so print/parse round-trips exactly.
                if isinstance(operand, Num):
                    return Num(-operand.value)
                return Unary("-", operand)
            if tok.kind == "op" and tok.text == "~":
                self.advance()
                return Unary("~", self.parse_factor())
            return self.parse_atom()
        finally:
            self.depth -= 1

    def parse_atom(self) -> Expr:
        tok = self.advance()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "ident":
            if self.peek().kind == "op" and self.peek().text == "(":
                self.advance()
                args: list[Expr] = []
                if not (self.peek().kind == "op" and self.peek().text == ")"):
                    args.append(self.parse_expr())
                    while self.peek().kind == "op" and self.peek().text == ",":
                        self.advance()
                        args.append(self.parse_expr())
                self.expect_op(")")
                return Call(tok.text, tuple(args))
            return Ident(tok.text)
        if tok.kind == "op" and tok.text == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise DslParseError(tok.line, tok.col, f"unexpected {tok.text or tok.kind!r}")


def parse_source(source: str) -> Program:
    return _Parser(tokenize(source)).parse_program()


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VType:
    shape: str       # "scalar" or "vector"
    mask: bool = False

    def __str__(self):
        return ("mask-" if self.mask else "") + self.shape


SCALAR = VType("scalar")
VECTOR = VType("vector")
MASK_SCALAR = VType("scalar", True)
MASK_VECTOR = VType("vector", True)


def _join_shape(a: VType, b: VType) -> str:
    return "vector" if "vector" in (a.shape, b.shape) else "scalar"


# name -> (min arity, max arity); richer checks live in _check_call
BUILTIN_ARITY = {
    "mean": (1, 1), "std": (1, 1), "min": (1, 1), "max": (1, 1),
    "quantile": (2, 2), "clamp": (3, 3),
    "abs": (1, 1), "log": (1, 1), "exp": (1, 1), "sqrt": (1, 1),
    "rand_n": (0, 0), "kmeans1d": (2, 2), "select": (3, 3),
}


class StrategyEnv:
    """Typed identifier environment for one strategy kind."""

    def __init__(self, names: dict[str, str]):
        self.types = {k: (VECTOR if v == "vector" else SCALAR) for k, v in names.items()}

    def lookup(self, name: str) -> Optional[VType]:
        return self.types.get(name)


def _check(node: Expr, env: dict[str, VType]) -> VType:
    if isinstance(node, Num):
        return SCALAR
    if isinstance(node, Ident):
        t = env.get(node.name)
        if t is None:
            raise DslTypeError(node.name, "unknown identifier")
        return t
    if isinstance(node, Unary):
        t = _check(node.operand, env)
        if node.op == "-":
            if t.mask:
                raise DslTypeError(print_expr(node), "cannot negate a mask")
            return t
        if not t.mask:
            raise DslTypeError(print_expr(node), "~ expects a mask")
        return t
    if isinstance(node, BinOp):
        lt = _check(node.left, env)
        rt = _check(node.right, env)
        shape = _join_shape(lt, rt)
        if node.op in ("+", "-", "*", "/"):
            if lt.mask or rt.mask:
                raise DslTypeError(print_expr(node), "arithmetic on masks")
            return VType(shape)
        if node.op in ("<", ">", "<=", ">=", "=="):
            if lt.mask or rt.mask:
                raise DslTypeError(print_expr(node), "comparison on masks")
            return VType(shape, mask=True)
        if node.op in ("&", "|"):
            if not (lt.mask and rt.mask):
                raise DslTypeError(print_expr(node), f"{node.op} expects masks")
            return VType(shape, mask=True)
        raise DslTypeError(print_expr(node), f"unknown operator {node.op}")
    if isinstance(node, Call):
        return _check_call(node, env)
    raise TypeError(node)


def _check_call(node: Call, env: dict[str, VType]) -> VType:
    name = node.func
    if name not in BUILTIN_ARITY:
        raise DslTypeError(print_expr(node), f"unknown builtin {name!r}")
    lo, hi = BUILTIN_ARITY[name]
    if not (lo <= len(node.args) <= hi):
        raise DslTypeError(print_expr(node), f"{name} expects {lo}..{hi} args")
    arg_types = [_check(a, env) for a in node.args]
    if name in ("mean", "std", "min", "max"):
        if arg_types[0].mask:
            raise DslTypeError(print_expr(node), f"{name} expects numbers")
        return SCALAR
    if name == "quantile":
        if arg_types[0].mask or arg_types[1] != SCALAR:
            raise DslTypeError(print_expr(node), "quantile(values, q) with scalar q")
        return SCALAR
    if name == "clamp":
        if any(t.mask for t in arg_types):
            raise DslTypeError(print_expr(node), "clamp expects numbers")
        shape = arg_types[0].shape
        for t in arg_types[1:]:
            shape = "vector" if "vector" in (shape, t.shape) else "scalar"
        return VType(shape)
    if name in ("abs", "log", "exp", "sqrt"):
        if arg_types[0].mask:
            raise DslTypeError(print_expr(node), f"{name} expects numbers")
        return arg_types[0]
    if name == "rand_n":
        return VECTOR
    if name == "kmeans1d":
        if arg_types[0] != VECTOR:
            raise DslTypeError(print_expr(node), "kmeans1d expects a vector")
        karg = node.args[1]
        if not isinstance(karg, Num) or not float(karg.value).is_integer() \
                or not (1 <= int(karg.value) <= KMEANS_MAX_K):
            raise DslTypeError(print_expr(node),
                               f"kmeans1d k must be an integer literal in 1..{KMEANS_MAX_K}")
        return VECTOR
    if name == "select":
        mt, at, bt = arg_types
        if not mt.mask:
            raise DslTypeError(print_expr(node), "select(mask, a, b) needs a mask first")
        if at.mask or bt.mask:
            raise DslTypeError(print_expr(node), "select branches must be numbers")
        shape = "vector" if "vector" in (mt.shape, at.shape, bt.shape) else "scalar"
        return VType(shape)
    raise AssertionError(name)


# ---------------------------------------------------------------------------
# Strategy program
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StrategyProgram:
    kind: str
    source: str
    ast: Program
    id: str
    output_types: dict[str, VType] = field(default_factory=dict, compare=False)


def base_env_types(kind: str, feature_names: dict[str, str]) -> dict[str, VType]:
    env = StrategyEnv(feature_names).types
    if kind == KIND_PRECOND:
        for nm in ("lambda_density", "wl_grad_norm", "density_grad_norm", "iteration"):
            env[nm] = SCALAR
    elif kind == KIND_OPTPOLICY:
        for nm in ("iteration", "overflow", "wl_trend", "overflow_delta", "default_noise"):
            env[nm] = SCALAR
    return env


def default_feature_names() -> dict[str, str]:
    # Kept in sync with features.extract_features via a test.
    vectors = ["area", "width", "height", "degree", "pin_count", "sum_net_weight",
               "is_macro", "is_fixed", "fixed_neighbor_x", "fixed_neighbor_y"]
    scalars = ["xmin", "xmax", "ymin", "ymax", "center_x", "center_y",
               "region_w", "region_h", "min_region_dim", "span", "total_area",
               "movable_area", "utilization", "num_cells", "num_movable",
               "num_nets", "median_area"]
    out = {k: "vector" for k in vectors}
    out.update({k: "scalar" for k in scalars})
    return out


def parse_strategy(source: str, kind: str,
                   feature_names: Optional[dict[str, str]] = None) -> StrategyProgram:
    """Parse, type-check, and budget-check one strategy program."""
    if kind not in KINDS:
        raise ValueError(f"unknown strategy kind {kind!r}")
    ast = parse_source(source)
    env = base_env_types(kind, feature_names or default_feature_names())
    readonly = set(env)
    out_types: dict[str, VType] = {}
    for name, expr in ast.statements:
        if name in readonly:
            raise DslTypeError(name, "cannot rebind a feature identifier")
        if name in out_types:
            raise DslTypeError(name, "identifier assigned twice")
        t = _check(expr, env)
        if t.mask and name in REQUIRED_OUTPUTS[kind]:
            raise DslTypeError(name, "output cannot be a mask")
        env[name] = t
        out_types[name] = t
    for required in REQUIRED_OUTPUTS[kind]:
        if required not in out_types:
            raise MissingOutputError(required)
        if kind in SCALAR_ONLY_OUTPUTS and out_types[required].shape != "scalar":
            raise DslTypeError(required, "policy outputs must be scalars")
    return StrategyProgram(kind=kind, source=source, ast=ast,
                           id=text_hash(kind + "\n" + source),
                           output_types=out_types)


# ---------------------------------------------------------------------------
# Interpreter
# ---------------------------------------------------------------------------

def _kmeans1d(values: np.ndarray, k: int) -> np.ndarray:
    """Deterministic 1-D Lloyd's algorithm; returns the centroid assigned to
    each element.  Quantile-seeded, KMEANS_ITERS iterations."""
    v = np.asarray(values, dtype=np.float64)
    k = min(k, len(np.unique(v))) or 1
    centers = np.quantile(v, (np.arange(k) + 0.5) / k)
    centers = np.unique(centers)
    for _ in range(KMEANS_ITERS):
        assign = np.argmin(np.abs(v[:, None] - centers[None, :]), axis=1)
        new_centers = centers.copy()
        for j in range(len(centers)):
            sel = assign == j
            if sel.any():
                new_centers[j] = v[sel].mean()
        if np.allclose(new_centers, centers, rtol=0, atol=0):
            break
        centers = new_centers
    assign = np.argmin(np.abs(v[:, None] - centers[None, :]), axis=1)
    return centers[assign]


class _Interp:
    def __init__(self, n_cells: int, env_values: dict, seed: int):
        self.n = n_cells
        self.values = dict(env_values)
        self.rng = rng_for(seed, "dsl-randn")

    def as_vector(self, value):
        if isinstance(value, np.ndarray) and value.ndim == 1:
            return value
        return np.full(self.n, float(value))

    def run(self, program: Program) -> dict:
        for name, expr in program.statements:
            self.values[name] = self.eval(expr)
        return self.values

    def eval(self, node: Expr):
        if isinstance(node, Num):
            return float(node.value)
        if isinstance(node, Ident):
            return self.values[node.name]
        if isinstance(node, Unary):
            operand = self.eval(node.operand)
            if node.op == "-":
                return -operand
            return ~np.asarray(operand, dtype=bool) if isinstance(operand, np.ndarray) \
                else (not operand)
        if isinstance(node, BinOp):
            left = self.eval(node.left)
            right = self.eval(node.right)
            op = node.op
            with np.errstate(all="ignore"):
                if op == "+":
                    return left + right
                if op == "-":
                    return left - right
                if op == "*":
                    return left * right
                if op == "/":
                    return left / right
                if op == "<":
                    return left < right
                if op == ">":
                    return left > right
                if op == "<=":
                    return left <= right
                if op == ">=":
                    return left >= right
                if op == "==":
                    return left == right
                if op == "&":
                    return np.logical_and(left, right) if _any_array(left, right) \
                        else (left and right)
                if op == "|":
                    return np.logical_or(left, right) if _any_array(left, right) \
                        else (left or right)
            raise AssertionError(op)
        if isinstance(node, Call):
            return self.call(node)
        raise TypeError(node)

    def call(self, node: Call):
        name = node.func
        args = [self.eval(a) for a in node.args]
        with np.errstate(all="ignore"):
            if name == "mean":
                return float(np.mean(args[0]))
            if name == "std":
                return float(np.std(args[0]))
            if name == "min":
                return float(np.min(args[0]))
            if name == "max":
                return float(np.max(args[0]))
            if name == "quantile":
                q = float(args[1])
                if not (0.0 <= q <= 1.0):
                    raise StrategyRuntimeError(f"quantile q={q} outside [0, 1]")
                return float(np.quantile(args[0], q))
            if name == "clamp":
                return np.clip(args[0], args[1], args[2]) \
                    if isinstance(args[0], np.ndarray) \
                    else float(np.clip(args[0], args[1], args[2]))
            if name == "abs":
                return np.abs(args[0])
            if name == "log":
                return np.log(args[0])
            if name == "exp":
                return np.exp(args[0])
            if name == "sqrt":
                return np.sqrt(args[0])
            if name == "rand_n":
                return self.rng.standard_normal(self.n)
            if name == "kmeans1d":
                return _kmeans1d(self.as_vector(args[0]), int(args[1]))
            if name == "select":
                return np.where(args[0], args[1], args[2]) \
                    if _any_array(*args) else (args[1] if args[0] else args[2])
        raise AssertionError(name)


def _any_array(*values) -> bool:
    return any(isinstance(v, np.ndarray) for v in values)


def run_program(program: StrategyProgram, n_cells: int, env_values: dict,
                seed: int) -> dict:
    """Interpret a validated program; returns required outputs as float64
    vectors (scalars broadcast).  Non-finite outputs raise
    StrategyRuntimeError."""
    interp = _Interp(n_cells, env_values, seed)
    try:
        values = interp.run(program.ast)
    except StrategyRuntimeError:
        raise
    except (FloatingPointError, ValueError, ZeroDivisionError, OverflowError) as exc:
        raise StrategyRuntimeError(f"builtin failure: {exc}") from exc
    outputs = {}
    for name in REQUIRED_OUTPUTS[program.kind]:
        val = values[name]
        if program.output_types[name].shape == "scalar":
            out = float(val)
            if not math.isfinite(out):
                raise StrategyRuntimeError(f"output {name} is not finite")
            outputs[name] = out
        else:
            vec = interp.as_vector(val).astype(np.float64, copy=True)
            if not np.isfinite(vec).all():
                raise StrategyRuntimeError(f"output {name} has non-finite entries")
            outputs[name] = vec
    return outputs


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

_PREC = {"|": 1, "&": 2, "<": 3, ">": 3, "<=": 3, ">=": 3, "==": 3,
         "+": 4, "-": 4, "*": 5, "/": 5}


def _fmt_num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def print_expr(node: Expr, parent_prec: int = 0) -> str:
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Ident):
        return node.name
    if isinstance(node, Unary):
        inner = print_expr(node.operand, 6)
        return f"{node.op}{inner}"
    if isinstance(node, BinOp):
        prec = _PREC[node.op]
        left = print_expr(node.left, prec)
        right = print_expr(node.right, prec + 1)
        text = f"{left} {node.op} {right}"
        return f"({text})" if prec < parent_prec else text
    if isinstance(node, Call):
        return f"{node.func}({', '.join(print_expr(a) for a in node.args)})"
    raise TypeError(node)


def print_program(program: Program) -> str:
    return "\n".join(f"{name} = {print_expr(expr)}" for name, expr in program.statements)
