"""Integer/boolean expression trees used in guards and behaviour assignments.

Two concrete syntaxes are supported: the SMDL one (``and``/``or``/``not``,
``!=``) and an SML-flavoured one used inside emitted net documents
(``andalso``/``orelse``, ``<>``, ``~`` for negative literals).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

IntExpr = Union["IntLit", "VarRead", "BinOp"]
BoolExpr = Union["BoolLit", "Cmp", "And", "Or", "Not"]


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class VarRead:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - *
    left: IntExpr
    right: IntExpr


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Cmp:
    op: str  # one of = != < <= > >=
    left: IntExpr
    right: IntExpr


@dataclass(frozen=True)
class And:
    left: BoolExpr
    right: BoolExpr


@dataclass(frozen=True)
class Or:
    left: BoolExpr
    right: BoolExpr


@dataclass(frozen=True)
class Not:
    operand: BoolExpr


_CMP = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}

_ARITH = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
}


def eval_int(expr: IntExpr, env: Mapping[str, int]) -> int:
    if isinstance(expr, IntLit):
        return expr.value
    if isinstance(expr, VarRead):
        return env[expr.name]
    if isinstance(expr, BinOp):
        return _ARITH[expr.op](eval_int(expr.left, env), eval_int(expr.right, env))
    raise TypeError(f"not an integer expression: {expr!r}")


def eval_bool(expr: BoolExpr, env: Mapping[str, int]) -> bool:
    if isinstance(expr, BoolLit):
        return expr.value
    if isinstance(expr, Cmp):
        return _CMP[expr.op](eval_int(expr.left, env), eval_int(expr.right, env))
    if isinstance(expr, And):
        return eval_bool(expr.left, env) and eval_bool(expr.right, env)
    if isinstance(expr, Or):
        return eval_bool(expr.left, env) or eval_bool(expr.right, env)
    if isinstance(expr, Not):
        return not eval_bool(expr.operand, env)
    raise TypeError(f"not a boolean expression: {expr!r}")


def variables_of(expr) -> set[str]:
    """All variable names read anywhere in the expression."""
    if isinstance(expr, VarRead):
        return {expr.name}
    if isinstance(expr, (IntLit, BoolLit)):
        return set()
    if isinstance(expr, (BinOp, Cmp, And, Or)):
        return variables_of(expr.left) | variables_of(expr.right)
    if isinstance(expr, Not):
        return variables_of(expr.operand)
    raise TypeError(f"not an expression: {expr!r}")


def substitute(expr, mapping: Mapping[str, IntExpr]):
    """Replace variable reads by integer expressions (used to compose
    sequential assignments into one simultaneous update)."""
    if isinstance(expr, VarRead):
        return mapping.get(expr.name, expr)
    if isinstance(expr, (IntLit, BoolLit)):
        return expr
    if isinstance(expr, BinOp):
        return BinOp(expr.op, substitute(expr.left, mapping), substitute(expr.right, mapping))
    if isinstance(expr, Cmp):
        return Cmp(expr.op, substitute(expr.left, mapping), substitute(expr.right, mapping))
    if isinstance(expr, And):
        return And(substitute(expr.left, mapping), substitute(expr.right, mapping))
    if isinstance(expr, Or):
        return Or(substitute(expr.left, mapping), substitute(expr.right, mapping))
    if isinstance(expr, Not):
        return Not(substitute(expr.operand, mapping))
    raise TypeError(f"not an expression: {expr!r}")


def rename_variables(expr, mapping: Mapping[str, str]):
    """Rename variable reads (SMD variable names -> net binding names)."""
    return substitute(expr, {old: VarRead(new) for old, new in mapping.items()})


# ---------------------------------------------------------------------------
# Printing.  Dialects differ only in a handful of lexemes.

_DIALECTS = {
    "smdl": {"and": "and", "or": "or", "not": "not", "!=": "!=", "true": "true", "false": "false"},
    "sml": {"and": "andalso", "or": "orelse", "not": "not", "!=": "<>", "true": "true", "false": "false"},
}

# precedence levels, loosest first
_PREC_OR, _PREC_AND, _PREC_NOT, _PREC_CMP, _PREC_ADD, _PREC_MUL, _PREC_ATOM = range(7)


def _prec(expr) -> int:
    if isinstance(expr, Or):
        return _PREC_OR
    if isinstance(expr, And):
        return _PREC_AND
    if isinstance(expr, Not):
        return _PREC_NOT
    if isinstance(expr, Cmp):
        return _PREC_CMP
    if isinstance(expr, BinOp):
        return _PREC_ADD if expr.op in "+-" else _PREC_MUL
    return _PREC_ATOM


def to_text(expr, dialect: str = "smdl") -> str:
    lex = _DIALECTS[dialect]

    def emit(e, parent_prec: int) -> str:
        p = _prec(e)
        if isinstance(e, IntLit):
            if e.value < 0:
                s = f"~{-e.value}" if dialect == "sml" else f"-{-e.value}"
                return f"({s})" if parent_prec >= _PREC_MUL and dialect != "sml" else s
            s = str(e.value)
        elif isinstance(e, VarRead):
            s = e.name
        elif isinstance(e, BoolLit):
            s = lex["true"] if e.value else lex["false"]
        elif isinstance(e, BinOp):
            # left-associative: right child needs parens at equal precedence
            s = f"{emit(e.left, p)} {e.op} {emit(e.right, p + 1)}"
        elif isinstance(e, Cmp):
            op = lex["!="] if e.op == "!=" else e.op
            s = f"{emit(e.left, p)} {op} {emit(e.right, p)}"
        elif isinstance(e, And):
            s = f"{emit(e.left, p)} {lex['and']} {emit(e.right, p + 1)}"
        elif isinstance(e, Or):
            s = f"{emit(e.left, p)} {lex['or']} {emit(e.right, p + 1)}"
        elif isinstance(e, Not):
            s = f"{lex['not']} {emit(e.operand, p + 1)}"
        else:
            raise TypeError(f"not an expression: {e!r}")
        return f"({s})" if p < parent_prec else s

    return emit(expr, _PREC_OR)


# ---------------------------------------------------------------------------
# Parsing.  A small recursive-descent parser over a pre-tokenised stream;
# smdl.py and emit.py feed it their own token lists.


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, pos):
        super().__init__(message)
        self.pos = pos


class _TokenStream:
    """tokens: list of (kind, text, pos); kind in {'ident','int','op'}."""

    def __init__(self, tokens, dialect):
        self.tokens = tokens
        self.i = 0
        self.lex = _DIALECTS[dialect]

    def peek(self):
        if self.i < len(self.tokens):
            return self.tokens[self.i]
        return ("eof", "", self.tokens[-1][2] if self.tokens else None)

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def accept(self, text: str) -> bool:
        kind, t, _ = self.peek()
        if kind != "eof" and t == text:
            self.i += 1
            return True
        return False

    def fail(self, expected: str):
        kind, text, pos = self.peek()
        shown = text if kind != "eof" else "end of input"
        raise ExprSyntaxError(f"expected {expected}, found {shown!r}", pos)


def parse_bool(tokens, dialect: str = "smdl") -> BoolExpr:
    """Parse a boolean expression from a complete token list."""
    s = _TokenStream(tokens, dialect)
    e = _parse_or(s)
    if s.peek()[0] != "eof":
        s.fail("end of expression")
    return e


def parse_int(tokens, dialect: str = "smdl") -> IntExpr:
    s = _TokenStream(tokens, dialect)
    e = _parse_add(s)
    if s.peek()[0] != "eof":
        s.fail("end of expression")
    return e


def _parse_or(s):
    e = _parse_and(s)
    while s.accept(s.lex["or"]):
        e = Or(e, _parse_and(s))
    return e


def _parse_and(s):
    e = _parse_not(s)
    while s.accept(s.lex["and"]):
        e = And(e, _parse_not(s))
    return e


def _parse_not(s):
    if s.accept(s.lex["not"]):
        return Not(_parse_not(s))
    return _parse_cmp(s)


_CMP_OPS = ("<=", ">=", "!=", "<>", "<", ">", "=")


def _parse_cmp(s):
    kind, text, _ = s.peek()
    if text == s.lex["true"] and s.accept(text):
        return BoolLit(True)
    if text == s.lex["false"] and s.accept(text):
        return BoolLit(False)
    if text == "(":
        # could be a parenthesised boolean or the start of an int expression;
        # try boolean first, fall back on comparison of int expressions
        mark = s.i
        s.next()
        try:
            inner = _parse_or(s)
            if not s.accept(")"):
                raise ExprSyntaxError("expected ')'", s.peek()[2])
            return inner
        except ExprSyntaxError:
            s.i = mark
    left = _parse_add(s)
    kind, text, _ = s.peek()
    if text in _CMP_OPS:
        s.next()
        op = "!=" if text in ("!=", "<>") else text
        right = _parse_add(s)
        return Cmp(op, left, right)
    s.fail("comparison operator")


def _parse_add(s):
    e = _parse_mul(s)
    while True:
        if s.accept("+"):
            e = BinOp("+", e, _parse_mul(s))
        elif s.accept("-"):
            e = BinOp("-", e, _parse_mul(s))
        else:
            return e


def _parse_mul(s):
    e = _parse_atom(s)
    while s.accept("*"):
        e = BinOp("*", e, _parse_atom(s))
    return e


def _parse_atom(s):
    kind, text, pos = s.peek()
    if text == "(":
        s.next()
        e = _parse_add(s)
        if not s.accept(")"):
            s.fail("')'")
        return e
    if text in ("-", "~"):
        s.next()
        inner = _parse_atom(s)
        if isinstance(inner, IntLit):
            return IntLit(-inner.value)
        return BinOp("-", IntLit(0), inner)
    if kind == "int":
        s.next()
        return IntLit(int(text))
    if kind == "ident":
        s.next()
        return VarRead(text)
    s.fail("integer expression")
