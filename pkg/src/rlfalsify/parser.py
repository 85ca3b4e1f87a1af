"""Recursive-descent parser for the textual formula syntax.

The grammar is documented in ``docs/grammar.ebnf``.  Precedence, loosest
first: ``->`` (right-assoc), ``|``, ``&``, ``U``/``S`` (non-assoc), prefix
operators (``!``, ``G``, ``F``, ``H``, ``O``, ``X``, ``P``).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .formula import (
    BOOL, INF, REAL, Always, And, Comparison, Eventually, FormulaError,
    Historically, Implies, Interval, IntervalError, LifeLongProperty, Next,
    Not, Once, Or, Prev, Prop, Schema, Signal, Since, Until, UNBOUNDED,
)


class FormulaSyntaxError(FormulaError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{msg} at line {line}, column {col}")
        self.line = line
        self.col = col


class UnknownIdentifier(FormulaError):
    pass


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|=>|<=|>=|&&|\|\||[<>!~&|()\[\],=-])
    """,
    re.VERBOSE,
)

_UNARY_TEMPORAL = {"G": Always, "F": Eventually, "H": Historically, "O": Once}
_BINARY_TEMPORAL = {"U": Until, "S": Since}
KEYWORDS = frozenset(["G", "F", "H", "O", "X", "P", "U", "S", "inf"])
_FLIP = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str, line0: int = 1) -> list[_Tok]:
    toks = []
    pos, line, col = 0, line0, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind, s = m.lastgroup, m.group()
        if kind not in ("ws", "comment"):
            if kind == "op":
                s = {"&&": "&", "||": "|", "=>": "->", "~": "!"}.get(s, s)
            toks.append(_Tok(kind, s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            col = len(s) - s.rfind("\n")
        else:
            col += len(s)
        pos = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, toks, schema: Schema, params: dict):
        self.toks = toks
        self.i = 0
        self.schema = schema
        self.params = params

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return FormulaSyntaxError(msg, tok.line, tok.col)

    def accept(self, text):
        if self.tok.text == text and self.tok.kind in ("op", "ident"):
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")

    # formula := implies
    def formula(self):
        left = self.disjunction()
        if self.accept("->"):
            return Implies(left, self.formula())
        return left

    def disjunction(self):
        f = self.conjunction()
        while self.accept("|"):
            f = Or(f, self.conjunction())
        return f

    def conjunction(self):
        f = self.temporal_binary()
        while self.accept("&"):
            f = And(f, self.temporal_binary())
        return f

    def temporal_binary(self):
        f = self.unary()
        t = self.tok
        if t.kind == "ident" and t.text in _BINARY_TEMPORAL:
            self.i += 1
            iv = self.interval()
            g = self.unary()
            return _BINARY_TEMPORAL[t.text](iv, f, g)
        return f

    def unary(self):
        t = self.tok
        if self.accept("!"):
            return Not(self.unary())
        if t.kind == "ident" and t.text in _UNARY_TEMPORAL:
            self.i += 1
            iv = self.interval()
            return _UNARY_TEMPORAL[t.text](iv, self.unary())
        if t.kind == "ident" and t.text == "X":
            self.i += 1
            return Next(self.unary())
        if t.kind == "ident" and t.text == "P":
            self.i += 1
            return Prev(self.unary())
        return self.primary()

    def interval(self) -> Interval:
        start = self.tok
        if not self.accept("["):
            return UNBOUNDED
        lo = self.value(allow_inf=False)
        self.expect(",")
        hi = self.value(allow_inf=True)
        self.expect("]")
        try:
            return Interval(lo, hi)
        except IntervalError as e:
            raise FormulaSyntaxError(f"malformed interval: {e}", start.line, start.col) from None

    def value(self, allow_inf=True) -> float:
        """A numeric literal, ``inf`` or a declared parameter, optionally negated."""
        t = self.tok
        sign = 1.0
        if self.accept("-"):
            sign = -1.0
            t = self.tok
        if t.kind == "num":
            self.i += 1
            return sign * float(t.text)
        if t.kind == "ident" and t.text == "inf":
            if not allow_inf:
                raise self.error("'inf' not allowed here", t)
            self.i += 1
            return sign * INF
        if t.kind == "ident" and t.text in self.params:
            self.i += 1
            return sign * float(self.params[t.text])
        if t.kind == "ident" and t.text not in KEYWORDS:
            raise UnknownIdentifier(
                f"unknown identifier {t.text!r} at line {t.line}, column {t.col}"
            )
        raise self.error(f"expected a number, found {t.text or 'end of input'!r}", t)

    def _is_value_start(self):
        t = self.tok
        if t.kind == "num" or (t.kind == "op" and t.text == "-"):
            return True
        return t.kind == "ident" and (t.text in self.params or t.text == "inf")

    def primary(self):
        t = self.tok
        if self.accept("("):
            f = self.formula()
            self.expect(")")
            return f
        if self._is_value_start():
            c = self.value()
            op = self.comparator()
            var = self.signal(REAL)
            return Comparison(var, _FLIP[op], c)
        if t.kind == "ident" and t.text not in KEYWORDS:
            kind = self.schema.kind(t.text)
            if kind is None:
                raise UnknownIdentifier(
                    f"unknown identifier {t.text!r} at line {t.line}, column {t.col}"
                )
            self.i += 1
            if kind == BOOL:
                return Prop(t.text)
            op = self.comparator()
            return Comparison(t.text, op, self.value())
        raise self.error(f"unexpected token {t.text or 'end of input'!r}")

    def comparator(self):
        t = self.tok
        if t.kind == "op" and t.text in _FLIP:
            self.i += 1
            return t.text
        raise self.error(f"expected a comparison operator, found {t.text or 'end of input'!r}")

    def signal(self, kind):
        t = self.tok
        if t.kind != "ident" or t.text in KEYWORDS:
            raise self.error(f"expected a signal name, found {t.text or 'end of input'!r}")
        k = self.schema.kind(t.text)
        if k is None:
            raise UnknownIdentifier(
                f"unknown identifier {t.text!r} at line {t.line}, column {t.col}"
            )
        if k != kind:
            raise UnknownIdentifier(f"{t.text!r} is declared {k}, used as {kind}")
        self.i += 1
        return t.text


def parse_formula(text: str, schema, params: dict | None = None, *, _line0: int = 1):
    """Parse *text* into a formula AST, resolving names against *schema*.

    *params* maps named constants (thresholds, interval bounds) to numbers.
    """
    if not isinstance(schema, Schema):
        schema = Schema(schema)
    params = dict(params or {})
    clash = set(params) & set(schema.names)
    if clash:
        raise FormulaError(f"names declared both as signal and parameter: {sorted(clash)}")
    p = _Parser(_tokenize(text, _line0), schema, params)
    if p.tok.kind == "eof":
        raise p.error("empty formula")
    f = p.formula()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected token {p.tok.text!r}")
    return f


# --- formula files -----------------------------------------------------------

_DECL_RE = re.compile(r"^\s*(real|bool)\s+(.+?)\s*$")
_PARAM_RE = re.compile(r"^\s*(?:param|const)\s+([A-Za-z_]\w*)\s*=\s*(\S+)\s*$")
_IDENT_RE = re.compile(r"^[A-Za-z_]\w*$")


@dataclass
class PropertyFile:
    """Contents of a ``.stl`` property file."""

    schema: Schema
    params: dict = field(default_factory=dict)
    formula: object = None
    text: str = ""

    def life_long(self) -> LifeLongProperty:
        """Interpret the formula as ``G body``; the top level must be unbounded ``G``."""
        f = self.formula
        if not (isinstance(f, Always) and f.interval == UNBOUNDED):
            raise FormulaError("a life-long property must have the shape 'G body'")
        return LifeLongProperty(f.arg)


def _number(s: str, line: int) -> float:
    try:
        v = float(s)
    except ValueError:
        raise FormulaSyntaxError(f"bad parameter value {s!r}", line, 1) from None
    if math.isnan(v):
        raise FormulaSyntaxError("parameter value is NaN", line, 1)
    return v


def parse_property_file(text: str, overrides: dict | None = None) -> PropertyFile:
    """Parse a property file: declaration header followed by one formula.

    Header lines are ``real a, b``, ``bool p`` and ``param name = value``;
    ``#`` starts a comment.  The first other line starts the formula, which
    may span the rest of the file.  *overrides* replace parameter values.
    """
    signals, params = [], {}
    lines = text.splitlines()
    body_start = len(lines)
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _DECL_RE.match(line)
        if m:
            for name in (n.strip() for n in m.group(2).split(",")):
                if not _IDENT_RE.match(name) or name in KEYWORDS:
                    raise FormulaSyntaxError(f"bad signal name {name!r}", no, 1)
                signals.append(Signal(name, m.group(1)))
            continue
        m = _PARAM_RE.match(line)
        if m:
            if m.group(1) in KEYWORDS:
                raise FormulaSyntaxError(f"bad parameter name {m.group(1)!r}", no, 1)
            params[m.group(1)] = _number(m.group(2), no)
            continue
        body_start = no - 1
        break
    for k, v in (overrides or {}).items():
        if k not in params:
            raise FormulaError(f"override for undeclared parameter {k!r}")
        params[k] = float(v)
    schema = Schema(signals)
    body = "\n".join(lines[body_start:])
    f = parse_formula(body, schema, params, _line0=body_start + 1)
    return PropertyFile(schema=schema, params=params, formula=f, text=text)


def load_property_file(path, overrides: dict | None = None) -> PropertyFile:
    return parse_property_file(Path(path).read_text(encoding="utf-8"), overrides)
