"""Temporal-logic formula AST, reach analysis and the past-dependent rewrite."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Union

INF = math.inf

# Absolute/relative slack for time comparisons on sampled instants; k*dt in
# floating point rarely lands exactly on an interval bound.
TIME_EPS = 1e-9


def time_tol(x: float) -> float:
    return TIME_EPS * max(1.0, abs(x))


class FormulaError(ValueError):
    """Base class for malformed formulas and formula files."""


class IntervalError(FormulaError):
    pass


@dataclass(frozen=True)
class Interval:
    lo: float = 0.0
    hi: float = INF

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise IntervalError("interval bound is NaN")
        if lo < 0:
            raise IntervalError(f"negative interval bound {lo}")
        if lo == INF:
            raise IntervalError("interval lower bound must be finite")
        if lo > hi:
            raise IntervalError(f"interval lower bound {lo} exceeds upper bound {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, d: float) -> bool:
        tol = time_tol(d)
        return self.lo - tol <= d <= self.hi + tol

    @property
    def unbounded(self) -> bool:
        return self.hi == INF

    def __str__(self):
        return f"[{fmt_number(self.lo)},{fmt_number(self.hi)}]"


UNBOUNDED = Interval(0.0, INF)


def fmt_number(x: float) -> str:
    if x == INF:
        return "inf"
    if x == -INF:
        return "-inf"
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


# --- signal schema -----------------------------------------------------------

REAL = "real"
BOOL = "bool"


@dataclass(frozen=True)
class Signal:
    name: str
    kind: str = REAL

    def __post_init__(self):
        if not self.name:
            raise FormulaError("signal name must be non-empty")
        if self.kind not in (REAL, BOOL):
            raise FormulaError(f"unknown signal kind {self.kind!r}")


class Schema(tuple):
    """Ordered, immutable collection of :class:`Signal` with name lookup."""

    def __new__(cls, signals=()):
        sigs = []
        for s in signals:
            if isinstance(s, str):
                s = Signal(s)
            elif not isinstance(s, Signal):
                s = Signal(*s)
            sigs.append(s)
        names = [s.name for s in sigs]
        if len(set(names)) != len(names):
            raise FormulaError(f"duplicate signal names in schema {names}")
        return super().__new__(cls, sigs)

    @classmethod
    def of(cls, reals=(), bools=()):
        return cls([Signal(n, REAL) for n in reals] + [Signal(n, BOOL) for n in bools])

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self)

    def index(self, name: str) -> int:  # type: ignore[override]
        for i, s in enumerate(self):
            if s.name == name:
                return i
        raise KeyError(name)

    def kind(self, name: str) -> str | None:
        for s in self:
            if s.name == name:
                return s.kind
        return None

    def __repr__(self):
        return "Schema(" + ", ".join(f"{s.kind} {s.name}" for s in self) + ")"


# --- AST ---------------------------------------------------------------------

COMPARATORS = ("<", "<=", ">", ">=")


@dataclass(frozen=True)
class Comparison:
    """Linear comparison ``var op const``; robustness is the signed distance."""

    var: str
    op: str
    const: float

    def __post_init__(self):
        if not self.var:
            raise FormulaError("comparison variable name is empty")
        if self.op not in COMPARATORS:
            raise FormulaError(f"unknown comparator {self.op!r}")
        object.__setattr__(self, "const", float(self.const))


@dataclass(frozen=True)
class Prop:
    name: str

    def __post_init__(self):
        if not self.name:
            raise FormulaError("proposition name is empty")


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Always:
    interval: Interval
    arg: "Formula"


@dataclass(frozen=True)
class Eventually:
    interval: Interval
    arg: "Formula"


@dataclass(frozen=True)
class Historically:
    interval: Interval
    arg: "Formula"


@dataclass(frozen=True)
class Once:
    interval: Interval
    arg: "Formula"


@dataclass(frozen=True)
class Until:
    interval: Interval
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Since:
    interval: Interval
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Next:
    arg: "Formula"


@dataclass(frozen=True)
class Prev:
    arg: "Formula"


Atom = Union[Comparison, Prop]
Formula = Union[
    Comparison, Prop, Not, And, Or, Implies, Always, Eventually, Historically,
    Once, Until, Since, Next, Prev,
]

ATOMS = (Comparison, Prop)
BINARY_BOOL = (And, Or, Implies)
FUTURE_UNARY = (Always, Eventually)
PAST_UNARY = (Historically, Once)
TEMPORAL_BINARY = (Until, Since)
STEP_UNARY = (Next, Prev)


def children(f) -> tuple:
    if isinstance(f, ATOMS):
        return ()
    if isinstance(f, (Not, Next, Prev) + FUTURE_UNARY + PAST_UNARY):
        return (f.arg,)
    return (f.left, f.right)


def walk(f) -> Iterator:
    yield f
    for c in children(f):
        yield from walk(c)


def depth(f) -> int:
    """Operator nesting depth; atoms have depth 0."""
    cs = children(f)
    return 1 + max(depth(c) for c in cs) if cs else 0


def has_step_operators(f) -> bool:
    return any(isinstance(g, STEP_UNARY) for g in walk(f))


def atoms(f) -> list:
    return [g for g in walk(f) if isinstance(g, ATOMS)]


def check_schema(f, schema: Schema) -> None:
    """Raise :class:`UnknownIdentifier` if an atom does not resolve against *schema*."""
    from .parser import UnknownIdentifier

    for a in atoms(f):
        name = a.var if isinstance(a, Comparison) else a.name
        kind = schema.kind(name)
        want = REAL if isinstance(a, Comparison) else BOOL
        if kind is None:
            raise UnknownIdentifier(f"unknown identifier {name!r}")
        if kind != want:
            raise UnknownIdentifier(f"{name!r} is declared {kind}, used as {want}")


# --- reach analysis ----------------------------------------------------------


def _step(dt):
    if dt is None:
        raise ValueError("formula contains X/P; pass dt to resolve one-step reach")
    if dt <= 0:
        raise ValueError("dt must be positive")
    return float(dt)


def future_reach(f, dt: float | None = None) -> float:
    """How far past the evaluation instant (seconds) the verdict of *f* may look.

    Past operators subtract the lower bound of their interval (clamped at 0),
    so ``future_reach(Historically([h, h], g)) == 0`` whenever
    ``future_reach(g) <= h``.  ``Next``/``Prev`` move one sample, which is
    resolved as one ``dt``.
    """
    if isinstance(f, ATOMS):
        return 0.0
    if isinstance(f, Not):
        return future_reach(f.arg, dt)
    if isinstance(f, BINARY_BOOL):
        return max(future_reach(f.left, dt), future_reach(f.right, dt))
    if isinstance(f, FUTURE_UNARY):
        return future_reach(f.arg, dt) + f.interval.hi
    if isinstance(f, Until):
        return max(future_reach(f.left, dt), future_reach(f.right, dt)) + f.interval.hi
    if isinstance(f, PAST_UNARY):
        return max(0.0, future_reach(f.arg, dt) - f.interval.lo)
    if isinstance(f, Since):
        return max(future_reach(f.left, dt), future_reach(f.right, dt) - f.interval.lo, 0.0)
    if isinstance(f, Next):
        return future_reach(f.arg, dt) + _step(dt)
    if isinstance(f, Prev):
        return max(0.0, future_reach(f.arg, dt) - _step(dt))
    raise TypeError(f"not a formula: {f!r}")


def past_reach(f, dt: float | None = None) -> float:
    """Mirror image of :func:`future_reach`: how far back the verdict may look."""
    if isinstance(f, ATOMS):
        return 0.0
    if isinstance(f, Not):
        return past_reach(f.arg, dt)
    if isinstance(f, BINARY_BOOL):
        return max(past_reach(f.left, dt), past_reach(f.right, dt))
    if isinstance(f, PAST_UNARY):
        return past_reach(f.arg, dt) + f.interval.hi
    if isinstance(f, Since):
        return max(past_reach(f.left, dt), past_reach(f.right, dt)) + f.interval.hi
    if isinstance(f, FUTURE_UNARY):
        return max(0.0, past_reach(f.arg, dt) - f.interval.lo)
    if isinstance(f, Until):
        return max(past_reach(f.left, dt), past_reach(f.right, dt) - f.interval.lo, 0.0)
    if isinstance(f, Prev):
        return past_reach(f.arg, dt) + _step(dt)
    if isinstance(f, Next):
        return max(0.0, past_reach(f.arg, dt) - _step(dt))
    raise TypeError(f"not a formula: {f!r}")


def retention(f) -> tuple[float, int]:
    """Conservative (seconds, samples) look-back bound used by the monitor.

    Unlike :func:`past_reach` nothing is subtracted, so the bound holds for
    arbitrary (non-uniform) sampling: every sample touched while evaluating
    at index ``i`` has time ``>= t_i - seconds - samples * max_gap``.
    """
    if isinstance(f, ATOMS):
        return 0.0, 0
    if isinstance(f, (Not, Next) + FUTURE_UNARY):
        return retention(f.arg)
    if isinstance(f, PAST_UNARY):
        s, k = retention(f.arg)
        return s + f.interval.hi, k
    if isinstance(f, Prev):
        s, k = retention(f.arg)
        return s, k + 1
    (s1, k1), (s2, k2) = retention(f.left), retention(f.right)
    s, k = max(s1, s2), max(k1, k2)
    if isinstance(f, Since):
        s += f.interval.hi
    return s, k


# --- life-long properties ----------------------------------------------------


@dataclass(frozen=True)
class LifeLongProperty:
    """``G body``: *body* must hold at every sampled instant."""

    body: Formula

    def __str__(self):
        return f"G ({format_formula(self.body)})"


def is_past_dependent(f, dt: float | None = None) -> bool:
    return future_reach(f, dt) == 0.0


def to_past_dependent(psi: LifeLongProperty, dt: float | None = None) -> LifeLongProperty:
    """Rewrite ``G phi`` into ``G H[h,h] phi`` with ``h = future_reach(phi)``.

    When *dt* is given, ``h`` is rounded up to a whole number of samples so the
    delayed instant lands on the sampling grid (any delay ``>= h`` preserves
    the verdict set).
    """
    h = future_reach(psi.body, dt)
    if h == 0.0:
        return psi
    if math.isinf(h):
        raise FormulaError(
            f"property {format_formula(psi.body)} has unbounded future reach; "
            "it cannot be monitored from a finite prefix"
        )
    if dt is not None:
        k = math.ceil(h / dt - TIME_EPS)
        h = k * dt
    return LifeLongProperty(Historically(Interval(h, h), psi.body))


# --- printing ----------------------------------------------------------------

_UNARY_SYMBOL = {Always: "G", Eventually: "F", Historically: "H", Once: "O"}
_BINARY_SYMBOL = {And: "&", Or: "|", Implies: "->", Until: "U", Since: "S"}


def _fmt_interval(iv: Interval) -> str:
    return "" if iv == UNBOUNDED else str(iv)


def _fmt_operand(f) -> str:
    s = format_formula(f)
    if isinstance(f, BINARY_BOOL + TEMPORAL_BINARY):
        return f"({s})"
    return s


def format_formula(f) -> str:
    """Render *f* in the surface grammar accepted by :func:`parse_formula`."""
    if isinstance(f, Comparison):
        return f"{f.var} {f.op} {fmt_number(f.const)}"
    if isinstance(f, Prop):
        return f.name
    if isinstance(f, Not):
        return "!" + _fmt_operand(f.arg)
    if isinstance(f, Next):
        return "X " + _fmt_operand(f.arg)
    if isinstance(f, Prev):
        return "P " + _fmt_operand(f.arg)
    if isinstance(f, FUTURE_UNARY + PAST_UNARY):
        return f"{_UNARY_SYMBOL[type(f)]}{_fmt_interval(f.interval)} {_fmt_operand(f.arg)}"
    if isinstance(f, TEMPORAL_BINARY):
        op = _BINARY_SYMBOL[type(f)] + _fmt_interval(f.interval)
        return f"{_fmt_operand(f.left)} {op} {_fmt_operand(f.right)}"
    if isinstance(f, BINARY_BOOL):
        return f"{_fmt_operand(f.left)} {_BINARY_SYMBOL[type(f)]} {_fmt_operand(f.right)}"
    raise TypeError(f"not a formula: {f!r}")
