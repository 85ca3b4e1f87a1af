"""Random formulas and traces for oracle and property tests."""

import math

import numpy as np
from hypothesis import strategies as st

from rlfalsify.formula import (
    Always, And, Comparison, Eventually, Historically, Implies, Interval, Next,
    Not, Once, Or, Prev, Prop, Schema, Since, Until,
)
from rlfalsify.robustness import Trace

SCHEMA = Schema.of(reals=("x", "y"), bools=("p", "q"))

UNARY_TEMPORAL = (Always, Eventually, Historically, Once)
BINARY_TEMPORAL = (Until, Since)
PAST_ONLY = (Historically, Once, Since, Prev)
ALL_OPS = (Comparison, Prop, Not, And, Or, Implies, Always, Eventually,
           Historically, Once, Until, Since, Next, Prev)

_LOS = (0.0, 0.0, 0.5, 1.0, 2.0)
_WIDTHS = (0.0, 0.5, 1.0, 2.0, 3.0, math.inf)
_CONSTS = (-1.0, 0.0, 0.5, 1.0, 2.0)
_VALUES = (-1.0, 0.0, 0.5, 1.0, 2.0, 3.0)


def random_interval(rng, bounded=False):
    lo = float(rng.choice(_LOS))
    widths = _WIDTHS[:-1] if bounded else _WIDTHS
    return Interval(lo, lo + float(rng.choice(widths)))


def random_atom(rng):
    if rng.random() < 0.6:
        return Comparison(str(rng.choice(["x", "y"])), str(rng.choice(["<", "<=", ">", ">="])),
                          float(rng.choice(_CONSTS)))
    return Prop(str(rng.choice(["p", "q"])))


def random_formula(rng, depth, ops=ALL_OPS, bounded=False):
    """Formula of depth at most *depth* using operator types from *ops*."""
    inner = [o for o in ops if o not in (Comparison, Prop)]
    if depth <= 0 or not inner or rng.random() < 0.2:
        return random_atom(rng)
    op = inner[int(rng.integers(len(inner)))]
    sub = lambda: random_formula(rng, depth - 1, ops, bounded)  # noqa: E731
    if op in (Not, Next, Prev):
        return op(sub())
    if op in (And, Or, Implies):
        return op(sub(), sub())
    if op in UNARY_TEMPORAL:
        return op(random_interval(rng, bounded), sub())
    return op(random_interval(rng, bounded), sub(), sub())


def random_trace(rng, n=None, uniform=False, dt=None, max_len=20):
    n = int(rng.integers(1, max_len + 1)) if n is None else n
    if uniform or dt is not None:
        step = dt if dt is not None else float(rng.choice([0.5, 1.0]))
        times = np.arange(n) * step
    else:
        times = np.cumsum(rng.choice([0.5, 1.0, 1.5], size=n)) - 0.5
    reals = rng.choice(_VALUES, size=(n, 2))
    bools = rng.integers(0, 2, size=(n, 2)).astype(float)
    return Trace(times, np.hstack([reals, bools]), SCHEMA)


# --- hypothesis strategies ---------------------------------------------------

_intervals = st.builds(lambda lo, w: Interval(lo, lo + w), st.sampled_from(_LOS), st.sampled_from(_WIDTHS))
_atoms = st.one_of(
    st.builds(Comparison, st.sampled_from(["x", "y"]), st.sampled_from(["<", "<=", ">", ">="]),
              st.sampled_from(_CONSTS)),
    st.builds(Prop, st.sampled_from(["p", "q"])),
)


def _extend(children, past_only=False):
    unary = [Historically, Once] if past_only else list(UNARY_TEMPORAL)
    binary = [Since] if past_only else list(BINARY_TEMPORAL)
    steps = [Prev] if past_only else [Next, Prev]
    return st.one_of(
        st.builds(Not, children),
        st.builds(And, children, children),
        st.builds(Or, children, children),
        st.builds(Implies, children, children),
        st.builds(lambda op, i, a: op(i, a), st.sampled_from(unary), _intervals, children),
        st.builds(lambda op, i, a, b: op(i, a, b), st.sampled_from(binary), _intervals, children, children),
        st.builds(lambda op, a: op(a), st.sampled_from(steps), children),
    )


formulas = st.recursive(_atoms, _extend, max_leaves=6)
past_formulas = st.recursive(_atoms, lambda c: _extend(c, past_only=True), max_leaves=6)


@st.composite
def traces(draw, min_len=1, max_len=20, uniform=None):
    n = draw(st.integers(min_len, max_len))
    if uniform is None:
        uniform = draw(st.booleans())
    if uniform:
        step = draw(st.sampled_from([0.5, 1.0]))
        times = [k * step for k in range(n)]
    else:
        gaps = draw(st.lists(st.sampled_from([0.5, 1.0, 1.5]), min_size=n, max_size=n))
        times = list(np.cumsum(gaps) - gaps[0])
    reals = draw(st.lists(st.tuples(st.sampled_from(_VALUES), st.sampled_from(_VALUES)),
                          min_size=n, max_size=n))
    bools = draw(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=n, max_size=n))
    states = [[a, b, float(p), float(q)] for (a, b), (p, q) in zip(reals, bools)]
    return Trace(times, np.array(states, dtype=float), SCHEMA)
