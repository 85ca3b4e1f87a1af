"""Quantitative and boolean semantics over sampled traces.

Interval membership is checked on sampled instants only (``t[j] - t[n]`` in
``I``); no interpolation.  Empty minima are ``+inf`` and empty maxima ``-inf``.
A future window that reaches past the last sample raises
:class:`InsufficientTrace` instead of assuming an extension.
"""

from __future__ import annotations

import bisect
import csv
import math

import numpy as np

from .formula import (
    INF, Always, And, Comparison, Eventually, Historically, Implies,
    Next, Not, Once, Or, Prev, Prop, Schema, Since, Until, check_schema,
    format_formula, future_reach, has_step_operators, retention, time_tol, walk,
)

DEFAULT_BOOL_MARGIN = 1.0


class InsufficientTrace(ValueError):
    """The formula needs samples beyond the end of the trace."""


class Trace:
    """Finite sequence of ``(time, state-vector)`` samples over a signal schema."""

    __slots__ = ("times", "states", "schema")

    def __init__(self, times, states, schema):
        self.schema = schema if isinstance(schema, Schema) else Schema(schema)
        self.times = np.asarray(times, dtype=float).reshape(-1)
        self.states = np.asarray(states, dtype=float)
        if self.states.size == 0:
            self.states = self.states.reshape(len(self.times), len(self.schema))
        if self.states.shape != (len(self.times), len(self.schema)):
            raise ValueError(
                f"states shape {self.states.shape} does not match "
                f"{len(self.times)} samples x {len(self.schema)} signals"
            )
        if len(self.times):
            if self.times[0] < 0:
                raise ValueError("trace times must be non-negative")
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("trace times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.schema.index(name)]

    def prefix(self, n: int) -> "Trace":
        return Trace(self.times[:n], self.states[:n], self.schema)

    def __eq__(self, other):
        return (
            isinstance(other, Trace)
            and self.schema == other.schema
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.states, other.states)
        )

    def __repr__(self):
        return f"Trace({len(self)} samples, {self.schema!r})"


def write_trace_csv(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", *trace.schema.names])
        for t, row in zip(trace.times, trace.states):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])


def read_trace_csv(path, schema: Schema | None = None) -> Trace:
    """Read a ``time,<signal>...`` CSV.  Without *schema* every column is real."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0].strip() != "time":
        raise ValueError(f"{path}: header must start with 'time'")
    names = [h.strip() for h in rows[0][1:]]
    if schema is None:
        schema = Schema(names)
    else:
        missing = [n for n in schema.names if n not in names]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
    cols = [1 + names.index(n) for n in schema.names]
    data = [[float(x) for x in r] for r in rows[1:] if r]
    times = [r[0] for r in data]
    states = [[r[c] for c in cols] for r in data]
    return Trace(times, np.array(states, dtype=float).reshape(len(times), len(schema)), schema)


# --- evaluator -----------------------------------------------------------------


class _Evaluator:
    """Memoised recursive evaluation over one trace.

    Robustness and boolean semantics share the same recursion; only the
    atom values, the negation and the empty-set constants differ.
    """

    def __init__(self, trace: Trace, quantitative: bool, bool_margin: float):
        self.times = trace.times.tolist()
        self.last = len(self.times) - 1
        self.schema = trace.schema
        self.cols = {}
        self.trace = trace
        self.quant = quantitative
        self.margin = float(bool_margin)
        if quantitative:
            self.top, self.bottom = INF, -INF
            self.neg = lambda x: -x
        else:
            self.top, self.bottom = True, False
            self.neg = lambda x: not x
        self.memo = {}

    def col(self, name):
        c = self.cols.get(name)
        if c is None:
            c = self.cols[name] = self.trace.column(name).tolist()
        return c

    def ev(self, f, n):
        key = (id(f), n)
        v = self.memo.get(key)
        if v is None:
            v = self.memo[key] = self._ev(f, n)
        return v

    def _need_until(self, f, n, hi):
        tn = self.times[n]
        if hi == INF or (self.times[self.last] - tn) < hi - time_tol(tn + hi):
            raise InsufficientTrace(
                f"{format_formula(f)} at t={tn} needs samples up to t={tn + hi}, "
                f"trace ends at t={self.times[self.last]}"
            )

    def _future_window(self, n, iv):
        tn, times = self.times[n], self.times
        lo = bisect.bisect_left(times, tn + iv.lo - 2 * time_tol(tn + iv.lo), n)
        hi = bisect.bisect_right(times, tn + iv.hi + 2 * time_tol(tn + iv.hi), n)
        return [j for j in range(lo, hi) if iv.contains(times[j] - tn)]

    def _past_window(self, n, iv):
        tn, times = self.times[n], self.times
        if iv.hi == INF:
            lo = 0
        else:
            lo = bisect.bisect_left(times, tn - iv.hi - 2 * time_tol(tn), 0, n + 1)
        hi = bisect.bisect_right(times, tn - iv.lo + 2 * time_tol(tn), 0, n + 1)
        return [j for j in range(lo, hi) if iv.contains(tn - times[j])]

    def _ev(self, f, n):
        t = type(f)
        if t is Comparison:
            x = self.col(f.var)[n]
            if self.quant:
                return f.const - x if f.op in ("<", "<=") else x - f.const
            return {"<": x < f.const, "<=": x <= f.const,
                    ">": x > f.const, ">=": x >= f.const}[f.op]
        if t is Prop:
            val = self.col(f.name)[n] != 0.0
            if self.quant:
                return self.margin if val else -self.margin
            return val
        if t is Not:
            return self.neg(self.ev(f.arg, n))
        if t is And:
            return min(self.ev(f.left, n), self.ev(f.right, n))
        if t is Or:
            return max(self.ev(f.left, n), self.ev(f.right, n))
        if t is Implies:
            return max(self.neg(self.ev(f.left, n)), self.ev(f.right, n))
        if t is Always or t is Eventually:
            self._need_until(f, n, f.interval.hi)
            vals = [self.ev(f.arg, j) for j in self._future_window(n, f.interval)]
            if t is Always:
                return min(vals, default=self.top)
            return max(vals, default=self.bottom)
        if t is Historically or t is Once:
            vals = [self.ev(f.arg, j) for j in self._past_window(n, f.interval)]
            if t is Historically:
                return min(vals, default=self.top)
            return max(vals, default=self.bottom)
        if t is Until:
            self._need_until(f, n, f.interval.hi)
            best = self.bottom
            running, k = self.top, n  # running = min of left over [n, k)
            for j in self._future_window(n, f.interval):
                while k < j:
                    running = min(running, self.ev(f.left, k))
                    k += 1
                best = max(best, min(self.ev(f.right, j), running))
            return best
        if t is Since:
            best = self.bottom
            running, k = self.top, n  # running = min of left over (k, n]
            for j in reversed(self._past_window(n, f.interval)):
                while k > j:
                    running = min(running, self.ev(f.left, k))
                    k -= 1
                best = max(best, min(self.ev(f.right, j), running))
            return best
        if t is Next:
            if n + 1 > self.last:
                raise InsufficientTrace(
                    f"{format_formula(f)} at sample {n} needs sample {n + 1}, "
                    f"trace has {self.last + 1}"
                )
            return self.ev(f.arg, n + 1)
        if t is Prev:
            return self.bottom if n == 0 else self.ev(f.arg, n - 1)
        raise TypeError(f"not a formula: {f!r}")


def _check_index(trace, n):
    if not 0 <= n < len(trace):
        raise IndexError(f"sample index {n} outside trace of length {len(trace)}")


def eval_rob(f, trace: Trace, n: int, bool_margin: float = DEFAULT_BOOL_MARGIN) -> float:
    """Robustness of *f* at sample *n*; positive means satisfied."""
    _check_index(trace, n)
    check_schema(f, trace.schema)
    return float(_Evaluator(trace, True, bool_margin).ev(f, n))


def eval_bool(f, trace: Trace, n: int) -> bool:
    """Boolean satisfaction of *f* at sample *n*."""
    _check_index(trace, n)
    check_schema(f, trace.schema)
    return bool(_Evaluator(trace, False, DEFAULT_BOOL_MARGIN).ev(f, n))


def rob_series(f, trace: Trace, bool_margin: float = DEFAULT_BOOL_MARGIN) -> list:
    """Robustness at every sample; ``None`` where the trace is too short."""
    check_schema(f, trace.schema)
    ev = _Evaluator(trace, True, bool_margin)
    out = []
    for n in range(len(trace)):
        try:
            out.append(float(ev.ev(f, n)))
        except InsufficientTrace:
            out.append(None)
    return out


def global_min_rob(f, trace: Trace, bool_margin: float = DEFAULT_BOOL_MARGIN):
    """Minimum robustness over all evaluable samples and the first index attaining it.

    For a past-dependent *f* this is the robustness of ``G f`` on the
    discretised trace.  Returns ``(inf, None)`` if nothing is evaluable.
    """
    best, arg = INF, None
    for n, r in enumerate(rob_series(f, trace, bool_margin)):
        if r is not None and (arg is None or r < best):
            best, arg = r, n
    return best, arg


class Monitor:
    """Incremental robustness of a past-dependent formula.

    Each :meth:`push` returns the robustness at the newest sample, equal to
    :func:`eval_rob` on the full prefix pushed so far.  Samples older than the
    formula's look-back horizon are evicted.
    """

    def __init__(self, formula, schema, bool_margin: float = DEFAULT_BOOL_MARGIN,
                 retain_all: bool = False, dt: float | None = None):
        self.formula = formula
        self.schema = schema if isinstance(schema, Schema) else Schema(schema)
        check_schema(formula, self.schema)
        if dt is None and has_step_operators(formula):
            # without a sample step, X/P reach is only known when nothing looks ahead
            if any(isinstance(g, (Always, Eventually, Until, Next)) for g in walk(formula)):
                raise ValueError("formula mixes X/P with future operators; pass dt to check it")
            reach = 0.0
        else:
            reach = future_reach(formula, dt)
        if reach != 0.0:
            raise ValueError(f"monitor needs a past-dependent formula, got {format_formula(formula)}")
        self.bool_margin = bool_margin
        self.retain_all = retain_all
        self.lookback_s, self.lookback_k = retention(formula)
        self.times: list = []
        self.states: list = []
        self.max_gap = 0.0
        self.count = 0

    def push(self, t: float, x) -> float:
        t = float(t)
        if self.times and not t > self.times[-1]:
            raise ValueError(f"non-monotone timestamp {t} after {self.times[-1]}")
        if not self.times and t < 0:
            raise ValueError("timestamps must be non-negative")
        x = np.asarray(x, dtype=float).reshape(-1)
        if len(x) != len(self.schema):
            raise ValueError(f"state has {len(x)} entries, schema has {len(self.schema)}")
        if self.times:
            self.max_gap = max(self.max_gap, t - self.times[-1])
        self.times.append(t)
        self.states.append(x)
        self.count += 1
        self._evict()
        tr = Trace(self.times, np.vstack(self.states), self.schema)
        return float(_Evaluator(tr, True, self.bool_margin).ev(self.formula, len(tr) - 1))

    def _evict(self):
        if self.retain_all or math.isinf(self.lookback_s):
            return
        # one extra sample of slack beyond the bound in formula.retention
        horizon = self.lookback_s + (self.lookback_k + 1) * self.max_gap
        cutoff = self.times[-1] - horizon - time_tol(self.times[-1]) - time_tol(horizon)
        drop = 0
        while drop < len(self.times) - 1 and self.times[drop] < cutoff:
            drop += 1
        if drop:
            del self.times[:drop]
            del self.states[:drop]

    @property
    def window(self) -> int:
        return len(self.times)
