"""Brute-force reference semantics used to cross-check the evaluator.

Every subformula is tabulated at every sample bottom-up, and every quantified
index set is built by scanning the whole trace.  ``None`` marks an instant
whose value needs samples past the end of the trace.  Deliberately slow and
independent of :mod:`rlfalsify.robustness`.
"""

from __future__ import annotations

import math

from .formula import (
    TIME_EPS, Always, And, Comparison, Eventually, Historically, Implies,
    Next, Not, Once, Or, Prev, Prop, Since, Until,
)


def _member(lo, hi, d):
    slack = TIME_EPS * max(1.0, abs(d))
    return lo - slack <= d <= hi + slack


class _Table:
    def __init__(self, trace, quantitative, margin):
        self.t = [float(x) for x in trace.times]
        self.N = len(self.t)
        self.trace = trace
        self.q = quantitative
        self.margin = margin

    # extended-real / boolean algebra
    def lo_(self, xs):
        if self.q:
            out = math.inf
            for x in xs:
                out = x if x < out else out
            return out
        return all(xs)

    def hi_(self, xs):
        if self.q:
            out = -math.inf
            for x in xs:
                out = x if x > out else out
            return out
        return any(xs)

    def neg(self, x):
        return -x if self.q else (not x)

    def horizon_ok(self, n, hi):
        if hi == math.inf:
            return False
        end = self.t[-1]
        need = self.t[n] + hi
        return end - self.t[n] >= hi - TIME_EPS * max(1.0, abs(need))

    def table(self, f):
        N, t = self.N, self.t
        if isinstance(f, Comparison):
            col = self.trace.column(f.var)
            out = []
            for n in range(N):
                x = float(col[n])
                if self.q:
                    out.append(f.const - x if f.op in ("<", "<=") else x - f.const)
                elif f.op == "<":
                    out.append(x < f.const)
                elif f.op == "<=":
                    out.append(x <= f.const)
                elif f.op == ">":
                    out.append(x > f.const)
                else:
                    out.append(x >= f.const)
            return out
        if isinstance(f, Prop):
            col = self.trace.column(f.name)
            if self.q:
                return [self.margin if float(c) != 0.0 else -self.margin for c in col]
            return [float(c) != 0.0 for c in col]
        if isinstance(f, Not):
            a = self.table(f.arg)
            return [None if x is None else self.neg(x) for x in a]
        if isinstance(f, (And, Or, Implies)):
            a, b = self.table(f.left), self.table(f.right)
            out = []
            for x, y in zip(a, b):
                if x is None or y is None:
                    out.append(None)
                elif isinstance(f, And):
                    out.append(self.lo_([x, y]))
                elif isinstance(f, Or):
                    out.append(self.hi_([x, y]))
                else:
                    out.append(self.hi_([self.neg(x), y]))
            return out
        if isinstance(f, (Always, Eventually)):
            a = self.table(f.arg)
            out = []
            for n in range(N):
                if not self.horizon_ok(n, f.interval.hi):
                    out.append(None)
                    continue
                idx = {m for m in range(N) if _member(f.interval.lo, f.interval.hi, t[m] - t[n])}
                vals = [a[m] for m in sorted(idx)]
                if any(v is None for v in vals):
                    out.append(None)
                else:
                    out.append(self.lo_(vals) if isinstance(f, Always) else self.hi_(vals))
            return out
        if isinstance(f, (Historically, Once)):
            a = self.table(f.arg)
            out = []
            for n in range(N):
                idx = {m for m in range(N) if _member(f.interval.lo, f.interval.hi, t[n] - t[m])}
                vals = [a[m] for m in sorted(idx)]
                if any(v is None for v in vals):
                    out.append(None)
                else:
                    out.append(self.lo_(vals) if isinstance(f, Historically) else self.hi_(vals))
            return out
        if isinstance(f, Until):
            a, b = self.table(f.left), self.table(f.right)
            out = []
            for n in range(N):
                if not self.horizon_ok(n, f.interval.hi):
                    out.append(None)
                    continue
                cands = [m for m in range(N) if _member(f.interval.lo, f.interval.hi, t[m] - t[n])]
                terms, bad = [], False
                for m in cands:
                    inner = [a[k] for k in range(n, m)]  # n <= k < m
                    if b[m] is None or any(v is None for v in inner):
                        bad = True
                        break
                    terms.append(self.lo_([b[m], self.lo_(inner)]))
                out.append(None if bad else self.hi_(terms))
            return out
        if isinstance(f, Since):
            a, b = self.table(f.left), self.table(f.right)
            out = []
            for n in range(N):
                cands = [m for m in range(N) if _member(f.interval.lo, f.interval.hi, t[n] - t[m])]
                terms, bad = [], False
                for m in cands:
                    inner = [a[k] for k in range(m + 1, n + 1)]  # m < k <= n
                    if b[m] is None or any(v is None for v in inner):
                        bad = True
                        break
                    terms.append(self.lo_([b[m], self.lo_(inner)]))
                out.append(None if bad else self.hi_(terms))
            return out
        if isinstance(f, Next):
            a = self.table(f.arg)
            return [a[n + 1] if n + 1 < N else None for n in range(N)]
        if isinstance(f, Prev):
            a = self.table(f.arg)
            bottom = -math.inf if self.q else False
            return [bottom if n == 0 else a[n - 1] for n in range(N)]
        raise TypeError(f"not a formula: {f!r}")


def oracle_rob(f, trace, bool_margin: float = 1.0) -> list:
    """Robustness of *f* at every sample (``None`` where undefined)."""
    return _Table(trace, True, bool_margin).table(f)


def oracle_sat(f, trace) -> list:
    """Boolean satisfaction of *f* at every sample (``None`` where undefined)."""
    return _Table(trace, False, 1.0).table(f)
