"""Significance tests and summary statistics for falsification experiments."""

from __future__ import annotations

import itertools
import logging
import math
import statistics

log = logging.getLogger(__name__)

EXACT_MWU_MAX_TOTAL = 12
# relative slack when comparing table / statistic probabilities for equality
_REL_TOL = 1e-7


def fisher_exact(table) -> float:
    """Two-sided Fisher exact p-value of a 2x2 contingency table.

    Sums the hypergeometric probabilities of every table with the observed
    margins whose probability does not exceed the observed one.  A zero row
    or column total gives ``p = 1``.
    """
    (a, b), (c, d) = table
    cells = [a, b, c, d]
    if any(int(x) != x or x < 0 for x in cells):
        raise ValueError(f"table entries must be non-negative integers, got {table}")
    a, b, c, d = (int(x) for x in cells)
    r1, r2, c1 = a + b, c + d, a + c
    n = r1 + r2
    if r1 == 0 or r2 == 0 or c1 == 0 or c1 == n:
        log.info("degenerate margins in %s; p = 1", table)
        return 1.0
    denom = math.comb(n, c1)

    def prob(x):
        return math.comb(r1, x) * math.comb(r2, c1 - x) / denom

    p_obs = prob(a)
    lo, hi = max(0, c1 - r2), min(r1, c1)
    p = sum(q for q in map(prob, range(lo, hi + 1)) if q <= p_obs * (1 + _REL_TOL))
    return min(1.0, p)


def u_statistic(a, b) -> float:
    """Mann-Whitney U of *a* against *b*: pairs with ``a > b``, ties count half."""
    u = 0.0
    for x in a:
        for y in b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return u


def _exact_p(a, b, u) -> float:
    pooled = list(a) + list(b)
    n, m = len(a), len(b)
    mean = n * m / 2.0
    dev = abs(u - mean)
    hits = total = 0
    for idx in itertools.combinations(range(n + m), n):
        chosen = set(idx)
        xa = [pooled[i] for i in idx]
        xb = [pooled[i] for i in range(n + m) if i not in chosen]
        total += 1
        if abs(u_statistic(xa, xb) - mean) >= dev - _REL_TOL * max(1.0, dev):
            hits += 1
    return hits / total


def _normal_p(a, b, u) -> float:
    n, m = len(a), len(b)
    N = n + m
    mean = n * m / 2.0
    ties = sum(k ** 3 - k for k in _tie_counts(list(a) + list(b)))
    var = n * m / 12.0 * ((N + 1) - ties / (N * (N - 1)))
    if var <= 0:
        return 1.0
    z = max(0.0, abs(u - mean) - 0.5) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def _tie_counts(xs):
    counts = {}
    for x in xs:
        counts[x] = counts.get(x, 0) + 1
    return [k for k in counts.values() if k > 1]


def mann_whitney_u(a, b, method: str = "auto") -> tuple[float, float]:
    """Two-sided Mann-Whitney U test; returns ``(U, p)``.

    ``method="auto"`` enumerates all relabellings when the pooled size is at
    most 12 and otherwise uses the normal approximation with tie and
    continuity corrections.
    """
    a, b = [float(x) for x in a], [float(x) for x in b]
    if not a or not b:
        raise ValueError("both samples must be non-empty")
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method {method!r}")
    u = u_statistic(a, b)
    if method == "auto":
        method = "exact" if len(a) + len(b) <= EXACT_MWU_MAX_TOTAL else "normal"
    p = _exact_p(a, b, u) if method == "exact" else _normal_p(a, b, u)
    return u, p


def capped_episode_counts(trials, budget: int) -> list:
    """Episodes used per trial, with failed trials counted as the full budget.

    *trials* holds ``(falsified, episodes)`` pairs.
    """
    return [int(k) if ok else int(budget) for ok, k in trials]


def capped_median(trials, budget: int) -> float:
    return float(statistics.median(capped_episode_counts(trials, budget)))


def significance_marks(p: float | None) -> str:
    if p is None or math.isnan(p):
        return ""
    if p < 0.001:
        return "**"
    if p < 0.05:
        return "*"
    return ""
