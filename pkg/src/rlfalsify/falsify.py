"""Episodic falsification of life-long properties by reward-driven input generation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .formula import LifeLongProperty, TIME_EPS, format_formula, to_past_dependent
from .robustness import (
    DEFAULT_BOOL_MARGIN, Monitor, Trace, eval_bool, global_min_rob,
)
from .system import InputSignal, SystemModel, clamp_input, run_signal

log = logging.getLogger(__name__)

GAMMA = 1.0  # the falsification objective sums rewards undiscounted
REWARD_CAP_EXPONENT = 40.0
REWARD_CAP = math.expm1(REWARD_CAP_EXPONENT)


def reward(rho: float) -> float:
    """``exp(-rho) - 1``, capped at ``exp(40) - 1`` for very negative ``rho``."""
    if math.isnan(rho):
        raise ValueError("robustness is NaN")
    if -rho >= REWARD_CAP_EXPONENT:
        return REWARD_CAP
    return math.expm1(-rho)


def rho_from_reward(r: float) -> float:
    """Inverse of :func:`reward` (``+inf`` for ``r <= -1``)."""
    if r <= -1.0:
        return math.inf
    return -math.log1p(r)


class EpisodeAborted(RuntimeError):
    """The model failed mid-episode; ``record`` holds what was collected."""

    def __init__(self, msg, record):
        super().__init__(msg)
        self.record = record


@dataclass
class EpisodeRecord:
    inputs: InputSignal
    trace: Trace
    robustness: list  # rho at samples 1..n
    rewards: list  # reward(rho) per step
    min_rho: float  # over samples 0..n
    falsified: bool
    error: str | None = None

    @property
    def steps(self) -> int:
        return len(self.inputs)

    @property
    def last_observation(self):
        """``(x, r)`` handed to ``agent.reset`` at the end of the episode."""
        return self.trace.states[-1], (self.rewards[-1] if self.rewards else 0.0)


@dataclass
class FalsificationResult:
    outcome: str  # "falsified" | "exhausted" | "aborted"
    episode_index: int | None  # 1-based, set when falsified
    counterexample: InputSignal | None
    episodes: list = field(default_factory=list)
    wall_ms: float = 0.0
    seed: int | None = None
    prop: LifeLongProperty | None = None
    error: str | None = None

    @property
    def falsified(self) -> bool:
        return self.outcome == "falsified"

    @property
    def num_episodes(self) -> int:
        return len(self.episodes)

    def to_json(self, include_wall: bool = True) -> dict:
        d = {
            "outcome": self.outcome,
            "episode_index": self.episode_index,
            "counterexample": self.counterexample.to_rows() if self.counterexample is not None else None,
            "episodes": [
                {"min_rho": _jnum(e.min_rho), "falsified": e.falsified, "steps": e.steps}
                for e in self.episodes
            ],
            "seed": self.seed,
        }
        if self.prop is not None:
            d["property"] = str(self.prop)
        if self.error is not None:
            d["error"] = self.error
        if include_wall:
            d["wall_ms"] = self.wall_ms
        return d


def _jnum(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def trace_violates(body, trace: Trace, bool_margin: float = DEFAULT_BOOL_MARGIN) -> tuple[bool, float]:
    """Verdict of ``G body`` on *trace*: ``(falsified, min robustness)``.

    Negative minimum robustness falsifies; exactly zero defers to the
    boolean semantics.
    """
    rho, _ = global_min_rob(body, trace, bool_margin)
    if rho < 0:
        return True, rho
    if rho == 0:
        return any(not eval_bool(body, trace, n) for n in range(len(trace))), rho
    return False, rho


def _n_steps(dt: float, t_end: float) -> int:
    # the loop runs while i*dt < t_end
    return max(0, math.ceil(t_end / dt - TIME_EPS))


def run_episode(model: SystemModel, agent, prop: LifeLongProperty, dt: float, t_end: float,
                bool_margin: float = DEFAULT_BOOL_MARGIN, early_exit: bool = False) -> EpisodeRecord:
    """One simulation from reset to ``t_end``; *prop* must be past-dependent."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    body = prop.body
    monitor = Monitor(body, model.output_schema, bool_margin, dt=dt)
    bounds = model.input_bounds
    inputs, states, robs, rewards = [], [], [], []
    rho0 = math.inf

    def record(error=None):
        u = InputSignal(dt, np.array(inputs, dtype=float).reshape(len(inputs), len(bounds)))
        width = len(model.output_schema)
        tr = Trace(np.arange(len(states)) * dt,
                   np.array(states, dtype=float).reshape(len(states), width), model.output_schema)
        falsified, min_rho = (False, math.inf)
        if error is None:
            min_rho = min([rho0, *robs])
            falsified = min_rho < 0 or (min_rho == 0 and trace_violates(body, tr, bool_margin)[0])
        return EpisodeRecord(u, tr, robs, rewards, min_rho, falsified, error)

    try:
        x = np.asarray(model.reset(), dtype=float)
        states.append(x)
        rho0 = monitor.push(0.0, x)
        r = 0.0
        i = 0
        steps = _n_steps(dt, t_end)
        while i < steps:
            u = clamp_input(agent.step(x, r), bounds, "agent ")
            inputs.append(u)
            x = np.asarray(model.step(u, dt), dtype=float)
            states.append(x)
            rho = monitor.push((i + 1) * dt, x)
            r = reward(rho)
            robs.append(rho)
            rewards.append(r)
            i += 1
            if early_exit and rho < 0:
                break
    except Exception as e:  # model and bridge failures end the episode
        rec = record(error=f"{type(e).__name__}: {e}")
        raise EpisodeAborted(rec.error, rec) from e
    return record()


def falsify(model: SystemModel, agent, psi: LifeLongProperty, dt: float, t_end: float,
            episodes: int, seed: int | None = None, bool_margin: float = DEFAULT_BOOL_MARGIN,
            early_exit: bool = False) -> FalsificationResult:
    """Search for an input violating ``psi`` within *episodes* simulations.

    ``psi`` is first rewritten to its past-dependent form.  The agent keeps
    its learning state across episodes and is notified through
    ``agent.reset(x, r)`` after every non-falsifying episode.
    """
    if episodes < 1:
        raise ValueError("episode budget must be at least 1")
    prop = to_past_dependent(psi, dt)
    start = time.perf_counter()
    result = FalsificationResult("exhausted", None, None, seed=seed, prop=prop)
    for k in range(1, episodes + 1):
        try:
            rec = run_episode(model, agent, prop, dt, t_end, bool_margin, early_exit)
        except EpisodeAborted as e:
            log.error("episode %d aborted: %s", k, e)
            result.episodes.append(e.record)
            result.outcome, result.error = "aborted", str(e)
            break
        result.episodes.append(rec)
        if rec.falsified:
            result.outcome, result.episode_index = "falsified", k
            result.counterexample = rec.inputs
            break
        agent.reset(*rec.last_observation)
    result.wall_ms = (time.perf_counter() - start) * 1000.0
    log.info("falsify %s: %s after %d episodes", format_formula(prop.body),
             result.outcome, result.num_episodes)
    return result


def replay(model: SystemModel, u: InputSignal, prop: LifeLongProperty,
           bool_margin: float = DEFAULT_BOOL_MARGIN) -> tuple[bool, Trace]:
    """Re-simulate *u* and report whether the past-dependent *prop* is violated."""
    tr = run_signal(model, u)
    return trace_violates(prop.body, tr, bool_margin)[0], tr
