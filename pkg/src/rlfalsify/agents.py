"""Input-generation agents sharing the ``step(x, r) -> u`` / ``reset(x, r)`` contract.

* :class:`RandomAgent` draws every input uniformly from the input box.
* :class:`DoubleQAgent` is a tabular double Q-learner over a discretised
  observation and a finite action grid; it adapts inputs within an episode.
* :class:`SimulatedAnnealingAgent` and :class:`CrossEntropyAgent` optimise a
  whole-episode input schedule and only learn between episodes.
"""

from __future__ import annotations

import itertools
import json
import math
from pathlib import Path

import numpy as np

from .falsify import rho_from_reward

SNAPSHOT_FORMAT = "rlfalsify-agent"
SNAPSHOT_VERSION = 1


def _bounds(bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if np.any(b[:, 0] > b[:, 1]) or not np.all(np.isfinite(b)):
        raise ValueError(f"invalid input bounds {b.tolist()}")
    return b


class Agent:
    kind = "base"

    def __init__(self, bounds, seed=None):
        self.bounds = _bounds(bounds)
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    @property
    def lo(self):
        return self.bounds[:, 0]

    @property
    def hi(self):
        return self.bounds[:, 1]

    def clip(self, u) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.lo, self.hi)

    def step(self, x, r: float) -> np.ndarray:
        raise NotImplementedError

    def reset(self, x, r: float) -> None:
        pass

    def config(self) -> dict:
        return {"bounds": self.bounds.tolist(), "seed": self.seed}

    def state_dict(self) -> dict:
        return {"rng": self.rng.bit_generator.state}

    def load_state_dict(self, state: dict) -> None:
        self.rng.bit_generator.state = state["rng"]


class RandomAgent(Agent):
    kind = "random"

    def step(self, x, r):
        return self.rng.uniform(self.lo, self.hi)


# --- double Q-learning -----------------------------------------------------


class Discretizer:
    """Uniform bins per selected observation entry; values outside are clipped."""

    def __init__(self, lows, highs, bins=8, indices=None):
        self.lows = np.asarray(lows, dtype=float)
        self.highs = np.asarray(highs, dtype=float)
        self.bins = np.broadcast_to(np.asarray(bins, dtype=int), self.lows.shape).copy()
        self.indices = None if indices is None else [int(i) for i in indices]
        if np.any(self.highs <= self.lows) or np.any(self.bins < 1):
            raise ValueError("discretizer needs low < high and at least one bin")

    def __call__(self, x) -> tuple:
        x = np.asarray(x, dtype=float).reshape(-1)
        if self.indices is not None:
            x = x[self.indices]
        frac = (x - self.lows) / (self.highs - self.lows)
        b = np.floor(np.clip(frac, 0.0, 1.0) * self.bins).astype(int)
        return tuple(np.minimum(b, self.bins - 1).tolist())

    def config(self) -> dict:
        return {"lows": self.lows.tolist(), "highs": self.highs.tolist(),
                "bins": self.bins.tolist(), "indices": self.indices}


def action_grid(bounds, points) -> np.ndarray:
    b = _bounds(bounds)
    points = np.broadcast_to(np.asarray(points, dtype=int), (len(b),))
    axes = [np.linspace(lo, hi, int(k)) if k > 1 else np.array([(lo + hi) / 2])
            for (lo, hi), k in zip(b, points)]
    return np.array(list(itertools.product(*axes)), dtype=float)


class DoubleQAgent(Agent):
    """Tabular double Q-learning with epsilon-greedy exploration.

    On every step one of the two tables (chosen at random) is updated:
    ``Q_A(s,a) += alpha * (r + gamma * Q_B(s', argmax Q_A(s',.)) - Q_A(s,a))``
    and symmetrically for ``Q_B``.  Actions are greedy in ``Q_A + Q_B`` with
    random tie-breaking.  The episode's last transition is closed at
    :meth:`reset` without a bootstrap term.  Epsilon decays linearly per
    episode from ``eps_start`` to ``eps_end`` over ``eps_decay_episodes``.
    """

    kind = "q"

    def __init__(self, bounds, discretizer: Discretizer, seed=None, grid=5,
                 alpha=0.5, gamma=0.99, eps_start=1.0, eps_end=0.05,
                 eps_decay_episodes=100):
        super().__init__(bounds, seed)
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not (0.0 <= eps_end <= 1.0 and 0.0 <= eps_start <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        self.discretizer = discretizer
        self.grid = grid
        self.actions = action_grid(self.bounds, grid)
        self.alpha, self.gamma = float(alpha), float(gamma)
        self.eps_start, self.eps_end = float(eps_start), float(eps_end)
        self.eps_decay_episodes = int(eps_decay_episodes)
        self.qa: dict = {}
        self.qb: dict = {}
        self.episode = 0
        self._prev = None  # (state, action index) awaiting its reward

    @property
    def epsilon(self) -> float:
        if self.eps_decay_episodes <= 0:
            return self.eps_end
        frac = self.episode / self.eps_decay_episodes
        if frac >= 1.0:
            return self.eps_end
        return self.eps_start + (self.eps_end - self.eps_start) * frac

    def _row(self, table, s):
        row = table.get(s)
        if row is None:
            row = table[s] = np.zeros(len(self.actions))
        return row

    def q_values(self, s) -> np.ndarray:
        return self._row(self.qa, s) + self._row(self.qb, s)

    def greedy(self, s) -> int:
        q = self.q_values(s)
        best = np.flatnonzero(q == q.max())
        return int(best[0] if len(best) == 1 else self.rng.choice(best))

    def update(self, s, a, r, s_next=None, which=None):
        """One double-Q update; ``s_next=None`` closes an episode (no bootstrap).

        *which* ("a" or "b") forces the table to learn; by default it is
        drawn at random.
        """
        if which is None:
            which = "a" if self.rng.random() < 0.5 else "b"
        learn, other = (self.qa, self.qb) if which == "a" else (self.qb, self.qa)
        row = self._row(learn, s)
        target = r
        if s_next is not None:
            a_star = int(np.argmax(self._row(learn, s_next)))
            target += self.gamma * self._row(other, s_next)[a_star]
        row[a] += self.alpha * (target - row[a])

    def step(self, x, r):
        s = self.discretizer(x)
        if self._prev is not None:
            self.update(*self._prev, r, s)
        if self.rng.random() < self.epsilon:
            a = int(self.rng.integers(len(self.actions)))
        else:
            a = self.greedy(s)
        self._prev = (s, a)
        return self.actions[a].copy()

    def reset(self, x, r):
        if self._prev is not None:
            self.update(*self._prev, r)
        self._prev = None
        self.episode += 1

    def config(self):
        return {**super().config(), "discretizer": self.discretizer.config(), "grid": self.grid,
                "alpha": self.alpha, "gamma": self.gamma, "eps_start": self.eps_start,
                "eps_end": self.eps_end, "eps_decay_episodes": self.eps_decay_episodes}

    def state_dict(self):
        enc = lambda t: {",".join(map(str, k)): v.tolist() for k, v in t.items()}  # noqa: E731
        prev = None if self._prev is None else [list(self._prev[0]), self._prev[1]]
        return {**super().state_dict(), "qa": enc(self.qa), "qb": enc(self.qb),
                "episode": self.episode, "prev": prev}

    def load_state_dict(self, state):
        super().load_state_dict(state)

        def dec(t):
            return {tuple(int(i) for i in k.split(",")) if k else (): np.array(v, dtype=float)
                    for k, v in t.items()}

        self.qa, self.qb = dec(state["qa"]), dec(state["qb"])
        self.episode = int(state["episode"])
        p = state.get("prev")
        self._prev = None if p is None else (tuple(p[0]), int(p[1]))


# --- whole-episode optimisers ----------------------------------------------


class EpisodeParamOptimizer(Agent):
    """Replays a fixed input schedule ``theta`` (steps x channels) per episode.

    The episode objective is its minimum robustness, recovered from the
    largest reward observed.  The reward passed to the first ``step`` of an
    episode is the loop's initial 0 and carries no information.
    """

    def __init__(self, bounds, n_steps: int, seed=None):
        super().__init__(bounds, seed)
        if n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        self.n_steps = int(n_steps)
        self.shape = (self.n_steps, len(self.bounds))
        self.span = np.tile(self.hi - self.lo, (self.n_steps, 1))
        self.theta_lo = np.tile(self.lo, (self.n_steps, 1))
        self.theta_hi = np.tile(self.hi, (self.n_steps, 1))
        self.episodes_seen = 0
        self.best_theta = None
        self.best_objective = math.inf
        self._k = 0
        self._max_r = -math.inf
        self.theta = None  # schedule replayed in the current episode

    def clip_theta(self, theta):
        return np.clip(theta, self.theta_lo, self.theta_hi)

    def step(self, x, r):
        if self._k > 0:
            self._max_r = max(self._max_r, r)
        row = self.theta[min(self._k, self.n_steps - 1)]
        self._k += 1
        return row.copy()

    def reset(self, x, r):
        if self._k > 0:
            self._max_r = max(self._max_r, r)
        obj = rho_from_reward(self._max_r)
        self.tell(obj)

    def tell(self, objective: float) -> None:
        """Report the objective of the schedule in :attr:`theta` and move on."""
        self.episodes_seen += 1
        if objective < self.best_objective:
            self.best_objective, self.best_theta = objective, self.theta.copy()
        self._learn(objective)
        self._k = 0
        self._max_r = -math.inf

    def ask(self) -> np.ndarray:
        return self.theta

    def _learn(self, objective: float) -> None:
        raise NotImplementedError

    def state_dict(self):
        return {**super().state_dict(), "theta": self.theta.tolist(),
                "episodes_seen": self.episodes_seen,
                "best_theta": None if self.best_theta is None else self.best_theta.tolist(),
                "best_objective": _enc(self.best_objective), "k": self._k,
                "max_r": _enc(self._max_r)}

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.theta = np.array(state["theta"], dtype=float)
        self.episodes_seen = int(state["episodes_seen"])
        bt = state["best_theta"]
        self.best_theta = None if bt is None else np.array(bt, dtype=float)
        self.best_objective = _dec(state["best_objective"])
        self._k = int(state["k"])
        self._max_r = _dec(state["max_r"])


def _enc(x):
    return repr(float(x)) if math.isinf(x) or math.isnan(x) else float(x)


def _dec(x):
    return float(x)


class SimulatedAnnealingAgent(EpisodeParamOptimizer):
    """Metropolis search over schedules with geometric cooling.

    A neighbour perturbs a random subset of coordinates with Gaussian noise
    of standard deviation ``sigma_frac`` times the channel range.  Worse
    neighbours are accepted with probability ``exp(-delta / T_k)`` where
    ``T_k = t0 * cooling**k`` after ``k`` proposals.
    """

    kind = "sa"

    def __init__(self, bounds, n_steps, seed=None, t0=1.0, cooling=0.97,
                 sigma_frac=0.1, subset_frac=0.3):
        super().__init__(bounds, n_steps, seed)
        self.t0, self.cooling = float(t0), float(cooling)
        self.sigma_frac, self.subset_frac = float(sigma_frac), float(subset_frac)
        self.current = None
        self.current_objective = math.inf
        self.proposals = 0
        self.theta = self.rng.uniform(self.theta_lo, self.theta_hi)

    @property
    def temperature(self) -> float:
        return self.t0 * self.cooling ** self.proposals

    @staticmethod
    def accept_probability(delta: float, temperature: float) -> float:
        if delta <= 0 or math.isnan(delta):
            return 1.0
        if temperature <= 0:
            return 0.0
        return math.exp(-delta / temperature)

    def neighbour(self, theta):
        flat = theta.reshape(-1).copy()
        d = flat.size
        k = max(1, int(round(self.subset_frac * d)))
        idx = self.rng.choice(d, size=k, replace=False)
        flat[idx] += self.rng.normal(0.0, 1.0, size=k) * self.sigma_frac * self.span.reshape(-1)[idx]
        return self.clip_theta(flat.reshape(theta.shape))

    def _learn(self, objective):
        if self.current is None:
            self.current, self.current_objective = self.theta, objective
        else:
            if objective == self.current_objective:
                delta = 0.0
            else:
                delta = objective - self.current_objective
            p = self.accept_probability(delta, self.temperature)
            if p >= 1.0 or self.rng.random() < p:
                self.current, self.current_objective = self.theta, objective
            self.proposals += 1
        self.theta = self.neighbour(self.current)

    def config(self):
        return {**super().config(), "n_steps": self.n_steps, "t0": self.t0,
                "cooling": self.cooling, "sigma_frac": self.sigma_frac,
                "subset_frac": self.subset_frac}

    def state_dict(self):
        return {**super().state_dict(),
                "current": None if self.current is None else self.current.tolist(),
                "current_objective": _enc(self.current_objective),
                "proposals": self.proposals}

    def load_state_dict(self, state):
        super().load_state_dict(state)
        c = state["current"]
        self.current = None if c is None else np.array(c, dtype=float)
        self.current_objective = _dec(state["current_objective"])
        self.proposals = int(state["proposals"])


class CrossEntropyAgent(EpisodeParamOptimizer):
    """Diagonal-Gaussian cross-entropy search over schedules.

    Each generation samples ``population`` schedules (one per episode); the
    best ``elite_frac`` of them refit the mean and standard deviation, with
    the deviation floored at ``sigma_floor_frac`` of the channel range.
    """

    kind = "ce"

    def __init__(self, bounds, n_steps, seed=None, population=10, elite_frac=0.2,
                 sigma_init_frac=0.5, sigma_floor_frac=0.01):
        super().__init__(bounds, n_steps, seed)
        if population < 4:
            raise ValueError("population must be at least 4")
        self.population = int(population)
        self.elite_frac = float(elite_frac)
        self.n_elite = max(1, int(round(self.population * self.elite_frac)))
        self.sigma_init_frac = float(sigma_init_frac)
        self.sigma_floor_frac = float(sigma_floor_frac)
        self.mean = (self.theta_lo + self.theta_hi) / 2.0
        self.sigma = self.sigma_init_frac * self.span
        self.generation = 0
        self._samples: list = []
        self._scores: list = []
        self._sample_generation()

    @property
    def sigma_floor(self):
        return self.sigma_floor_frac * self.span

    def _sample_generation(self):
        z = self.rng.normal(size=(self.population, *self.shape))
        self._samples = [self.clip_theta(self.mean + self.sigma * zi) for zi in z]
        self._scores = []
        self.theta = self._samples[0]

    def refit(self, elites) -> None:
        elites = np.asarray(elites, dtype=float)
        self.mean = elites.mean(axis=0)
        self.sigma = np.maximum(elites.std(axis=0), self.sigma_floor)

    def _learn(self, objective):
        self._scores.append(objective)
        if len(self._scores) < self.population:
            self.theta = self._samples[len(self._scores)]
            return
        order = np.argsort(np.asarray(self._scores), kind="stable")
        self.refit([self._samples[i] for i in order[: self.n_elite]])
        self.generation += 1
        self._sample_generation()

    def config(self):
        return {**super().config(), "n_steps": self.n_steps, "population": self.population,
                "elite_frac": self.elite_frac, "sigma_init_frac": self.sigma_init_frac,
                "sigma_floor_frac": self.sigma_floor_frac}

    def state_dict(self):
        return {**super().state_dict(), "mean": self.mean.tolist(), "sigma": self.sigma.tolist(),
                "generation": self.generation,
                "samples": [s.tolist() for s in self._samples],
                "scores": [_enc(s) for s in self._scores]}

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.mean = np.array(state["mean"], dtype=float)
        self.sigma = np.array(state["sigma"], dtype=float)
        self.generation = int(state["generation"])
        self._samples = [np.array(s, dtype=float) for s in state["samples"]]
        self._scores = [_dec(s) for s in state["scores"]]
        self.theta = np.array(state["theta"], dtype=float)


# --- construction and snapshots ---------------------------------------------

AGENT_KINDS = {"random": RandomAgent, "q": DoubleQAgent,
               "sa": SimulatedAnnealingAgent, "ce": CrossEntropyAgent}


def default_discretizer(model, bins=8) -> Discretizer:
    """Bins over the model's real-valued outputs, using its observation hints."""
    ranges = getattr(model, "observation_ranges", None)
    if not ranges:
        raise ValueError("model provides no observation ranges; configure obs_low/obs_high")
    idx = sorted(ranges)
    return Discretizer([ranges[i][0] for i in idx], [ranges[i][1] for i in idx], bins, idx)


def make_agent(cfg: dict, model, n_steps: int, seed=None, episodes: int | None = None) -> Agent:
    """Build an agent from a config block (``kind`` plus hyperparameters).

    For the Q agent, epsilon anneals over the first half of *episodes*
    unless ``eps_decay_episodes`` is configured.
    """
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    cfg.pop("name", None)
    cfg.pop("ours", None)
    if "seed" in cfg and seed is None:
        seed = cfg.pop("seed")
    cfg.pop("seed", None)
    bounds = model.input_bounds
    if kind == "random":
        return RandomAgent(bounds, seed)
    if kind == "q":
        bins = cfg.pop("bins", 8)
        if "obs_low" in cfg:
            disc = Discretizer(cfg.pop("obs_low"), cfg.pop("obs_high"), bins,
                               cfg.pop("obs_indices", None))
        else:
            disc = default_discretizer(model, bins)
        if episodes is not None:
            cfg.setdefault("eps_decay_episodes", max(1, episodes // 2))
        return DoubleQAgent(bounds, disc, seed=seed, **cfg)
    if kind == "sa":
        return SimulatedAnnealingAgent(bounds, n_steps, seed=seed, **cfg)
    if kind == "ce":
        return CrossEntropyAgent(bounds, n_steps, seed=seed, **cfg)
    raise ValueError(f"unknown agent kind {kind!r}; choose from {sorted(AGENT_KINDS)}")


def snapshot(agent: Agent) -> dict:
    return {"format": SNAPSHOT_FORMAT, "version": SNAPSHOT_VERSION, "kind": agent.kind,
            "config": agent.config(), "state": agent.state_dict()}


def restore(snap: dict) -> Agent:
    if snap.get("format") != SNAPSHOT_FORMAT:
        raise ValueError("not an agent snapshot")
    if snap.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {snap.get('version')}")
    cfg = dict(snap["config"])
    cls = AGENT_KINDS[snap["kind"]]
    if cls is DoubleQAgent:
        d = cfg.pop("discretizer")
        cfg["discretizer"] = Discretizer(d["lows"], d["highs"], d["bins"], d["indices"])
    agent = cls(**cfg)
    agent.load_state_dict(snap["state"])
    return agent


def save_agent(agent: Agent, path) -> None:
    Path(path).write_text(json.dumps(snapshot(agent)))


def load_agent(path) -> Agent:
    return restore(json.loads(Path(path).read_text()))
