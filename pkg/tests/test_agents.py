import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rlfalsify.agents import (
    CrossEntropyAgent, Discretizer, DoubleQAgent, RandomAgent, SimulatedAnnealingAgent,
    action_grid, load_agent, make_agent, restore, save_agent, snapshot,
)
from rlfalsify.falsify import falsify, reward
from rlfalsify.formula import Comparison, LifeLongProperty, Schema, Signal
from rlfalsify.system import SurrogateAT

AT_BOUNDS = [(0.0, 100.0), (0.0, 325.0)]


def _q_agent(bounds=((0.0, 1.0),), grid=2, bins=2, **kw):
    return DoubleQAgent(list(bounds), Discretizer([0.0], [2.0], bins), grid=grid, **kw)


class TestRandomAgent:
    def test_stays_in_box(self):
        a = RandomAgent(AT_BOUNDS, seed=0)
        u = np.array([a.step(None, 0.0) for _ in range(10_000)])
        assert u.min(axis=0).tolist() >= [0, 0] and np.all(u <= [100, 325])

    def test_reproducible(self):
        a, b = RandomAgent(AT_BOUNDS, seed=7), RandomAgent(AT_BOUNDS, seed=7)
        for _ in range(20):
            assert np.array_equal(a.step(None, 0), b.step(None, 0))

    def test_mean_near_midpoint(self):
        a = RandomAgent(AT_BOUNDS, seed=1)
        u = np.array([a.step(None, 0.0) for _ in range(100_000)])
        mid = np.array([50.0, 162.5])
        assert np.all(np.abs(u.mean(axis=0) - mid) <= 0.02 * mid)


class TestDoubleQ:
    def test_hand_computed_update(self):
        ag = _q_agent(alpha=0.5, gamma=0.9)
        s, s2 = (0,), (1,)
        ag._row(ag.qa, s2)[:] = [0.0, 3.0]  # argmax under A is action 1
        ag._row(ag.qb, s2)[:] = [5.0, 2.0]
        ag.update(s, 0, 1.0, s2, which="a")
        assert ag.qa[s][0] == pytest.approx(1.4, abs=1e-15)
        # roles swapped: B learns, bootstrapping with A at B's argmax (action 0)
        ag.update(s, 0, 1.0, s2, which="b")
        assert ag.qb[s][0] == pytest.approx(0.5 * (1.0 + 0.9 * 0.0), abs=1e-15)

    def test_terminal_update_has_no_bootstrap(self):
        ag = _q_agent(alpha=0.5)
        ag.update((0,), 1, -2.0, None, which="b")
        assert ag.qb[(0,)][1] == -1.0

    def test_greedy_unique_max(self):
        for seed in range(10):
            ag = _q_agent(bounds=AT_BOUNDS, grid=5, eps_start=0.0, eps_end=0.0, seed=seed)
            s = ag.discretizer([0.5])
            ag._row(ag.qa, s)[:] = -1.0
            ag._row(ag.qa, s)[17] = 0.5
            assert np.array_equal(ag.step([0.5], 0.0), ag.actions[17])

    def test_chain_converges_to_value_iteration(self):
        # two states; action 0 stays, action 1 switches; landing in state 1 pays 1
        gamma = 0.9

        def nxt(s, a):
            return s if a == 0 else 1 - s

        qstar = np.zeros((2, 2))
        for _ in range(2000):
            qstar = np.array([[float(nxt(s, a) == 1) + gamma * qstar[nxt(s, a)].max()
                               for a in range(2)] for s in range(2)])
        ag = _q_agent(alpha=0.5, gamma=gamma, eps_start=1.0, eps_end=1.0, seed=0)
        s, r = 0, 0.0
        for _ in range(10_000):
            u = ag.step([s + 0.5], r)
            a = int(round(u[0]))
            s = nxt(s, a)
            r = float(s == 1)
        for st_ in range(2):
            learned = (ag.qa[(st_,)] + ag.qb[(st_,)]) / 2.0
            assert np.all(np.abs(learned - qstar[st_]) < 1e-3)

    def test_bandit_argmax_independent_of_table_rng(self):
        rng = np.random.default_rng(0)
        means = (0.3, -0.2)
        stream = [(k % 2, means[k % 2] + rng.normal()) for k in range(10_000)]
        agents = [_q_agent(alpha=0.05, seed=seed, eps_start=0.0, eps_end=0.0) for seed in (1, 2)]
        for ag in agents:
            for a, r in stream:
                ag.update((0,), a, r)
        q = [ag.q_values((0,)) for ag in agents]
        assert not np.array_equal(q[0], q[1])
        assert int(np.argmax(q[0])) == int(np.argmax(q[1])) == 0

    def test_epsilon_schedule(self):
        ag = _q_agent(eps_start=1.0, eps_end=0.05, eps_decay_episodes=10)
        assert ag.epsilon == 1.0
        for _ in range(5):
            ag.reset([0.5], 0.0)
        assert ag.epsilon == pytest.approx(0.525)
        for _ in range(20):
            ag.reset([0.5], 0.0)
        assert ag.epsilon == 0.05

    def test_make_agent_anneals_over_half_budget(self):
        ag = make_agent({"kind": "q"}, SurrogateAT(), 8, seed=0, episodes=200)
        assert ag.eps_decay_episodes == 100
        assert ag.actions.shape == (25, 2)
        assert ag.discretizer.bins.tolist() == [8, 8, 8]

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            _q_agent(alpha=0.0)
        with pytest.raises(ValueError):
            _q_agent(eps_start=1.5)

    def test_tables_stay_finite_under_cap_rewards(self):
        ag = _q_agent(seed=1)
        for _ in range(500):
            ag.step([0.5], reward(-math.inf))
        assert all(np.all(np.isfinite(v)) for v in [*ag.qa.values(), *ag.qb.values()])


class TestDiscretizer:
    def test_bins_and_clipping(self):
        d = Discretizer([0.0, 800.0], [160.0, 6000.0], 8, indices=[0, 1])
        assert d([0.0, 800.0, 3.0]) == (0, 0)
        assert d([159.9, 5999.0, 1.0]) == (7, 7)
        assert d([500.0, -1.0, 1.0]) == (7, 0)
        assert d([20.0, 800.0 + 650.0, 1.0]) == (1, 1)

    def test_action_grid(self):
        g = action_grid(AT_BOUNDS, 5)
        assert g.shape == (25, 2)
        assert g[:, 0].min() == 0 and g[:, 1].max() == 325


def _synthetic(cls, dim, seed, budget=200, **kw):
    """Best objective sum |theta - c| within *budget* episodes."""
    c = np.random.default_rng(1000 + seed).uniform(0, 1, size=(dim, 1))
    agent = cls([(0.0, 1.0)], dim, seed=seed, **kw)
    best = math.inf
    for _ in range(budget):
        obj = float(np.abs(agent.ask() - c).sum())
        best = min(best, obj)
        agent.tell(obj)
    return best


def _successes(cls, dim):
    return sum(_synthetic(cls, dim, seed) < 0.1 for seed in range(20))


class TestEpisodeOptimizers:
    @pytest.mark.parametrize("cls", [SimulatedAnnealingAgent, CrossEntropyAgent])
    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_synthetic_objective(self, cls, dim):
        assert _successes(cls, dim) >= 18

    @pytest.mark.xfail(strict=True, reason="measured 16/20 (SA) and 4/20 (CE) at dimension 5")
    @pytest.mark.parametrize("cls", [SimulatedAnnealingAgent, CrossEntropyAgent])
    def test_synthetic_objective_dim5(self, cls):
        assert _successes(cls, 5) >= 18

    @pytest.mark.xfail(strict=True, reason="measured 0/20 for both at dimension 10")
    @pytest.mark.parametrize("cls", [SimulatedAnnealingAgent, CrossEntropyAgent])
    def test_synthetic_objective_dim10(self, cls):
        assert _successes(cls, 10) >= 18

    def test_through_falsify(self):
        # output y is 100 until the last step, then the accumulated |u - c|;
        # G (y >= 0) is never violated, and the episode objective is the sum
        class Synthetic:
            input_schema = Schema([Signal("u")])
            output_schema = Schema([Signal("y")])
            input_bounds = ((0.0, 1.0),)
            c = (0.2, 0.9)

            def reset(self):
                self.k, self.s = 0, 0.0
                return np.array([100.0])

            def step(self, u, dt):
                self.s += abs(float(u[0]) - self.c[self.k])
                self.k += 1
                return np.array([self.s if self.k == len(self.c) else 100.0])

        psi = LifeLongProperty(Comparison("y", ">=", 0.0))
        agent = SimulatedAnnealingAgent([(0.0, 1.0)], 2, seed=4)
        res = falsify(Synthetic(), agent, psi, 1.0, 2.0, 200)
        assert res.outcome == "exhausted"
        assert min(e.min_rho for e in res.episodes) < 0.1
        assert agent.best_objective == pytest.approx(min(e.min_rho for e in res.episodes), abs=1e-9)

    def test_replays_theta_within_episode(self):
        a = CrossEntropyAgent(AT_BOUNDS, 4, seed=0)
        theta = a.ask().copy()
        got = np.array([a.step(None, -0.5) for _ in range(4)])
        assert np.array_equal(got, theta)

    def test_objective_ignores_first_reward(self):
        a = SimulatedAnnealingAgent([(0.0, 1.0)], 2, seed=0)
        a.step(None, 0.0)  # loop's initial r = 0 would mean rho = 0
        a.step(None, reward(3.0))
        a.reset(None, reward(5.0))
        assert a.best_objective == pytest.approx(3.0)

    def test_sa_acceptance_rule(self):
        acc = SimulatedAnnealingAgent.accept_probability
        assert acc(-1.0, 1.0) == 1.0
        assert acc(-1e-9, 0.0) == 1.0
        assert acc(1.0, 1e-6) < 1e-100
        assert acc(1.0, 0.0) == 0.0
        assert acc(1.0, 1.0) == pytest.approx(math.exp(-1))

    def test_sa_always_accepts_improvement(self):
        a = SimulatedAnnealingAgent([(0.0, 1.0)], 3, seed=0)
        a.tell(5.0)
        for k in range(20):
            proposal = a.ask().copy()
            a.tell(4.0 - k * 0.1)
            assert np.array_equal(a.current, proposal)

    def test_sa_cooling(self):
        a = SimulatedAnnealingAgent([(0.0, 1.0)], 3, seed=0)
        for k in range(10):
            a.tell(1.0)
        assert a.temperature == pytest.approx(0.97 ** 9)

    def test_ce_refit_identical_elites(self):
        a = CrossEntropyAgent(AT_BOUNDS, 3, seed=0)
        star = np.array([[10.0, 20.0], [30.0, 40.0], [50.0, 60.0]])
        a.refit([star, star])
        assert np.array_equal(a.mean, star)
        assert np.array_equal(a.sigma, a.sigma_floor)

    def test_ce_sigma_floor_after_every_generation(self):
        a = CrossEntropyAgent(AT_BOUNDS, 3, seed=0)
        for k in range(200):
            a.tell(float(np.abs(a.ask()).sum()))
            assert np.all(a.sigma >= a.sigma_floor)
        assert a.generation == 20

    def test_ce_population_check(self):
        with pytest.raises(ValueError):
            CrossEntropyAgent(AT_BOUNDS, 3, population=3)

    @pytest.mark.parametrize("cls", [SimulatedAnnealingAgent, CrossEntropyAgent])
    def test_reproducible_given_seed_and_objectives(self, cls):
        def thetas(seed):
            a = cls(AT_BOUNDS, 4, seed=seed)
            out = []
            for k in range(30):
                out.append(a.ask().copy())
                a.tell(float((k * 7919) % 13))
            return out

        assert all(np.array_equal(x, y) for x, y in zip(thetas(5), thetas(5)))
        assert not all(np.array_equal(x, y) for x, y in zip(thetas(5), thetas(6)))


bounds_st = st.lists(
    st.tuples(st.floats(-1e6, 1e6), st.floats(0, 1e6)).map(lambda t: (t[0], t[0] + t[1])),
    min_size=1, max_size=3)


@given(bounds_st, st.integers(0, 2 ** 16), st.sampled_from(["random", "q", "sa", "ce"]))
def test_every_action_inside_bounds(bounds, seed, kind):
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    if kind == "random":
        a = RandomAgent(bounds, seed)
    elif kind == "q":
        a = DoubleQAgent(bounds, Discretizer([0.0], [1.0], 3), seed=seed, grid=3)
    elif kind == "sa":
        a = SimulatedAnnealingAgent(bounds, 3, seed=seed, sigma_frac=5.0)
    else:
        a = CrossEntropyAgent(bounds, 3, seed=seed, sigma_init_frac=5.0)
    for ep in range(6):
        for k in range(3):
            u = a.step(np.array([0.3]), -0.5)
            assert u.shape == lo.shape and np.all(u >= lo) and np.all(u <= hi)
        a.reset(np.array([0.3]), -0.5)


@pytest.mark.parametrize("kind", ["random", "q", "sa", "ce"])
def test_snapshot_round_trip(kind, tmp_path):
    model = SurrogateAT()
    a = make_agent({"kind": kind}, model, 5, seed=3, episodes=20)
    rng = np.random.default_rng(0)
    for ep in range(7):
        x = model.reset()
        r = 0.0
        for k in range(5):
            x = model.step(a.step(x, r), 1.0)
            r = reward(float(rng.normal()))
        if ep < 6:
            a.reset(x, r)
    save_agent(a, tmp_path / "agent.json")
    b = load_agent(tmp_path / "agent.json")
    assert snapshot(b) == snapshot(a)
    assert snapshot(restore(snapshot(b))) == snapshot(a)
    # restored agents continue identically
    for k in range(5):
        assert np.array_equal(a.step(x, -0.3), b.step(x, -0.3))
    a.reset(x, -0.2)
    b.reset(x, -0.2)
    assert snapshot(a) == snapshot(b)


def test_snapshot_header_checked():
    snap = snapshot(RandomAgent(AT_BOUNDS, seed=0))
    with pytest.raises(ValueError, match="version"):
        restore({**snap, "version": 99})
    with pytest.raises(ValueError):
        restore({**snap, "format": "other"})


def test_make_agent_unknown_kind():
    with pytest.raises(ValueError, match="unknown agent kind"):
        make_agent({"kind": "a3c"}, SurrogateAT(), 5)

