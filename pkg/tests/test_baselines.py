import os
import sys
import unittest
from collections import OrderedDict

import numpy as np

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.core.agent import AgentState, DdqnAgent, Transition, ddqn_target
from app.core.baselines import (
    DqnScheme,
    IqlScheme,
    LruScheme,
    LruState,
    TabularQ,
    independent_dqn_target,
    iql_update,
    lru_access,
    state_key,
)
from app.core.config import SimConfig
from app.core.environment import Evaluator, WorkloadGenerator
from app.core.exceptions import TableCapacityError
from app.core.radio import RadioParams
from app.core.topology import build_topology


def reference_lru(capacity, stream):
    """Straightforward LRU on an OrderedDict; returns hits and final MRU-first order."""
    cache = OrderedDict()
    hits = []
    for f in stream:
        if f in cache:
            cache.move_to_end(f)
            hits.append(True)
        else:
            hits.append(False)
            if len(cache) >= capacity:
                cache.popitem(last=False)
            cache[f] = None
    return hits, tuple(reversed(list(cache)))


def _build(scheme_cls, **kwargs):
    base = dict(
        n_faps=2,
        users_per_fap=2,
        library_size=6,
        cache_capacity=2,
        horizon=40,
        hidden_layers=[8],
        batch_size=4,
        replay_capacity=200,
    )
    base.update(kwargs)
    config = SimConfig(**base)
    topology = build_topology(config)
    params = RadioParams.from_config(config)
    evaluator = Evaluator(config, topology, params)
    if scheme_cls is LruScheme:
        scheme = scheme_cls(config, topology, evaluator)
    else:
        scheme = scheme_cls(config, topology, evaluator, np.random.SeedSequence([config.seed, 2]))
    return scheme, WorkloadGenerator(config, topology, params)


def _drive(scheme, generator, slots):
    draw = generator.next_slot()
    for _ in range(slots):
        next_draw = generator.next_slot()
        scheme.run_slot(draw, next_draw)
        yield draw
        draw = next_draw


class TestLru(unittest.TestCase):
    """Test cases for least-recently-used replacement."""

    def test_textbook_streams(self):
        """Test the two hand streams."""
        state = LruState(2)
        for f in (1, 2, 3):
            state = lru_access(state, f)
        self.assertEqual(state.entries, (3, 2))
        state = LruState(2)
        for f in (1, 2, 1, 3):
            state = lru_access(state, f)
        self.assertEqual(state.entries, (3, 1))

    def test_matches_reference(self):
        """Test hit sequence and final state against an OrderedDict LRU."""
        rng = np.random.default_rng(0)
        for _ in range(200):
            capacity = int(rng.integers(1, 5))
            stream = [int(f) for f in rng.integers(1, 9, size=60)]
            state = LruState(capacity)
            hits = []
            for f in stream:
                hits.append(f in state.entries)
                state = lru_access(state, f)
            ref_hits, ref_state = reference_lru(capacity, stream)
            self.assertEqual(hits, ref_hits)
            self.assertEqual(state.entries, ref_state)

    def test_scheme_mirrors_lru_state(self):
        """Test that the joint cache follows each F-AP's LRU list."""
        scheme, generator = _build(LruScheme)
        for _ in _drive(scheme, generator, 20):
            scheme.cache.check()
            for n, state in enumerate(scheme.states):
                self.assertEqual(set(f for f in scheme.cache.row(n) if f), set(state.entries))


class TestTabularQ(unittest.TestCase):
    """Test cases for the independent Q-learning update."""

    def test_full_overwrite(self):
        """Test alpha=1, gamma=0 stores the reward."""
        q = TabularQ(n_actions=2, learning_rate=1.0, discount=0.0)
        s = AgentState((0,), 1)
        iql_update(q, s, 1, 0.8, AgentState((1,), 2))
        self.assertEqual(q.values(state_key(s))[1], 0.8)

    def test_zero_reward_stays_zero(self):
        """Test that r=0 on a zero table keeps it zero."""
        q = TabularQ(n_actions=2, learning_rate=0.5, discount=0.9)
        s = AgentState((0,), 1)
        iql_update(q, s, 0, 0.0, s)
        self.assertEqual(q.values(state_key(s))[0], 0.0)

    def test_two_state_fixed_point(self):
        """Test convergence to r / (1 - gamma) on a two-state chain."""
        q = TabularQ(n_actions=2, learning_rate=0.5, discount=0.9)
        a = AgentState((0,), 1)
        b = AgentState((0,), 2)
        for _ in range(2000):
            iql_update(q, a, 0, 1.0, b)
            iql_update(q, b, 0, 1.0, a)
        self.assertAlmostEqual(q.values(state_key(a))[0], 10.0, places=6)
        self.assertAlmostEqual(q.values(state_key(b))[0], 10.0, places=6)

    def test_max_uses_valid_actions(self):
        """Test that masked actions of s' do not leak into the bootstrap."""
        q = TabularQ(n_actions=2, learning_rate=1.0, discount=0.9)
        s_next = AgentState((2,), 2)
        q._row(state_key(s_next))[1] = 100.0
        s = AgentState((0,), 1)
        iql_update(q, s, 0, 1.0, s_next)
        self.assertAlmostEqual(q.values(state_key(s))[0], 1.0)

    def test_state_key_ignores_slot_order(self):
        """Test the sorted-tuple compression."""
        self.assertEqual(state_key(AgentState((3, 1), 2)), state_key(AgentState((1, 3), 2)))

    def test_table_cap(self):
        """Test that exceeding the cap raises TableCapacityError."""
        q = TabularQ(n_actions=2, learning_rate=0.5, discount=0.5, cap=1)
        iql_update(q, AgentState((0,), 1), 0, 1.0, AgentState((0,), 1))
        with self.assertRaises(TableCapacityError):
            iql_update(q, AgentState((0,), 2), 0, 1.0, AgentState((0,), 1))

    def test_scheme_is_deterministic(self):
        """Test identical tables and caches for two seeded runs."""
        results = []
        for _ in range(2):
            scheme, generator = _build(IqlScheme)
            for _ in _drive(scheme, generator, 30):
                scheme.cache.check()
            results.append((scheme.cache.q.copy(), {k: v.copy() for k, v in scheme.tables[0].table.items()}))
        np.testing.assert_array_equal(results[0][0], results[1][0])
        self.assertEqual(results[0][1].keys(), results[1][1].keys())
        for key in results[0][1]:
            np.testing.assert_array_equal(results[0][1][key], results[1][1][key])


class TestIndependentDqn(unittest.TestCase):
    """Test cases for the independent DQN baseline."""

    def _agent(self, target_biases, discount=0.5):
        agent = DdqnAgent(1, 2, np.random.default_rng(0), hidden_layers=(), discount=discount)
        for net, biases in ((agent.current_net, [0.0, 1.0]), (agent.target_net, target_biases)):
            net.weights = [np.zeros_like(w) for w in net.weights]
            net.biases[-1] = np.asarray(biases, dtype=float)
        return agent

    def _transition(self):
        return Transition(AgentState((0,), 1), 1, 1.0, AgentState((0,), 2))

    def test_zero_discount(self):
        """Test gamma 0 gives the local reward."""
        self.assertEqual(independent_dqn_target(self._agent([5.0, 2.0], 0.0), self._transition()), 1.0)

    def test_zero_target_net(self):
        """Test an all-zero target net gives the local reward."""
        self.assertEqual(independent_dqn_target(self._agent([0.0, 0.0]), self._transition()), 1.0)

    def test_differs_from_double_dqn(self):
        """Test the discriminating transition: max over target vs current-net argmax."""
        agent = self._agent([5.0, 2.0])
        tr = self._transition()
        self.assertEqual(independent_dqn_target(agent, tr), 3.5)
        self.assertEqual(ddqn_target(agent, tr), 2.0)

    def test_scheme_uses_local_reward(self):
        """Test that stored rewards are the acting F-AP's own reward."""
        scheme, generator = _build(DqnScheme)
        (draw,) = list(_drive(scheme, generator, 1))
        rewards = scheme.evaluator.local_rewards(scheme.cache, draw)
        # The last agent acted last, so its stored reward matches the final cache
        self.assertAlmostEqual(scheme.agents[-1].memory.records[0].global_reward, rewards[-1])
        self.assertEqual(scheme.agents[-1].memory.records[0].neighbor_count, 0.0)


class TestCapacitySafety(unittest.TestCase):
    """Test cases for cache constraints under every baseline."""

    def test_constraints_hold(self):
        """Test occupancy <= S and no duplicates after each slot."""
        for cls in (LruScheme, IqlScheme, DqnScheme):
            scheme, generator = _build(cls, horizon=60)
            for _ in _drive(scheme, generator, 50):
                scheme.cache.check()
                for n in range(scheme.cache.n_faps):
                    self.assertLessEqual(scheme.cache.occupancy(n), scheme.cache.capacity)


if __name__ == "__main__":
    unittest.main()
