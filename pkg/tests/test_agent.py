import itertools
import math
import os
import sys
import unittest
from collections import Counter

import numpy as np

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.core.agent import (
    AgentState,
    DdqnAgent,
    ReplayMemory,
    Transition,
    apply_action,
    ddqn_target,
    encode_state,
    learn_batch,
    local_reward,
    select_action,
    valid_actions,
)
from app.core.baselines import independent_dqn_target
from app.core.exceptions import ConfigurationError, DomainError, DuplicateCacheError


def _linear_agent(capacity=1, library_size=2, discount=0.5, seed=0, **kwargs):
    return DdqnAgent(
        capacity=capacity,
        library_size=library_size,
        rng=np.random.default_rng(seed),
        hidden_layers=(),
        discount=discount,
        **kwargs,
    )


def _set_biases(net, biases):
    net.weights = [np.zeros_like(w) for w in net.weights]
    net.biases[-1] = np.asarray(biases, dtype=float)


def discriminator_agent():
    """Two-action agent whose current and target nets disagree on the best action."""
    agent = _linear_agent()
    _set_biases(agent.current_net, [0.0, 1.0])
    _set_biases(agent.target_net, [5.0, 2.0])
    transition = Transition(
        state=AgentState((0,), 1),
        action=1,
        global_reward=1.0,
        next_state=AgentState((0,), 2),
    )
    return agent, transition


class TestStateAndActions(unittest.TestCase):
    """Test cases for state encoding and cache replacement."""

    def test_encoding_boundaries(self):
        """Test the 1/F scaling of slots and request."""
        np.testing.assert_array_equal(encode_state(AgentState((0, 0), 7), 7), [0.0, 0.0, 1.0])
        np.testing.assert_array_equal(encode_state(AgentState((1,), 1), 2), [0.5, 0.5])

    def test_encoding_injective(self):
        """Test that all valid states at F=5, S=2 encode distinctly."""
        seen = set()
        for slots in itertools.product(range(6), repeat=2):
            files = [f for f in slots if f]
            if len(set(files)) != len(files):
                continue
            for f in range(1, 6):
                key = tuple(encode_state(AgentState(slots, f), 5))
                self.assertNotIn(key, seen)
                seen.add(key)

    def test_apply_action(self):
        """Test keep, replace and duplicate rejection."""
        state = AgentState((3, 7), 9)
        self.assertEqual(apply_action(state, 0), state)
        self.assertEqual(apply_action(state, 2).cached_ids, (3, 9))
        with self.assertRaises(DuplicateCacheError):
            apply_action(AgentState((3, 7), 7), 1)
        with self.assertRaises(DomainError):
            apply_action(state, 3)

    def test_valid_actions_mask_hits(self):
        """Test that a cached request only allows action 0."""
        np.testing.assert_array_equal(valid_actions(AgentState((3, 7), 7)), [True, False, False])
        self.assertTrue(valid_actions(AgentState((3, 7), 1)).all())

    def test_random_action_sequences_keep_constraints(self):
        """Test capacity and uniqueness over 10^4 random action sequences."""
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            capacity = int(rng.integers(1, 5))
            library = int(rng.integers(capacity, 9))
            state = AgentState((0,) * capacity, 1)
            for _ in range(10):
                state = AgentState(state.cached_ids, int(rng.integers(1, library + 1)))
                choices = np.flatnonzero(valid_actions(state))
                state = apply_action(state, int(rng.choice(choices)))
                files = [f for f in state.cached_ids if f]
                self.assertLessEqual(len(files), capacity)
                self.assertEqual(len(set(files)), len(files))


class TestLocalReward(unittest.TestCase):
    """Test cases for the exponential local reward."""

    def test_all_local_hits(self):
        """Test that zero excess delay yields reward 1."""
        pop = np.array([0.2, 0.3, 0.5])
        z1 = np.array([0.1, 0.2, 0.3])
        self.assertAlmostEqual(local_reward(pop, z1, z1, 1.0), 1.0)

    def test_hand_exponential(self):
        """Test exp(-ln 2) = 0.5 for one file."""
        self.assertAlmostEqual(
            local_reward(np.array([1.0]), np.array([1.0 + math.log(2)]), np.array([1.0]), 1.0), 0.5
        )

    def test_small_lambda_limit(self):
        """Test that the reward tends to 1 as lambda vanishes."""
        reward = local_reward(np.array([0.5, 0.5]), np.array([5.0, 9.0]), np.zeros(2), 1e-12)
        self.assertAlmostEqual(reward, 1.0, places=9)

    def test_time_unit_scales_exponent(self):
        """Test that a millisecond unit equals pre-scaled delays."""
        a = local_reward(np.array([1.0]), np.array([0.002]), np.array([0.001]), 1.0, time_unit=1e-3)
        self.assertAlmostEqual(a, math.exp(-1.0))

    def test_lambda_out_of_range(self):
        """Test that lambda must lie in (0, 1]."""
        for lam in (0.0, 1.5):
            with self.assertRaises(ConfigurationError):
                local_reward(np.array([1.0]), np.array([1.0]), np.array([1.0]), lam)

    def test_bounds(self):
        """Test 0 < r <= 1 for random normalized inputs with d >= Z1."""
        rng = np.random.default_rng(1)
        for _ in range(100):
            pop = rng.dirichlet(np.ones(6))
            z1 = rng.uniform(0, 1, 6)
            d = z1 + rng.uniform(0, 3, 6)
            r = local_reward(pop, d, z1, float(rng.uniform(0.01, 1.0)))
            self.assertGreater(r, 0.0)
            self.assertLessEqual(r, 1.0 + 1e-12)


class TestSelection(unittest.TestCase):
    """Test cases for epsilon-greedy selection."""

    def test_greedy_follows_net(self):
        """Test that epsilon 0 takes the hand-favored action."""
        agent = _linear_agent(capacity=3, library_size=10, epsilon=0.0)
        _set_biases(agent.current_net, [0.0, 0.0, 1.0, 0.0])
        state = AgentState((1, 2, 3), 4)
        self.assertTrue(all(select_action(agent, state) == 2 for _ in range(50)))

    def test_ties_go_to_action_zero(self):
        """Test the lowest-index tie-break."""
        agent = _linear_agent(capacity=3, library_size=10, epsilon=0.0)
        _set_biases(agent.current_net, [1.0, 1.0, 1.0, 1.0])
        self.assertEqual(select_action(agent, AgentState((1, 2, 3), 4)), 0)

    def test_uniform_exploration(self):
        """Test that epsilon 1 explores each action with frequency 1/(S+1)."""
        agent = _linear_agent(capacity=3, library_size=10, epsilon=1.0)
        state = AgentState((1, 2, 3), 4)
        counts = Counter(select_action(agent, state) for _ in range(100_000))
        for a in range(4):
            self.assertAlmostEqual(counts[a] / 100_000, 0.25, delta=0.01)

    def test_exploration_respects_mask(self):
        """Test that a cached request never explores a replacement."""
        agent = _linear_agent(capacity=3, library_size=10, epsilon=1.0)
        state = AgentState((1, 2, 3), 2)
        self.assertTrue(all(select_action(agent, state) == 0 for _ in range(200)))

    def test_scaling_outputs_keeps_argmax(self):
        """Test that positive rescaling does not change the greedy choice."""
        agent = DdqnAgent(3, 10, np.random.default_rng(2), hidden_layers=(8,), epsilon=0.0)
        state = AgentState((1, 0, 3), 4)
        first = select_action(agent, state)
        agent.current_net.weights[-1] *= 3.0
        agent.current_net.biases[-1] *= 3.0
        self.assertEqual(select_action(agent, state), first)

    def test_epsilon_range(self):
        """Test that epsilon outside [0, 1] is rejected."""
        agent = _linear_agent()
        with self.assertRaises(DomainError):
            agent.epsilon = 1.5


class TestTargets(unittest.TestCase):
    """Test cases for the double-DQN target."""

    def test_zero_discount(self):
        """Test that gamma 0 gives the reward."""
        agent, tr = discriminator_agent()
        agent.discount = 0.0
        self.assertEqual(ddqn_target(agent, tr), 1.0)

    def test_zero_target_net(self):
        """Test that an all-zero target net gives the reward."""
        agent, tr = discriminator_agent()
        _set_biases(agent.target_net, [0.0, 0.0])
        self.assertEqual(ddqn_target(agent, tr), 1.0)

    def test_discriminates_from_dqn(self):
        """Test the hand example where current and target argmax differ."""
        agent, tr = discriminator_agent()
        # a' = 1 from the current net, valued 2 on the target net; DQN takes max 5
        self.assertAlmostEqual(ddqn_target(agent, tr), 1.0 + 0.5 * 2.0)
        self.assertAlmostEqual(independent_dqn_target(agent, tr), 1.0 + 0.5 * 5.0)
        self.assertNotEqual(ddqn_target(agent, tr), independent_dqn_target(agent, tr))


class TestReplayAndLearning(unittest.TestCase):
    """Test cases for replay memory and mini-batch learning."""

    def _fill(self, agent, count, seed=0):
        rng = np.random.default_rng(seed)
        for _ in range(count):
            s = AgentState((int(rng.integers(0, 3)), 0), int(rng.integers(3, 6)))
            a = int(rng.integers(0, 3))
            s2 = apply_action(s, a)
            agent.remember(Transition(s, a, 0.1 + float(rng.random()), AgentState(s2.cached_ids, 1)))

    def test_memory_evicts_oldest(self):
        """Test the fixed-capacity ring buffer."""
        memory = ReplayMemory(2)
        records = [Transition(AgentState((0,), f), 0, 0.5, AgentState((0,), f)) for f in (1, 2, 3)]
        for r in records:
            memory.push(r)
        self.assertEqual(list(memory.records), records[1:])

    def test_transition_rejects_bad_reward(self):
        """Test that rewards must be finite and positive."""
        with self.assertRaises(DomainError):
            Transition(AgentState((0,), 1), 0, float("nan"), AgentState((0,), 1))
        with self.assertRaises(DomainError):
            Transition(AgentState((0,), 1), 0, -1.0, AgentState((0,), 1))
        with self.assertRaises(DomainError):
            Transition(AgentState((0,), 1), 0, 0.0, AgentState((0,), 1))

    def test_small_memory_skips(self):
        """Test that learning is a reported no-op until a batch is available."""
        agent = DdqnAgent(2, 6, np.random.default_rng(0), hidden_layers=(4,))
        self._fill(agent, 3)
        before = agent.current_net.copy()
        with self.assertLogs("app.core.agent", level="WARNING") as logs:
            self.assertIsNone(learn_batch(agent, 4))
        self.assertIn("Skipping learn", logs.output[0])
        self.assertTrue(agent.current_net.equals(before))
        self.assertEqual(agent.skipped_learns, 1)
        self.assertEqual(agent.step_count, 0)

    def test_consistent_batch_has_zero_loss(self):
        """Test identical transitions whose target already equals the prediction."""
        agent = _linear_agent(capacity=1, library_size=2, discount=0.0)
        _set_biases(agent.current_net, [0.25, 0.0])
        tr = Transition(AgentState((1,), 1), 0, 0.25, AgentState((1,), 1))
        for _ in range(4):
            agent.remember(tr)
        self.assertEqual(learn_batch(agent, 4), 0.0)

    def test_learning_is_deterministic(self):
        """Test bit-identical weights for a fixed seed and memory."""
        nets = []
        for _ in range(2):
            agent = DdqnAgent(2, 6, np.random.default_rng(7), hidden_layers=(8,))
            self._fill(agent, 40)
            for _ in range(5):
                learn_batch(agent, 8)
            nets.append(agent.current_net)
        self.assertTrue(nets[0].equals(nets[1]))

    def test_target_constant_between_syncs(self):
        """Test the step-clocked target refresh every nu learning steps."""
        agent = DdqnAgent(2, 6, np.random.default_rng(3), hidden_layers=(8,), sync_interval=3)
        self._fill(agent, 20)
        initial = agent.target_net.copy()
        for _ in range(2):
            learn_batch(agent, 4)
            self.assertTrue(agent.target_net.equals(initial))
        self.assertFalse(agent.current_net.equals(initial))
        learn_batch(agent, 4)
        self.assertTrue(agent.target_net.equals(agent.current_net))

    def test_slot_clocked_sync(self):
        """Test that slot mode ignores learning steps and syncs on slot multiples."""
        agent = DdqnAgent(
            2, 6, np.random.default_rng(4), hidden_layers=(8,), sync_interval=2, sync_on="slot"
        )
        self._fill(agent, 20)
        initial = agent.target_net.copy()
        for _ in range(4):
            learn_batch(agent, 4)
        self.assertTrue(agent.target_net.equals(initial))
        agent.on_slot_end(1)
        self.assertTrue(agent.target_net.equals(initial))
        agent.on_slot_end(2)
        self.assertTrue(agent.target_net.equals(agent.current_net))


if __name__ == "__main__":
    unittest.main()
