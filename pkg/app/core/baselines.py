"""Benchmark schemes: LRU replacement, independent Q-learning and independent DQN.

None of them communicates with other F-APs; the learners use their own
local reward.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from app.core.agent import (
    AgentState,
    DdqnAgent,
    Transition,
    apply_action,
    learn_batch,
    select_action,
    valid_actions,
)
from app.core.config import SimConfig
from app.core.environment import CachingScheme, Evaluator, SlotDraw, SlotOutcome
from app.core.exceptions import DomainError, TableCapacityError
from app.core.marl import build_agents
from app.core.topology import Topology

logger = logging.getLogger(__name__)

StateKey = Tuple[Tuple[int, ...], int]


# LRU


@dataclass(frozen=True)
class LruState:
    """Cached files, most recently used first."""

    capacity: int
    entries: Tuple[int, ...] = ()


def lru_access(state: LruState, file: int) -> LruState:
    """Hit moves the file to the front; a miss inserts it there, evicting the tail when full."""
    if file < 1:
        raise DomainError(f"invalid file id {file}")
    rest = tuple(e for e in state.entries if e != file)
    if len(rest) == len(state.entries) and len(rest) >= state.capacity:
        rest = rest[: state.capacity - 1]
    return LruState(capacity=state.capacity, entries=(file,) + rest)


class LruScheme(CachingScheme):
    name = "lru"

    def __init__(self, config: SimConfig, topology: Topology, evaluator: Evaluator):
        super().__init__(config, topology, evaluator)
        self.states = [LruState(capacity=config.cache_capacity) for _ in range(topology.n_faps)]

    def run_slot(self, draw: SlotDraw, next_draw: SlotDraw) -> SlotOutcome:
        for n in range(self.topology.n_faps):
            self.states[n] = lru_access(self.states[n], int(draw.requests[n]))
            self.cache.set_row(n, self.states[n].entries)
        return SlotOutcome()


# Independent tabular Q-learning


@dataclass
class TabularQ:
    """Q-table over compressed states; missing entries read as 0."""

    n_actions: int
    learning_rate: float
    discount: float
    cap: int = 1_000_000
    table: Dict[StateKey, np.ndarray] = field(default_factory=dict)

    def values(self, key: StateKey) -> np.ndarray:
        row = self.table.get(key)
        return row if row is not None else np.zeros(self.n_actions)

    def _row(self, key: StateKey) -> np.ndarray:
        row = self.table.get(key)
        if row is None:
            if len(self.table) >= self.cap:
                raise TableCapacityError(
                    f"Q-table reached its cap of {self.cap} states; "
                    "shrink library_size or cache_capacity, or raise iql_table_cap"
                )
            row = np.zeros(self.n_actions)
            self.table[key] = row
        return row


def state_key(state: AgentState) -> StateKey:
    return tuple(sorted(state.cached_ids)), state.requested


def iql_update(
    q: TabularQ,
    s: AgentState,
    a: int,
    r: float,
    s_next: AgentState,
) -> TabularQ:
    """
    Tabular step Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)).

    The max runs over the valid actions of s'.
    """
    if not np.isfinite(r):
        raise DomainError(f"non-finite reward {r}")
    next_values = q.values(state_key(s_next))[valid_actions(s_next)]
    best_next = float(next_values.max())
    row = q._row(state_key(s))
    row[a] += q.learning_rate * (r + q.discount * best_next - row[a])
    return q


def canonical(slots: Tuple[int, ...]) -> Tuple[int, ...]:
    """Sorted slot list (empty slots first) so keys and slot indices agree."""
    return tuple(sorted(slots))


class IqlScheme(CachingScheme):
    name = "iql"

    def __init__(
        self,
        config: SimConfig,
        topology: Topology,
        evaluator: Evaluator,
        seed_seq: np.random.SeedSequence,
    ):
        super().__init__(config, topology, evaluator)
        self.tables = [
            TabularQ(
                n_actions=config.cache_capacity + 1,
                learning_rate=config.iql_learning_rate,
                discount=config.gamma,
                cap=config.iql_table_cap,
            )
            for _ in range(topology.n_faps)
        ]
        self.rngs = [np.random.default_rng(s) for s in seed_seq.spawn(topology.n_faps)]

    def _select(self, n: int, state: AgentState, epsilon: float) -> int:
        mask = valid_actions(state)
        rng = self.rngs[n]
        if rng.random() < epsilon:
            choices = np.flatnonzero(mask)
            return int(choices[rng.integers(choices.size)])
        values = self.tables[n].values(state_key(state)).copy()
        values[~mask] = -np.inf
        return int(np.argmax(values))

    def run_slot(self, draw: SlotDraw, next_draw: SlotDraw) -> SlotOutcome:
        epsilon = self.config.epsilon_at(draw.t)
        for n in range(self.topology.n_faps):
            state = AgentState(
                cached_ids=canonical(self.cache.row(n)), requested=int(draw.requests[n])
            )
            action = self._select(n, state, epsilon)
            after = apply_action(state, action)
            self.cache.set_row(n, canonical(after.cached_ids))
            reward = self.evaluator.local_rewards(self.cache, draw)[n]
            next_state = AgentState(
                cached_ids=self.cache.row(n), requested=int(next_draw.requests[n])
            )
            iql_update(self.tables[n], state, action, reward, next_state)
        return SlotOutcome()


# Independent DQN


def independent_dqn_target(agent: DdqnAgent, transition: Transition) -> float:
    """r + gamma * max_a Q_target(s', a), the max taken on the target net alone."""
    s_next = transition.next_state
    q = agent.target_net.forward(agent.encode(s_next)).copy()
    q[~valid_actions(s_next)] = -np.inf
    return float(transition.global_reward + agent.discount * q.max())


class DqnScheme(CachingScheme):
    name = "dqn"

    def __init__(
        self,
        config: SimConfig,
        topology: Topology,
        evaluator: Evaluator,
        seed_seq: np.random.SeedSequence,
    ):
        super().__init__(config, topology, evaluator)
        self.agents: List[DdqnAgent] = build_agents(
            config, seed_seq, agent_cls=DdqnAgent, target_rule=independent_dqn_target
        )

    def run_slot(self, draw: SlotDraw, next_draw: SlotDraw) -> SlotOutcome:
        outcome = SlotOutcome()
        epsilon = self.config.epsilon_at(draw.t)
        for n, agent in enumerate(self.agents):
            agent.epsilon = epsilon
            state = AgentState(cached_ids=self.cache.row(n), requested=int(draw.requests[n]))
            action = select_action(agent, state)
            if action:
                self.cache.set_row(n, apply_action(state, action).cached_ids)
            reward = self.evaluator.local_rewards(self.cache, draw)[n]
            next_state = AgentState(
                cached_ids=self.cache.row(n), requested=int(next_draw.requests[n])
            )
            agent.remember(Transition(state, action, reward, next_state, 0.0))
            loss = learn_batch(agent, self.config.batch_size)
            if loss is None:
                outcome.skipped_learns += 1
            else:
                outcome.losses.append(loss)
        for agent in self.agents:
            agent.on_slot_end(draw.t)
        return outcome
