"""Cooperative multi-agent DDQN caching.

Agents exchange caching-history counters with their neighbors, learn from
the global reward, and scale their targets by how often neighbors already
cache the requested file.
"""
import logging
import math
from concurrent import futures
from dataclasses import dataclass
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from app.core.agent import (
    AgentState,
    DdqnAgent,
    Transition,
    apply_action,
    learn_batch,
    select_action,
)
from app.core.config import SimConfig
from app.core.environment import CachingScheme, Evaluator, SlotDraw, SlotOutcome
from app.core.exceptions import DomainError
from app.core.topology import Topology

logger = logging.getLogger(__name__)


@dataclass
class CacheCounters:
    """C[n, f - 1]: how many times agent n has cached file f so far."""

    counts: np.ndarray

    @classmethod
    def zeros(cls, n_faps: int, library_size: int) -> "CacheCounters":
        return cls(counts=np.zeros((n_faps, library_size), dtype=np.int64))

    def copy(self) -> "CacheCounters":
        return CacheCounters(counts=self.counts.copy())


@dataclass(frozen=True)
class GlobalRewardSample:
    value: float
    per_agent: Tuple[float, ...]


def update_counters(
    counters: CacheCounters,
    fap: int,
    requested: int,
    action: int,
    cached_ids: Sequence[int],
) -> CacheCounters:
    """
    Record one caching decision.

    Args:
        counters: Counters to update in place
        fap: Acting F-AP
        requested: File placed into the cache
        action: Chosen action, 0 keeps the cache
        cached_ids: Slot list of ``fap`` before the action

    Returns:
        CacheCounters: The same object, for chaining
    """
    if action == 0:
        return counters
    if not 1 <= action <= len(cached_ids):
        raise DomainError(f"action {action} outside 1..{len(cached_ids)}")
    counters.counts[fap, requested - 1] += 1
    evicted = int(cached_ids[action - 1])
    if evicted and evicted != requested:
        counters.counts[fap, evicted - 1] = 0
    return counters


def neighbor_observation(
    counters: CacheCounters,
    topology: Topology,
    fap: int,
    file: int,
    t: int,
    aggregation: str = "mean",
) -> float:
    """
    Neighbors' caching history of ``file`` normalized by the slot index.

    ``mean`` averages over neighbors (result in [0, 1]); ``sum`` adds them up.
    An F-AP without neighbors observes 0.
    """
    if t < 1:
        raise DomainError(f"slot index must be >= 1, got {t}")
    neighbors = topology.neighbors(fap)
    if not neighbors:
        return 0.0
    total = float(counters.counts[neighbors, file - 1].sum())
    if aggregation == "mean":
        total /= len(neighbors)
    return total / t


def global_reward(local_rewards: Sequence[float]) -> GlobalRewardSample:
    addends = tuple(float(r) for r in local_rewards)
    return GlobalRewardSample(value=math.fsum(addends), per_agent=addends)


class MarlAgent(DdqnAgent):
    """DDQN agent whose targets follow the counter-scaled cooperative rule."""

    def __init__(self, *args: Any, target_state: str = "next", **kwargs: Any) -> None:
        kwargs.setdefault("target_rule", marl_target)
        super().__init__(*args, **kwargs)
        self.target_state = target_state


def marl_target(agent: DdqnAgent, transition: Transition) -> float:
    """
    (R + gamma * Q_target(s*, a')) / (C + 1).

    a' is the current net's choice at s'. s* is s' by default, or s when the
    agent's ``target_state`` is ``current``.
    """
    s_next = transition.next_state
    a_next = agent.greedy_action(agent.current_net, s_next)
    mode = getattr(agent, "target_state", "next")
    s_eval = transition.state if mode == "current" else s_next
    value = agent.target_net.forward(agent.encode(s_eval))[a_next]
    inner = transition.global_reward + agent.discount * value
    return float(inner / (transition.neighbor_count + 1.0))


def build_agents(
    config: SimConfig, seed_seq: np.random.SeedSequence, agent_cls: type = MarlAgent, **kwargs
) -> List[DdqnAgent]:
    """One agent per F-AP, each with its own random stream."""
    return [
        agent_cls(
            capacity=config.cache_capacity,
            library_size=config.library_size,
            rng=np.random.default_rng(child),
            hidden_layers=config.hidden_layers,
            learning_rate=config.alpha,
            discount=config.gamma,
            sync_interval=config.nu,
            replay_capacity=config.replay_capacity,
            epsilon=config.epsilon_start,
            grad_clip=config.grad_clip,
            sync_on=config.sync_on,
            **kwargs,
        )
        for child in seed_seq.spawn(config.n_faps)
    ]


class MarlScheme(CachingScheme):
    """Joint learning over all F-APs, one request per F-AP per slot."""

    name = "marl"

    def __init__(
        self,
        config: SimConfig,
        topology: Topology,
        evaluator: Evaluator,
        seed_seq: np.random.SeedSequence,
    ):
        super().__init__(config, topology, evaluator)
        self.agents: List[DdqnAgent] = build_agents(
            config, seed_seq, target_state=config.target_state
        )
        self.counters = CacheCounters.zeros(topology.n_faps, config.library_size)
        self._neighbors = topology.neighbor_sets()
        self._executor: Optional[futures.ThreadPoolExecutor] = None
        self._snapshot = self.cache
        self._snapshot_counters = self.counters

    def _learners(self, fap: int) -> List[int]:
        return sorted([fap, *self._neighbors[fap]])

    def _learn(self, m: int, outcome: SlotOutcome) -> None:
        loss = learn_batch(self.agents[m], self.config.batch_size)
        if loss is None:
            outcome.skipped_learns += 1
        else:
            outcome.losses.append(loss)

    def run_slot(self, draw: SlotDraw, next_draw: SlotDraw) -> SlotOutcome:
        t = draw.t
        epsilon = self.config.epsilon_at(t)
        for agent in self.agents:
            agent.epsilon = epsilon
        if self.config.parallel_agents:
            outcome = self._run_slot_parallel(draw, next_draw)
        else:
            outcome = self._run_slot_sequential(draw, next_draw)
        for agent in self.agents:
            agent.on_slot_end(t)
        return outcome

    def _run_slot_sequential(self, draw: SlotDraw, next_draw: SlotDraw) -> SlotOutcome:
        outcome = SlotOutcome()
        t = draw.t
        for n, agent in enumerate(self.agents):
            f = int(draw.requests[n])
            before = self.cache.row(n)
            state = AgentState(cached_ids=before, requested=f)
            action = select_action(agent, state)
            if action:
                self.cache.set_row(n, apply_action(state, action).cached_ids)
            update_counters(self.counters, n, f, action, before)
            observation = neighbor_observation(
                self.counters, self.topology, n, f, t, self.config.observation_aggregation
            )
            reward = global_reward(self.evaluator.local_rewards(self.cache, draw))
            next_state = AgentState(
                cached_ids=self.cache.row(n), requested=int(next_draw.requests[n])
            )
            agent.remember(
                Transition(
                    state=state,
                    action=action,
                    global_reward=reward.value,
                    next_state=next_state,
                    neighbor_count=observation,
                )
            )
            for m in self._learners(n):
                self._learn(m, outcome)
        return outcome

    def _decide(
        self, n: int, draw: SlotDraw, next_draw: SlotDraw
    ) -> Tuple[int, AgentState, Tuple[int, ...], Transition]:
        """Act against the slot-start snapshot with only this agent's own action applied."""
        agent = self.agents[n]
        f = int(draw.requests[n])
        before = self._snapshot.row(n)
        state = AgentState(cached_ids=before, requested=f)
        action = select_action(agent, state)
        view = self._snapshot.copy()
        after = apply_action(state, action)
        view.set_row(n, after.cached_ids)
        observation = neighbor_observation(
            self._snapshot_counters,
            self.topology,
            n,
            f,
            draw.t,
            self.config.observation_aggregation,
        )
        reward = global_reward(self.evaluator.local_rewards(view, draw))
        next_state = AgentState(
            cached_ids=view.row(n), requested=int(next_draw.requests[n])
        )
        transition = Transition(state, action, reward.value, next_state, observation)
        return action, after, before, transition

    def _learn_all(self, m: int) -> SlotOutcome:
        outcome = SlotOutcome()
        # Agent m learns once for its own request and once per neighbor's request
        for _ in range(len(self._neighbors[m]) + 1):
            self._learn(m, outcome)
        return outcome

    def _run_slot_parallel(self, draw: SlotDraw, next_draw: SlotDraw) -> SlotOutcome:
        if self._executor is None:
            self._executor = futures.ThreadPoolExecutor(max_workers=len(self.agents))
        self._snapshot = self.cache.copy()
        self._snapshot_counters = self.counters.copy()
        decisions = list(
            self._executor.map(
                lambda n: self._decide(n, draw, next_draw), range(len(self.agents))
            )
        )
        # Barrier: commit every action against the live cache
        for n, (action, after, before, transition) in enumerate(decisions):
            f = int(draw.requests[n])
            self.cache.set_row(n, after.cached_ids)
            update_counters(self.counters, n, f, action, before)
            self.agents[n].remember(transition)
        outcome = SlotOutcome()
        for partial in self._executor.map(self._learn_all, range(len(self.agents))):
            outcome.losses.extend(partial.losses)
            outcome.skipped_learns += partial.skipped_learns
        return outcome

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
