"""Per-F-AP DDQN agent: state/action encoding, reward, replay memory and targets."""
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import ConfigurationError, DomainError, DuplicateCacheError
from app.core.neural import QNetwork, sync_target

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentState:
    """Cache slot list q (0 = empty slot) plus the requested file."""

    cached_ids: Tuple[int, ...]
    requested: int

    def validate(self, library_size: int) -> None:
        files = [f for f in self.cached_ids if f]
        if len(set(files)) != len(files):
            raise DuplicateCacheError(f"duplicate cached ids {self.cached_ids}")
        if not 1 <= self.requested <= library_size:
            raise DomainError(f"requested file {self.requested} outside 1..{library_size}")

    @property
    def capacity(self) -> int:
        return len(self.cached_ids)

    def is_hit(self) -> bool:
        return self.requested in self.cached_ids


@dataclass(frozen=True)
class Transition:
    """One replay record [s, a, R, s', C].

    ``global_reward`` holds the cooperative reward for the MARL agent and the
    agent's own local reward for the independent baselines.
    """

    state: AgentState
    action: int
    global_reward: float
    next_state: AgentState
    neighbor_count: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.global_reward) or self.global_reward <= 0:
            raise DomainError(f"reward must be finite and positive, got {self.global_reward}")
        if self.neighbor_count < 0:
            raise DomainError(f"neighbor_count must be non-negative, got {self.neighbor_count}")


class ReplayMemory:
    """Fixed-capacity ring buffer, oldest record evicted first."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ConfigurationError("replay capacity must be positive")
        self.capacity = capacity
        self.records: Deque[Transition] = deque(maxlen=capacity)

    def push(self, transition: Transition) -> None:
        self.records.append(transition)

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        """Uniform sample without replacement."""
        idx = rng.choice(len(self.records), size=batch_size, replace=False)
        return [self.records[int(i)] for i in idx]

    def __len__(self) -> int:
        return len(self.records)


def encode_state(state: AgentState, library_size: int) -> np.ndarray:
    """Cached ids and the requested id scaled by 1/F; empty slots encode 0."""
    values = np.asarray(state.cached_ids + (state.requested,), dtype=float)
    return values / float(library_size)


def valid_actions(state: AgentState) -> np.ndarray:
    """
    Mask over actions 0..S.

    Replacement would duplicate the requested file when it is already cached,
    so only action 0 stays valid then.
    """
    mask = np.ones(state.capacity + 1, dtype=bool)
    if state.is_hit():
        mask[1:] = False
    return mask


def apply_action(state: AgentState, action: int) -> AgentState:
    """
    Action 0 keeps the cache; action s writes the requested file into slot s.

    Raises:
        DuplicateCacheError: The requested file is already cached at this F-AP
    """
    if not 0 <= action <= state.capacity:
        raise DomainError(f"action {action} outside 0..{state.capacity}")
    if action == 0:
        return state
    if state.is_hit():
        raise DuplicateCacheError(
            f"file {state.requested} already cached in {state.cached_ids}"
        )
    slots = list(state.cached_ids)
    slots[action - 1] = state.requested
    return AgentState(cached_ids=tuple(slots), requested=state.requested)


def local_reward(
    popularity: np.ndarray,
    delays: np.ndarray,
    z1: np.ndarray,
    lam: float,
    time_unit: float = 1.0,
) -> float:
    """
    Popularity-weighted exponential reward of one F-AP.

    Args:
        popularity: P[n, f] over the library
        delays: d[n, f] on the current joint cache
        z1: Access delay per file
        lam: Normalization factor, 0 < lam <= 1
        time_unit: Seconds per delay unit inside the exponent

    Returns:
        float: sum_f P[f] * exp(-lam * (d[f] - z1[f]) / time_unit)
    """
    if not 0 < lam <= 1:
        raise ConfigurationError(f"lambda must satisfy 0 < lambda <= 1, got {lam}")
    excess = (np.asarray(delays) - np.asarray(z1)) / time_unit
    return float(np.sum(np.asarray(popularity) * np.exp(-lam * excess)))


TargetRule = Callable[["DdqnAgent", Transition], float]


class DdqnAgent:
    """One F-AP's learner: current and target nets, replay memory, counters."""

    def __init__(
        self,
        capacity: int,
        library_size: int,
        rng: np.random.Generator,
        hidden_layers: Sequence[int] = (64, 64),
        learning_rate: float = 0.001,
        discount: float = 0.9,
        sync_interval: int = 100,
        replay_capacity: int = 10_000,
        epsilon: float = 1.0,
        grad_clip: Optional[float] = 1.0,
        sync_on: str = "step",
        target_rule: Optional[TargetRule] = None,
    ):
        if not 0 <= discount < 1:
            raise ConfigurationError("discount must satisfy 0 <= gamma < 1")
        if sync_interval <= 0:
            raise ConfigurationError("sync interval must be positive")
        self.capacity = capacity
        self.library_size = library_size
        self.rng = rng
        self.current_net = QNetwork(
            [capacity + 1, *hidden_layers, capacity + 1],
            learning_rate=learning_rate,
            rng=rng,
            grad_clip=grad_clip,
        )
        self.target_net = sync_target(self.current_net)
        self.memory = ReplayMemory(replay_capacity)
        self.discount = discount
        self.sync_interval = sync_interval
        self.sync_on = sync_on
        self.epsilon = epsilon
        self.target_rule: TargetRule = target_rule or ddqn_target
        self.step_count = 0
        self.skipped_learns = 0

    @property
    def epsilon(self) -> float:
        return self._epsilon

    @epsilon.setter
    def epsilon(self, value: float) -> None:
        if not 0 <= value <= 1:
            raise DomainError(f"epsilon must lie in [0, 1], got {value}")
        self._epsilon = float(value)

    def encode(self, state: AgentState) -> np.ndarray:
        return encode_state(state, self.library_size)

    def greedy_action(self, net: QNetwork, state: AgentState) -> int:
        """Argmax over valid actions, ties to the lowest index."""
        q = net.forward(self.encode(state)).copy()
        q[~valid_actions(state)] = -np.inf
        return int(np.argmax(q))

    def remember(self, transition: Transition) -> None:
        self.memory.push(transition)

    def sync(self) -> None:
        self.target_net = sync_target(self.current_net)

    def on_slot_end(self, t: int) -> None:
        """Slot-clocked target refresh when ``sync_on == "slot"``."""
        if self.sync_on == "slot" and t % self.sync_interval == 0:
            self.sync()


def select_action(
    agent: DdqnAgent, state: AgentState, rng: Optional[np.random.Generator] = None
) -> int:
    """
    Epsilon-greedy action over the valid actions of ``state``.

    Exploration draws uniformly among valid actions; exploitation takes the
    current net's argmax with ties going to the lowest index.
    """
    rng = rng if rng is not None else agent.rng
    mask = valid_actions(state)
    if rng.random() < agent.epsilon:
        choices = np.flatnonzero(mask)
        return int(choices[rng.integers(choices.size)])
    return agent.greedy_action(agent.current_net, state)


def ddqn_target(agent: DdqnAgent, transition: Transition) -> float:
    """r + gamma * Q_target(s', a') with a' chosen by the current net at s'."""
    s_next = transition.next_state
    a_next = agent.greedy_action(agent.current_net, s_next)
    value = agent.target_net.forward(agent.encode(s_next))[a_next]
    return float(transition.global_reward + agent.discount * value)


def learn_batch(
    agent: DdqnAgent, batch_size: int, rng: Optional[np.random.Generator] = None
) -> Optional[float]:
    """
    Sample a mini-batch and take one SGD step per record.

    Targets for the whole batch are computed before any step. Every call
    that trains counts one agent step; the target net refreshes on multiples
    of the sync interval.

    Returns:
        Optional[float]: Mean pre-step loss, or None when memory is too small
    """
    rng = rng if rng is not None else agent.rng
    if len(agent.memory) < batch_size:
        agent.skipped_learns += 1
        log = logger.warning if agent.skipped_learns == 1 else logger.debug
        log(f"Skipping learn: memory {len(agent.memory)} < batch {batch_size}")
        return None
    batch = agent.memory.sample(batch_size, rng)
    targets = [agent.target_rule(agent, tr) for tr in batch]
    losses = [
        agent.current_net.train_step(agent.encode(tr.state), tr.action, target)
        for tr, target in zip(batch, targets)
    ]
    agent.step_count += 1
    if agent.sync_on == "step" and agent.step_count % agent.sync_interval == 0:
        agent.sync()
    return float(np.mean(losses))
