"""Per-slot workload generation and evaluation of a joint cache state.

Every scheme in a run gets its own ``WorkloadGenerator`` built from the same
seed. The generator draws placement, channels, preferences and requests from
separate ``SeedSequence`` children that no scheme touches, so all schemes see
identical request and channel realizations.
"""
import abc
import hashlib
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.core.agent import local_reward
from app.core.config import SimConfig
from app.core.popularity import (
    PopularityVector,
    PreferenceProfile,
    advance_preferences,
    fap_popularity,
    preference_matrix,
    random_profile,
    sample_request,
)
from app.core.radio import (
    TIER_CLOUD,
    TIER_LOCAL,
    TIER_NEIGHBOR,
    CacheMatrix,
    RadioParams,
    access_delays,
    average_delay,
    delay_matrix,
    draw_channel,
    request_weighted_access_delay,
    tier_matrix,
)
from app.core.topology import Topology, UserLayout, place_users

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlotDraw:
    """Everything exogenous about one slot."""

    t: int
    layout: UserLayout
    gains: np.ndarray
    profile: PreferenceProfile
    popularity: np.ndarray
    z1: np.ndarray
    requests: np.ndarray


class WorkloadGenerator:
    """Seeded stream of SlotDraws for one run."""

    def __init__(self, config: SimConfig, topology: Topology, params: RadioParams):
        self.config = config
        self.topology = topology
        self.params = params
        root = np.random.SeedSequence(config.seed)
        placement, channel, preference, *requests = root.spawn(3 + topology.n_faps)
        self._placement_rng = np.random.default_rng(placement)
        self._channel_rng = np.random.default_rng(channel)
        self._preference_rng = np.random.default_rng(preference)
        self._request_rngs = [np.random.default_rng(s) for s in requests]
        self._hash = hashlib.sha256()
        self._layout: Optional[UserLayout] = None
        self._profile: Optional[PreferenceProfile] = None
        self.t = 0

    def _next_layout(self) -> UserLayout:
        if self._layout is None or self.config.user_mobility:
            self._layout = place_users(
                self.topology, self.config.users_per_fap, self._placement_rng
            )
        return self._layout

    def _next_profile(self, t: int) -> PreferenceProfile:
        tau = self.config.tau_at(t)
        if self._profile is None:
            n_users = self.topology.n_faps * self.config.users_per_fap
            self._profile = random_profile(
                n_users,
                self.config.library_size,
                tau,
                self._preference_rng,
                jitter=self.config.preference_jitter,
            )
        else:
            self._profile = advance_preferences(
                self._profile,
                self.config.consistent_preference,
                self._preference_rng,
                skewness=tau,
            )
        return self._profile

    def next_slot(self) -> SlotDraw:
        self.t += 1
        t = self.t
        layout = self._next_layout()
        profile = self._next_profile(t)
        gains = draw_channel(
            self.topology.n_faps, self.config.users_per_fap, self._channel_rng
        ).gains
        prefs = preference_matrix(profile)
        popularity = np.stack(
            [
                fap_popularity(
                    profile,
                    layout,
                    n,
                    aggregation=self.config.popularity_aggregation,
                    preferences=prefs,
                ).probs
                for n in range(self.topology.n_faps)
            ]
        )
        user_z1 = access_delays(self.params, gains, layout.distances)
        z1 = request_weighted_access_delay(prefs, user_z1, self.config.users_per_fap)
        requests = np.array(
            [
                sample_request(PopularityVector(popularity[n]), rng)
                for n, rng in enumerate(self._request_rngs)
            ],
            dtype=np.int64,
        )
        self._hash.update(requests.tobytes())
        self._hash.update(gains.tobytes())
        return SlotDraw(
            t=t,
            layout=layout,
            gains=gains,
            profile=profile,
            popularity=popularity,
            z1=z1,
            requests=requests,
        )

    def digest(self) -> str:
        """SHA-256 over every request and channel gain drawn so far."""
        return self._hash.hexdigest()


@dataclass(frozen=True)
class SlotMetrics:
    inst_delay: float
    global_reward: float
    hit_local: float
    hit_neighbor: float
    hit_cloud: float


class Evaluator:
    """Exact delay, reward and tier evaluation on a joint cache."""

    def __init__(self, config: SimConfig, topology: Topology, params: RadioParams):
        self.config = config
        self.topology = topology
        self.params = params

    def delays(self, cache: CacheMatrix, draw: SlotDraw) -> np.ndarray:
        return delay_matrix(cache, self.topology, self.params, draw.z1)

    def local_rewards(self, cache: CacheMatrix, draw: SlotDraw) -> List[float]:
        d = self.delays(cache, draw)
        return [
            local_reward(
                draw.popularity[n],
                d[n],
                draw.z1[n],
                self.config.lam,
                time_unit=self.config.reward_time_unit,
            )
            for n in range(self.topology.n_faps)
        ]

    def evaluate(self, cache: CacheMatrix, draw: SlotDraw) -> SlotMetrics:
        d = self.delays(cache, draw)
        tiers = tier_matrix(cache, self.topology)
        weights = draw.popularity / draw.popularity.sum()
        rewards = self.local_rewards(cache, draw)
        return SlotMetrics(
            inst_delay=average_delay(cache, draw.popularity, d),
            global_reward=float(np.sum(rewards)),
            hit_local=float(weights[tiers == TIER_LOCAL].sum()),
            hit_neighbor=float(weights[tiers == TIER_NEIGHBOR].sum()),
            hit_cloud=float(weights[tiers == TIER_CLOUD].sum()),
        )


@dataclass
class SlotOutcome:
    """What a scheme reports about its own learning during one slot."""

    losses: List[float] = field(default_factory=list)
    skipped_learns: int = 0


class CachingScheme(abc.ABC):
    """Common interface of the MARL scheme and the baselines.

    A scheme owns the joint cache and its agents; ``run_slot`` serves one
    request per F-AP and may look at ``next_draw`` to build next states.
    """

    name: str = ""

    def __init__(self, config: SimConfig, topology: Topology, evaluator: Evaluator):
        self.config = config
        self.topology = topology
        self.evaluator = evaluator
        self.cache = CacheMatrix(
            topology.n_faps, config.cache_capacity, config.library_size
        )

    @abc.abstractmethod
    def run_slot(self, draw: SlotDraw, next_draw: SlotDraw) -> SlotOutcome:
        """Serve slot ``draw.t`` and update the cache in place."""

    def close(self) -> None:
        """Release worker resources; most schemes hold none."""
