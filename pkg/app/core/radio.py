"""Wireless rates, the three transmission-mode delays and the delay objective."""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from app.core.config import SimConfig
from app.core.exceptions import DomainError, DuplicateCacheError, NonPositiveRateError
from app.core.topology import Topology

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Tier codes used by tier_matrix
TIER_LOCAL = 0
TIER_NEIGHBOR = 1
TIER_CLOUD = 2


@dataclass(frozen=True)
class RadioParams:
    bandwidth: float
    tx_power: float
    noise_psd: float
    interference_power: float
    pathloss_exponent: float
    file_size: float
    backhaul_rate: float
    inter_fap_rate: float
    pathloss_mode: str = "power_law"
    coop_delay_mode: str = "literal"
    rate_floor: float = 1e3

    @classmethod
    def from_config(cls, config: SimConfig) -> "RadioParams":
        return cls(
            bandwidth=config.bandwidth,
            tx_power=config.tx_power,
            noise_psd=config.noise_psd,
            interference_power=config.interference_power,
            pathloss_exponent=config.pathloss_exponent,
            file_size=config.file_size,
            backhaul_rate=config.backhaul_rate,
            inter_fap_rate=config.inter_fap_rate,
            pathloss_mode=config.pathloss_mode,
            coop_delay_mode=config.coop_delay_mode,
            rate_floor=config.rate_floor,
        )


@dataclass(frozen=True)
class ChannelDraw:
    """Small-scale gains |h|^2, shape (N, users_per_fap)."""

    gains: np.ndarray


def draw_channel(n_faps: int, users_per_fap: int, rng: np.random.Generator) -> ChannelDraw:
    return ChannelDraw(gains=rng.exponential(1.0, size=(n_faps, users_per_fap)))


class CacheMatrix:
    """Joint cache state of all F-APs.

    ``q[n]`` is the ordered slot list of F-AP n (file ids, 0 = empty slot) and
    ``x[n, f - 1]`` the matching binary indicator. Both views are updated
    together, so they always agree.
    """

    def __init__(self, n_faps: int, capacity: int, library_size: int):
        self.n_faps = n_faps
        self.capacity = capacity
        self.library_size = library_size
        self.q = np.zeros((n_faps, capacity), dtype=np.int64)
        self.x = np.zeros((n_faps, library_size), dtype=bool)

    @classmethod
    def from_slots(cls, slots: Sequence[Sequence[int]], library_size: int) -> "CacheMatrix":
        n_faps = len(slots)
        capacity = max((len(row) for row in slots), default=0)
        cache = cls(n_faps, capacity, library_size)
        for n, row in enumerate(slots):
            cache.set_row(n, row)
        return cache

    def copy(self) -> "CacheMatrix":
        other = CacheMatrix(self.n_faps, self.capacity, self.library_size)
        other.q = self.q.copy()
        other.x = self.x.copy()
        return other

    def row(self, fap: int) -> tuple:
        return tuple(int(v) for v in self.q[fap])

    def contains(self, fap: int, file: int) -> bool:
        return bool(self.x[fap, file - 1])

    def occupancy(self, fap: int) -> int:
        return int(np.count_nonzero(self.q[fap]))

    def set_row(self, fap: int, slots: Sequence[int]) -> None:
        """Replace the whole slot list of one F-AP (padded with empty slots)."""
        if len(slots) > self.capacity:
            raise DomainError(f"F-AP {fap} slot list longer than capacity {self.capacity}")
        files = [int(f) for f in slots if f]
        if len(set(files)) != len(files):
            raise DuplicateCacheError(f"duplicate file in slot list {list(slots)}")
        for f in files:
            if not 1 <= f <= self.library_size:
                raise DomainError(f"file {f} outside library 1..{self.library_size}")
        row = np.zeros(self.capacity, dtype=np.int64)
        row[: len(slots)] = slots
        self.q[fap] = row
        self.x[fap] = False
        if files:
            self.x[fap, np.asarray(files) - 1] = True

    def replace_slot(self, fap: int, slot: int, file: int) -> int:
        """
        Put ``file`` into 1-based ``slot`` of ``fap``.

        Returns:
            int: The evicted file id (0 when the slot was empty)
        """
        if not 1 <= slot <= self.capacity:
            raise DomainError(f"slot {slot} outside 1..{self.capacity}")
        evicted = int(self.q[fap, slot - 1])
        if evicted == file:
            return evicted
        if self.x[fap, file - 1]:
            raise DuplicateCacheError(f"file {file} already cached at F-AP {fap}")
        self.q[fap, slot - 1] = file
        if evicted:
            self.x[fap, evicted - 1] = False
        self.x[fap, file - 1] = True
        return evicted

    def check(self) -> None:
        """Assert capacity and no-duplicate constraints plus view agreement."""
        for n in range(self.n_faps):
            files = [int(f) for f in self.q[n] if f]
            if len(files) > self.capacity or len(set(files)) != len(files):
                raise DuplicateCacheError(f"F-AP {n} violates cache constraints: {files}")
            expected = np.zeros(self.library_size, dtype=bool)
            if files:
                expected[np.asarray(files) - 1] = True
            if not np.array_equal(expected, self.x[n]):
                raise DomainError(f"F-AP {n}: slot list and indicator row disagree")


def channel_factor(params: RadioParams, distance: ArrayLike) -> ArrayLike:
    """Large-scale factor multiplying the SNR: d^-eta, or d itself in literal mode."""
    if params.pathloss_mode == "literal":
        return distance
    return np.power(distance, -params.pathloss_exponent)


def wireless_rate(params: RadioParams, gain: ArrayLike, distance: ArrayLike) -> ArrayLike:
    """
    Shannon rate from F-AP to user.

    Args:
        params: Radio constants
        gain: Small-scale gain |h|^2 (>= 0)
        distance: F-AP to user distance in meters (> 0)

    Returns:
        Rate in bits/s: B * log2(1 + gain * g(d) * P / (N0 * B + P_I))
    """
    if np.any(np.asarray(distance) <= 0):
        raise DomainError("distance must be positive")
    if np.any(np.asarray(gain) < 0):
        raise DomainError("gain must be non-negative")
    noise = params.noise_psd * params.bandwidth + params.interference_power
    snr = gain * channel_factor(params, distance) * params.tx_power / noise
    rate = params.bandwidth * np.log2(1.0 + snr)
    return float(rate) if np.ndim(rate) == 0 else rate


def delay_fap_to_user(params: RadioParams, rate: float) -> float:
    """Z1 = Q / rate."""
    if rate <= 0:
        raise NonPositiveRateError(f"rate must be positive, got {rate}")
    return params.file_size / rate


def delay_fap_to_fap(params: RadioParams, neighbor_cache_flags: Sequence[int]) -> float:
    """
    Z2 over the helpers that cache the file.

    ``literal`` mode sums Q / R over helpers; ``harmonic`` mode pools their
    rates, Q / sum(R). No helper gives 0 in both modes.
    """
    helpers = float(np.sum(np.asarray(neighbor_cache_flags, dtype=float)))
    if helpers == 0:
        return 0.0
    if params.coop_delay_mode == "harmonic":
        return params.file_size / (helpers * params.inter_fap_rate)
    return params.file_size * helpers / params.inter_fap_rate


def delay_cloud_to_fap(params: RadioParams) -> float:
    """Z3 = Q / R_backhaul."""
    return params.file_size / params.backhaul_rate


def file_delay(
    cache: CacheMatrix,
    topology: Topology,
    fap: int,
    file: int,
    z1: float,
    z2: float,
    z3: float,
) -> float:
    """Delay of one request: Z1 on a local hit, Z1+Z2 from a neighbor, Z1+Z3 from the cloud."""
    if cache.contains(fap, file):
        return z1
    if any(cache.contains(m, file) for m in topology.neighbors(fap)):
        return z1 + z2
    return z1 + z3


def access_delays(params: RadioParams, gains: np.ndarray, distances: np.ndarray) -> np.ndarray:
    """
    Per-user Z1 with deep fades clamped to ``rate_floor``.

    Args:
        gains: |h|^2, shape (N, users_per_fap)
        distances: Serving distances, same shape

    Returns:
        np.ndarray: Z1 per (F-AP, user) in seconds
    """
    rates = np.asarray(wireless_rate(params, gains, distances), dtype=float)
    clamped = rates < params.rate_floor
    if clamped.any():
        logger.warning(f"Clamped {int(clamped.sum())} deep-fade rates to {params.rate_floor}")
        rates = np.maximum(rates, params.rate_floor)
    return params.file_size / rates


def request_weighted_access_delay(
    preferences: np.ndarray, user_delays: np.ndarray, users_per_fap: int
) -> np.ndarray:
    """
    Z1 per (F-AP, file): mean wireless delay of a request for f at n.

    Args:
        preferences: (U, F) preference matrix, users ordered by F-AP
        user_delays: (N, users_per_fap) per-user Z1
        users_per_fap: Users attached to every F-AP

    Returns:
        np.ndarray: (N, F) weighted by each user's probability of requesting f
    """
    n_faps = user_delays.shape[0]
    prefs = preferences.reshape(n_faps, users_per_fap, -1)
    weighted = np.einsum("nuf,nu->nf", prefs, user_delays)
    return weighted / prefs.sum(axis=1)


def helper_counts(cache: CacheMatrix, topology: Topology) -> np.ndarray:
    """Number of neighbors caching each file, shape (N, F)."""
    return topology.connectivity.astype(np.int64) @ cache.x.astype(np.int64)


def tier_matrix(cache: CacheMatrix, topology: Topology) -> np.ndarray:
    """Transmission tier for every (F-AP, file)."""
    helpers = helper_counts(cache, topology)
    return np.where(cache.x, TIER_LOCAL, np.where(helpers > 0, TIER_NEIGHBOR, TIER_CLOUD))


def delay_matrix(
    cache: CacheMatrix, topology: Topology, params: RadioParams, z1: np.ndarray
) -> np.ndarray:
    """
    d[n, f] for every F-AP and file on the current joint cache.

    Args:
        z1: (N, F) access delays

    Returns:
        np.ndarray: (N, F) delays combining the three transmission modes
    """
    helpers = helper_counts(cache, topology).astype(float)
    if params.coop_delay_mode == "harmonic":
        with np.errstate(divide="ignore"):
            z2 = np.where(
                helpers > 0, params.file_size / (np.maximum(helpers, 1.0) * params.inter_fap_rate), 0.0
            )
    else:
        z2 = params.file_size * helpers / params.inter_fap_rate
    z3 = delay_cloud_to_fap(params)
    extra = np.where(cache.x, 0.0, np.where(helpers > 0, z2, z3))
    return z1 + extra


def average_delay(
    cache: CacheMatrix, popularity: np.ndarray, delays: np.ndarray
) -> float:
    """Inner sums of the objective: sum_f sum_n P[n, f] * d[n, f] for one slot."""
    if popularity.shape != delays.shape or popularity.shape[0] != cache.n_faps:
        raise DomainError(
            f"popularity {popularity.shape} and delays {delays.shape} must be (N, F)"
        )
    return float(np.sum(popularity * delays))


@dataclass(frozen=True)
class OrderingCheck:
    ok: bool
    detail: str


def validate_delay_ordering(z1: float, z2: float, z3: float, ratio: float = 5.0) -> OrderingCheck:
    """
    Check the assumed Z1 < Z2 << Z3 ordering.

    ``<<`` is read as Z3 at least ``ratio`` times Z2. Violations are reported
    as warnings; the simulation still runs.
    """
    problems = []
    if not z1 < z2:
        problems.append(f"Z1={z1:.3g}s is not below Z2={z2:.3g}s")
    if not z3 >= ratio * z2:
        problems.append(f"Z3={z3:.3g}s is not >> Z2={z2:.3g}s (ratio {ratio:g})")
    if problems:
        detail = "; ".join(problems)
        logger.warning(f"Delay ordering assumption violated: {detail}")
        return OrderingCheck(ok=False, detail=detail)
    return OrderingCheck(ok=True, detail=f"Z1={z1:.3g}s < Z2={z2:.3g}s << Z3={z3:.3g}s")


def median_delays(params: RadioParams, cell_radius: float) -> tuple:
    """(Z1, Z2, Z3) at median geometry: distance R/sqrt(2), gain ln 2, one helper."""
    rate = wireless_rate(params, float(np.log(2.0)), cell_radius / np.sqrt(2.0))
    z1 = delay_fap_to_user(params, max(float(rate), params.rate_floor))
    return z1, delay_fap_to_fap(params, [1]), delay_cloud_to_fap(params)
