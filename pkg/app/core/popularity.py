"""User file preferences (Zipf over permuted ranks) and per-F-AP popularity."""
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from app.core.exceptions import DomainError, EmptyRegionError
from app.core.topology import UserLayout

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreferenceProfile:
    """Per-user rank permutations.

    ``permutations[u, f - 1]`` is the rank of file ``f`` for user ``u``; every
    row is a permutation of ``1..F``.
    """

    permutations: np.ndarray
    skewness: float
    library_size: int

    @property
    def n_users(self) -> int:
        return int(self.permutations.shape[0])


@dataclass(frozen=True)
class PopularityVector:
    probs: np.ndarray

    def __len__(self) -> int:
        return int(self.probs.shape[0])


def zipf_normalizer(library_size: int, skewness: float) -> float:
    ranks = np.arange(1, library_size + 1, dtype=float)
    return float(np.sum(ranks ** (-skewness)))


def random_profile(
    n_users: int,
    library_size: int,
    skewness: float,
    rng: np.random.Generator,
    jitter: Optional[float] = None,
) -> PreferenceProfile:
    """
    Random rank permutation for every user.

    With ``jitter`` unset each permutation is uniform. Otherwise users perturb a
    shared ranking in which file ``f`` holds rank ``f``: each file's rank gets
    Gaussian noise with standard deviation ``jitter * F`` and the noisy ranks are
    re-sorted into a permutation.
    """
    if n_users == 0:
        perms = np.zeros((0, library_size), dtype=np.int64)
    elif jitter is None:
        perms = np.stack([rng.permutation(library_size) + 1 for _ in range(n_users)])
    else:
        if jitter < 0:
            raise DomainError(f"preference jitter must be non-negative, got {jitter}")
        base = np.arange(1, library_size + 1, dtype=float)
        noisy = base + rng.normal(0.0, jitter * library_size, size=(n_users, library_size))
        perms = np.argsort(np.argsort(noisy, axis=1, kind="stable"), axis=1) + 1
    return PreferenceProfile(
        permutations=perms.astype(np.int64),
        skewness=float(skewness),
        library_size=library_size,
    )


def user_preference(profile: PreferenceProfile, user: int, file: int) -> float:
    """
    Request probability of ``file`` (1-based) for ``user``.

    Returns:
        float: rank(file)^-tau / sum_{i=1..F} i^-tau
    """
    if not 1 <= file <= profile.library_size:
        raise DomainError(f"file {file} outside library 1..{profile.library_size}")
    if profile.skewness <= 0:
        raise DomainError("skewness must be positive")
    rank = profile.permutations[user, file - 1]
    return float(rank ** (-profile.skewness)) / zipf_normalizer(
        profile.library_size, profile.skewness
    )


def preference_matrix(profile: PreferenceProfile) -> np.ndarray:
    """All users' preference vectors as a (U, F) array."""
    weights = profile.permutations.astype(float) ** (-profile.skewness)
    return weights / zipf_normalizer(profile.library_size, profile.skewness)


def fap_popularity(
    profile: PreferenceProfile,
    layout: UserLayout,
    fap: int,
    aggregation: str = "mean",
    preferences: Optional[np.ndarray] = None,
) -> PopularityVector:
    """
    Content popularity at one F-AP.

    Args:
        profile: User preferences
        layout: Current user assignment
        fap: F-AP id (0-based)
        aggregation: ``mean`` over served users, or the literal ``sum``
        preferences: Precomputed ``preference_matrix(profile)`` to skip the recompute

    Returns:
        PopularityVector: Probability vector (``mean``) or unnormalized mass (``sum``)
    """
    users = layout.served_users(fap)
    if users.size == 0:
        raise EmptyRegionError(f"F-AP {fap} has no served users")
    prefs = preference_matrix(profile) if preferences is None else preferences
    members = prefs[users]
    probs = members.sum(axis=0) if aggregation == "sum" else members.mean(axis=0)
    return PopularityVector(probs=probs)


def sample_request(popularity: PopularityVector, rng: np.random.Generator) -> int:
    """Draw one file id (1-based) with probability proportional to ``probs``."""
    probs = popularity.probs
    return int(rng.choice(probs.shape[0], p=probs / probs.sum())) + 1


def advance_preferences(
    profile: PreferenceProfile,
    consistent: bool,
    rng: np.random.Generator,
    skewness: Optional[float] = None,
) -> PreferenceProfile:
    """
    Move preferences to the next slot.

    Consistent preferences keep their permutations; inconsistent ones draw a
    fresh uniform permutation per user. ``skewness`` applies a scheduled tau.
    """
    tau = profile.skewness if skewness is None else float(skewness)
    if consistent:
        if tau == profile.skewness:
            return profile
        return replace(profile, skewness=tau)
    return random_profile(profile.n_users, profile.library_size, tau, rng)
