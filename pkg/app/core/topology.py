"""Network geometry: F-AP sites, inter-F-AP connectivity and user placement."""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from app.core.config import SimConfig
from app.core.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Topology:
    """Static layout of the F-APs.

    ``connectivity`` is the symmetric 0/1 matrix Y with a zero diagonal;
    ``fap_positions`` has shape (N, 2) in meters.
    """

    n_faps: int
    connectivity: np.ndarray
    cell_radius: float
    fap_positions: np.ndarray

    def neighbors(self, fap: int) -> List[int]:
        """Neighbor set of ``fap`` (0-based ids), ascending."""
        return [int(m) for m in np.flatnonzero(self.connectivity[fap]) if m != fap]

    def neighbor_sets(self) -> Dict[int, List[int]]:
        return {n: self.neighbors(n) for n in range(self.n_faps)}


@dataclass(frozen=True)
class UserLayout:
    """Users of one slot.

    Users are numbered ``n * users_per_fap + i``; ``assignments[u]`` is the
    serving F-AP and ``distances[n, i]`` the distance of the i-th user of F-AP n.
    """

    users_per_fap: int
    assignments: np.ndarray
    distances: np.ndarray
    positions: np.ndarray = field(repr=False)

    def served_users(self, fap: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fap)

    @property
    def n_users(self) -> int:
        return int(self.assignments.shape[0])


def grid_positions(n_faps: int, cell_radius: float) -> np.ndarray:
    """Regular grid of sites spaced 2R apart so cells never overlap."""
    cols = max(1, math.ceil(math.sqrt(n_faps)))
    spacing = 2.0 * cell_radius
    idx = np.arange(n_faps)
    return np.stack([(idx % cols) * spacing, (idx // cols) * spacing], axis=1).astype(float)


def ring_connectivity(n_faps: int) -> np.ndarray:
    y = np.zeros((n_faps, n_faps), dtype=np.int8)
    if n_faps < 2:
        return y
    for n in range(n_faps):
        y[n, (n + 1) % n_faps] = 1
        y[(n + 1) % n_faps, n] = 1
    np.fill_diagonal(y, 0)
    return y


def knn_connectivity(positions: np.ndarray, k: int) -> np.ndarray:
    """Symmetric k-nearest-neighbor graph (union of both directions)."""
    n_faps = positions.shape[0]
    y = np.zeros((n_faps, n_faps), dtype=np.int8)
    if n_faps < 2:
        return y
    dist = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    np.fill_diagonal(dist, np.inf)
    k = min(k, n_faps - 1)
    for n in range(n_faps):
        # Stable sort so equidistant sites resolve by index
        for m in np.argsort(dist[n], kind="stable")[:k]:
            y[n, m] = 1
            y[m, n] = 1
    return y


def _check_connectivity(y: np.ndarray, n_faps: int) -> np.ndarray:
    if y.ndim != 2 or y.shape != (n_faps, n_faps):
        raise ConfigurationError(
            f"connectivity must be a square {n_faps}x{n_faps} matrix, got shape {y.shape}"
        )
    if not np.isin(y, (0, 1)).all():
        raise ConfigurationError("connectivity entries must be 0 or 1")
    if not np.array_equal(y, y.T):
        raise ConfigurationError("connectivity must be symmetric")
    if np.any(np.diag(y) != 0):
        raise ConfigurationError("connectivity diagonal must be zero")
    return y.astype(np.int8)


def build_topology(
    config: SimConfig, rng: Optional[np.random.Generator] = None
) -> Topology:
    """
    Build the F-AP layout and connectivity for a config.

    Args:
        config: Experiment configuration
        rng: Random source; the default layout is deterministic and does not draw

    Returns:
        Topology: Sites on a 2R grid with the configured connectivity pattern
    """
    n_faps = config.n_faps
    if n_faps < 1:
        raise ConfigurationError("n_faps must be at least 1")
    if config.cell_radius <= 0:
        raise ConfigurationError("cell_radius must be positive")

    positions = grid_positions(n_faps, config.cell_radius)

    if config.connectivity_matrix is not None:
        y = np.asarray(config.connectivity_matrix)
    elif config.connectivity == "full":
        y = np.ones((n_faps, n_faps), dtype=np.int8)
        np.fill_diagonal(y, 0)
    elif config.connectivity == "ring":
        y = ring_connectivity(n_faps)
    elif config.connectivity == "knn":
        y = knn_connectivity(positions, config.knn_k)
    else:
        y = np.zeros((n_faps, n_faps), dtype=np.int8)

    connectivity = _check_connectivity(y, n_faps)
    logger.debug(
        f"Built topology: N={n_faps}, pattern={config.connectivity}, "
        f"links={int(connectivity.sum()) // 2}"
    )
    return Topology(
        n_faps=n_faps,
        connectivity=connectivity,
        cell_radius=float(config.cell_radius),
        fap_positions=positions,
    )


def place_users(
    topology: Topology, users_per_fap: int, rng: np.random.Generator
) -> UserLayout:
    """
    Drop users uniformly over their serving cell's disk.

    Args:
        topology: F-AP layout
        users_per_fap: Users attached to every F-AP
        rng: Random source for positions

    Returns:
        UserLayout: Assignments, positions and serving distances in (0, R]
    """
    if users_per_fap < 0:
        raise ConfigurationError("users_per_fap must be non-negative")
    n_faps = topology.n_faps
    radius = topology.cell_radius
    shape = (n_faps, users_per_fap)

    # Inverse-CDF radius for a uniform disk; 1 - U keeps r strictly positive
    r = radius * np.sqrt(1.0 - rng.random(shape))
    theta = 2.0 * np.pi * rng.random(shape)
    offsets = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=2)
    positions = topology.fap_positions[:, None, :] + offsets
    assignments = np.repeat(np.arange(n_faps), users_per_fap)

    return UserLayout(
        users_per_fap=users_per_fap,
        assignments=assignments,
        distances=r,
        positions=positions.reshape(-1, 2),
    )
