"""Displacement-based consensus formation control.

Each member ``i`` is driven by

    u_i = -gain_p * sum_j w_ij ((p_i - p_j) - (d_i - d_j))
          -gain_d * sum_j w_ij (v_i - v_j)

where ``d_i`` is its slot offset from the formation centroid. On a
connected graph the group settles into the slot pattern and a common
velocity; the absolute location is left free.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Dict, Mapping, Sequence

import numpy as np

from uwpt.errors import DomainError
from uwpt.world import Pose


@dataclass(frozen=True, eq=False)
class FormationSpec:
    members: tuple
    offsets: np.ndarray
    adjacency: np.ndarray
    gain_p: float = 1.0
    gain_d: float = 2.0
    max_accel: float = 5.0

    def __post_init__(self):
        members = tuple(self.members)
        n = len(members)
        if n == 0 or len(set(members)) != n:
            raise DomainError("formation members must be a non-empty list of distinct ids")
        offsets = np.array(self.offsets, dtype=float)
        adj = np.array(self.adjacency, dtype=float)
        if offsets.shape != (n, 3):
            raise DomainError(f"offsets must have shape ({n}, 3)")
        if adj.shape != (n, n):
            raise DomainError(f"adjacency must have shape ({n}, {n})")
        if np.any(adj < 0) or not np.allclose(adj, adj.T, rtol=0, atol=0):
            raise DomainError("adjacency must be symmetric with non-negative weights")
        if not _connected(adj):
            raise DomainError("formation graph must be connected")
        if np.max(np.abs(offsets.mean(axis=0))) > 1e-9:
            raise DomainError("offsets must be centroid-referenced (zero mean)")
        if not (self.gain_p > 0 and self.gain_d > 0 and self.max_accel > 0):
            raise DomainError("gains and max_accel must be positive")
        np.fill_diagonal(adj, 0.0)
        offsets.flags.writeable = False
        adj.flags.writeable = False
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def ring(cls, members: Sequence[str], offsets, **kwargs) -> "FormationSpec":
        """Cycle graph with unit weights in member order."""
        n = len(members)
        adj = np.zeros((n, n))
        for i in range(n):
            j = (i + 1) % n
            if i != j:
                adj[i, j] = adj[j, i] = 1.0
        return cls(tuple(members), offsets, adj, **kwargs)


def _connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.nonzero(adj[i])[0]:
            if j not in seen:
                seen.add(int(j))
                queue.append(int(j))
    return len(seen) == n


def _stack(spec: FormationSpec, poses: Mapping[str, Pose]):
    missing = [m for m in spec.members if m not in poses]
    if missing:
        raise DomainError(f"formation members missing from poses: {missing}")
    p = np.array([poses[m].position for m in spec.members])
    v = np.array([poses[m].velocity for m in spec.members])
    return p, v


def formation_control(spec: FormationSpec, poses: Mapping[str, Pose]) -> Dict[str, np.ndarray]:
    """Consensus accelerations for every member, norm-clipped to ``max_accel``."""
    p, v = _stack(spec, poses)
    w = spec.adjacency
    deg = w.sum(axis=1)
    lap = np.diag(deg) - w
    # sum_j w_ij (x_i - x_j) == (L x)_i
    u = -spec.gain_p * (lap @ (p - spec.offsets)) - spec.gain_d * (lap @ v)
    norms = np.linalg.norm(u, axis=1)
    scale = np.where(norms > spec.max_accel, spec.max_accel / np.where(norms > 0, norms, 1.0), 1.0)
    u = u * scale[:, None]
    return {m: u[i] for i, m in enumerate(spec.members)}


def formation_error(spec: FormationSpec, poses: Mapping[str, Pose]) -> float:
    """Largest distance between a member's centroid-relative position and its slot."""
    p, _ = _stack(spec, poses)
    rel = p - p.mean(axis=0)
    return float(np.max(np.linalg.norm(rel - spec.offsets, axis=1)))


def square_offsets(side: float) -> np.ndarray:
    """Corner offsets of a horizontal square, centred on the origin."""
    h = side / 2.0
    return np.array([[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]])


def assign_slots_by_angle(positions: Mapping[str, np.ndarray], offsets: np.ndarray) -> tuple:
    """Order member ids so their slots follow the agents' bearing around the centroid.

    Pairing agents and slots in the same angular order keeps paths from
    crossing while the group converges.
    """
    ids = list(positions)
    p = np.array([positions[i] for i in ids], dtype=float)
    c = p.mean(axis=0)
    agent_order = np.argsort(np.arctan2(p[:, 1] - c[1], p[:, 0] - c[0]), kind="stable")
    slot_order = np.argsort(np.arctan2(offsets[:, 1], offsets[:, 0]), kind="stable")
    members = [None] * len(ids)
    for a, s in zip(agent_order, slot_order):
        members[s] = ids[a]
    return tuple(members)
