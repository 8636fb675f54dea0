"""Reward-ordered experience replay keyed by molecule identity."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..env import Trajectory
from ..metrics import molecule_key


@dataclass
class ReplayEntry:
    key: str
    smiles: str
    reward: float
    trajectory: Trajectory
    serial: int  # insertion order, used for tie-breaking


class ReplayBuffer:
    """At most ``capacity`` molecules, each stored once with its best reward.

    When full, the lowest-reward entry is evicted; among equal rewards the
    most recently inserted one goes first, and a newcomer that does not beat
    the current minimum is rejected.
    """

    def __init__(self, capacity: int = 100):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: dict[str, ReplayEntry] = {}
        self._serial = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    @property
    def min_reward(self) -> float | None:
        return min((e.reward for e in self._entries.values()), default=None)

    def entries(self) -> list[ReplayEntry]:
        """Entries by reward descending, earlier insertion first on ties."""
        return sorted(self._entries.values(), key=lambda e: (-e.reward, e.serial))

    def insert(self, trajectory: Trajectory, reward: float | None = None) -> bool:
        """Insert or update; returns True when the buffer changed."""
        r = float(trajectory.reward if reward is None else reward)
        key = molecule_key(trajectory.smiles)
        current = self._entries.get(key)
        if current is not None:
            if r > current.reward:
                current.reward = r
                current.smiles = trajectory.smiles
                current.trajectory = trajectory
                return True
            return False
        if len(self._entries) >= self.capacity:
            victim = min(self._entries.values(), key=lambda e: (e.reward, -e.serial))
            if r <= victim.reward:
                return False
            del self._entries[victim.key]
        self._serial += 1
        self._entries[key] = ReplayEntry(key, trajectory.smiles, r, trajectory, self._serial)
        return True

    def extend(self, trajectories) -> None:
        for tr in trajectories:
            self.insert(tr)

    def sample(self, m: int, rng: np.random.Generator) -> list[Trajectory]:
        """``min(m, len)`` distinct entries drawn uniformly, as fresh trajectories carrying their stored reward."""
        ranked = self.entries()
        k = min(m, len(ranked))
        if k <= 0:
            return []
        picks = rng.choice(len(ranked), size=k, replace=False)
        out = []
        for i in picks:
            e = ranked[int(i)]
            out.append(dataclasses.replace(e.trajectory, reward=e.reward, prior_log_probs=None))
        return out
