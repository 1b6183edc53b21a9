"""Learning-progress goal sampler.

A second competence estimator is trained on goal-attempt outcomes (state at
the start of the attempt's first high-level steps, goal, success bit).  The
last three published snapshots form a ring; the absolute change between the
oldest and the newest prediction is the contextual learning progress of a
goal.  Goals are chosen greedily on that signal, with uniform exploration
whose probability decays exponentially in the number of recorded entries.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .competence import CompetenceEstimator, EstimatorConfig, EstimatorNet, Snapshot
from .goalspace import Goal
from .nets import frozen_copy


class ScheduleError(RuntimeError):
    pass


class SnapshotRing:
    def __init__(self, capacity: int = 3):
        self.capacity = capacity
        self.items: deque[Snapshot] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.items)

    def push(self, snap: Snapshot) -> None:
        if self.items and snap.version <= self.items[-1].version:
            raise ValueError(f"snapshot version {snap.version} is not newer than {self.items[-1].version}")
        self.items.append(snap)

    @property
    def versions(self) -> list[int]:
        return [s.version for s in self.items]

    def endpoints(self) -> tuple[Snapshot, Snapshot]:
        if not self.items:
            raise ScheduleError("snapshot ring is empty")
        return self.items[0], self.items[-1]


@dataclass(frozen=True)
class EpsilonSchedule:
    eps0: float = 1.0
    rate: float = 3.34
    horizon: int = 100_000

    def __call__(self, consumed: int) -> float:
        return self.eps0 * math.exp(-self.rate * consumed / self.horizon)


@dataclass
class SamplerConfig:
    entries_per_attempt: int = 6
    update_every: int = 128
    cycles_kept: int = 3
    ring_size: int = 3
    eps0: float = 1.0
    eps_rate: float = 3.34
    eps_horizon: int = 100_000
    hidden: tuple[int, int] = (128, 128)
    lr: float = 1e-4
    batch_size: int = 64
    init_bias: float = -3.0


def learning_progress(ring: SnapshotRing, obs: np.ndarray, goals: Sequence[int]) -> np.ndarray:
    oldest, newest = ring.endpoints()
    if oldest is newest:
        return np.zeros(len(goals))
    return np.abs(newest.predict(obs, goals) - oldest.predict(obs, goals))


def pick_goal(lp: np.ndarray, eps: float, rng: np.random.Generator) -> tuple[int, bool]:
    """Index of the chosen goal and whether it came from the exploration branch."""
    if rng.random() < eps:
        return int(rng.integers(len(lp))), True
    best = np.flatnonzero(lp == lp.max())
    return int(best[rng.integers(len(best))]), False


class GoalSampler:
    def __init__(self, goals: Sequence[Goal], config: SamplerConfig | None = None, seed: int = 0):
        if not goals:
            raise ValueError("goal sampler needs at least one goal")
        self.goals = list(goals)
        self.config = cfg = config or SamplerConfig()
        self.estimator = CompetenceEstimator(
            EstimatorConfig(hidden=cfg.hidden, lr=cfg.lr, update_every=cfg.update_every, batch_size=cfg.batch_size,
                            cycles_kept=cfg.cycles_kept, samples_per_execution=cfg.entries_per_attempt,
                            init_bias=cfg.init_bias),
            seed=seed * 31 + 7)
        self.ring = SnapshotRing(cfg.ring_size)
        self.ring.push(self.estimator.snapshot)
        self.schedule = EpsilonSchedule(cfg.eps0, cfg.eps_rate, cfg.eps_horizon)
        self.consumed = 0

    @property
    def epsilon(self) -> float:
        return self.schedule(self.consumed)

    def learning_progress(self, obs: np.ndarray) -> np.ndarray:
        return learning_progress(self.ring, obs, [g.id for g in self.goals])

    def sample_goal(self, obs: np.ndarray, rng: np.random.Generator) -> tuple[Goal, dict]:
        lp = self.learning_progress(obs)
        eps = self.epsilon
        i, explored = pick_goal(lp, eps, rng)
        return self.goals[i], {"goal": self.goals[i].text, "epsilon": eps, "explored": explored,
                               "lp": [float(x) for x in lp]}

    def record_outcome(self, hl_states: Sequence[np.ndarray], goal: Goal, outcome: bool) -> int:
        n = self.estimator.record_execution(hl_states, goal.id, outcome)
        self.consumed += n
        return n

    def update_if_due(self) -> dict | None:
        stats = self.estimator.train_if_due()
        if stats is not None:
            self.ring.push(self.estimator.snapshot)
        return stats

    def end_cycle(self) -> None:
        self.estimator.end_cycle()

    def state_dict(self) -> dict:
        return {"estimator": self.estimator.state_dict(), "consumed": self.consumed,
                "ring": [(s.version, s.net.state_dict()) for s in self.ring.items]}

    def load_state_dict(self, state: dict) -> None:
        self.estimator.load_state_dict(state["estimator"])
        self.consumed = state["consumed"]
        self.ring = SnapshotRing(self.config.ring_size)
        for version, sd in state["ring"]:
            net = EstimatorNet(self.config.hidden)
            net.load_state_dict(sd)
            self.ring.push(Snapshot(version, frozen_copy(net)))
