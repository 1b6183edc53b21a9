"""Per-step admissible skill set for the high level.

Every elementary action is always admissible.  Any other goal ``g`` joins
with probability ``max(C(s, g), eps_g)`` where ``eps_g = min(n_g, 0.1)``
and ``n_g`` counts low-level updates of ``g`` over the last five
data-collection cycles.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .goalspace import GoalCatalog

EPS_CAP = 0.1


class UpdateFrequencyTracker:
    def __init__(self, window: int = 5):
        self.window = window
        self.cycles: deque[dict[int, int]] = deque([{}], maxlen=window)

    def record_update(self, skill: int) -> None:
        cur = self.cycles[-1]
        cur[skill] = cur.get(skill, 0) + 1

    def end_cycle(self) -> None:
        self.cycles.append({})

    def count(self, skill: int) -> int:
        return sum(c.get(skill, 0) for c in self.cycles)

    def epsilon(self, skill: int) -> float:
        return min(float(self.count(skill)), EPS_CAP)

    def state_dict(self) -> dict:
        return {"window": self.window, "cycles": [dict(c) for c in self.cycles]}

    def load_state_dict(self, state: dict) -> None:
        self.window = state["window"]
        self.cycles = deque((dict(c) for c in state["cycles"]), maxlen=self.window)


@dataclass
class AdmissibleSet:
    skills: list[int]
    # goal id -> (inclusion probability, drawn bit) for every non-elementary goal
    draws: dict[int, tuple[float, bool]] = field(default_factory=dict)

    def __contains__(self, skill: int) -> bool:
        return skill in self.skills

    def __len__(self) -> int:
        return len(self.skills)


def inclusion_probabilities(obs: np.ndarray, catalog: GoalCatalog, estimator, tracker: UpdateFrequencyTracker
                            ) -> dict[int, float]:
    learned = [g.id for g in catalog.achievements]
    if not learned:
        return {}
    est = estimator.estimate_many(obs, learned)
    return {gid: max(float(c), tracker.epsilon(gid)) for gid, c in zip(learned, est)}


def build(obs: np.ndarray, catalog: GoalCatalog, estimator, tracker: UpdateFrequencyTracker,
          rng: np.random.Generator, flat: bool = False) -> AdmissibleSet:
    elementary = [g.id for g in catalog.elementary]
    if flat:
        return AdmissibleSet(elementary)
    probs = inclusion_probabilities(obs, catalog, estimator, tracker)
    draws = {}
    chosen = list(elementary)
    for gid, p in probs.items():
        bit = bool(rng.random() < p)
        draws[gid] = (p, bit)
        if bit:
            chosen.append(gid)
    return AdmissibleSet(chosen, draws)
