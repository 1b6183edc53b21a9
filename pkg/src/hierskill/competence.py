"""Success-rate estimator C(s, k) for low-level skill executions.

Feature vector (version 1): one-hot tile window (9x9x14), one-hot facing,
inventory counts / 9, one-hot skill id over the 28 verifier ids.  Snapshots
published after each training pass are frozen copies; callers that hold a
snapshot keep getting the same numbers no matter how training proceeds.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import craftworld as cw
from .nets import FLAT_FEATURES, flat_features, frozen_copy, load_optimizer, mlp, seeded

FEATURE_VERSION = 1
N_SKILL_SLOTS = cw.N_VERIFIERS


@dataclass
class EstimatorConfig:
    hidden: tuple[int, int] = (128, 128)
    lr: float = 1e-4
    update_every: int = 256
    epochs: int = 1
    batch_size: int = 64
    cycles_kept: int = 3
    samples_per_execution: int = 12
    init_bias: float = -3.0


class EstimatorNet(nn.Module):
    def __init__(self, hidden: Sequence[int] = (128, 128), init_bias: float = 0.0):
        super().__init__()
        self.body = mlp([FLAT_FEATURES + N_SKILL_SLOTS, *hidden, 1], act=nn.SiLU)
        nn.init.constant_(self.body[-1].bias, init_bias)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        """Logit of the success probability."""
        return self.body(feats).squeeze(-1)


def estimator_inputs(obs: np.ndarray, skills: Sequence[int]) -> torch.Tensor:
    obs = np.atleast_2d(obs)
    sk = F.one_hot(torch.as_tensor(np.asarray(skills, dtype=np.int64)), N_SKILL_SLOTS).float()
    return torch.cat([flat_features(obs), sk], dim=1)


def bce_loss(logits: torch.Tensor, outcomes: torch.Tensor) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(logits, outcomes)


@dataclass(frozen=True)
class Snapshot:
    version: int
    net: EstimatorNet

    @torch.inference_mode()
    def predict(self, obs: np.ndarray, skills: Sequence[int]) -> np.ndarray:
        """Success probabilities; elementary skills are exactly 1."""
        skills = np.asarray(skills, dtype=np.int64)
        obs = np.atleast_2d(obs)
        if obs.shape[0] == 1 and len(skills) > 1:
            obs = np.repeat(obs, len(skills), axis=0)
        out = np.ones(len(skills))
        learned = skills >= cw.N_ACTIONS
        if learned.any():
            x = estimator_inputs(obs[learned], skills[learned])
            out[learned] = torch.sigmoid(self.net(x).double()).numpy()
        return out


class CompetenceEstimator:
    def __init__(self, config: EstimatorConfig | None = None, seed: int = 0):
        self.config = config or EstimatorConfig()
        with seeded(seed * 7919 + 3):
            self.net = EstimatorNet(self.config.hidden, self.config.init_bias)
        self.optim = torch.optim.Adam(self.net.parameters(), lr=self.config.lr)
        self.rng = np.random.default_rng([seed, 0xC0])
        # one list of (obs, skill, outcome) per data-collection cycle
        self.cycles: deque[list[tuple[np.ndarray, int, float]]] = deque([[]], maxlen=self.config.cycles_kept)
        self.new = 0
        self.version = 0
        self.snapshot = Snapshot(0, frozen_copy(self.net))

    # -- queries --------------------------------------------------------------

    def estimate(self, obs: np.ndarray, skill: int) -> float:
        return float(self.snapshot.predict(obs, [skill])[0])

    def estimate_many(self, obs: np.ndarray, skills: Sequence[int]) -> np.ndarray:
        return self.snapshot.predict(obs, skills)

    # -- data -----------------------------------------------------------------

    def samples(self) -> list[tuple[np.ndarray, int, float]]:
        return [s for cyc in self.cycles for s in cyc]

    def record_execution(self, states: Sequence[np.ndarray], skill: int, outcome: bool) -> int:
        """Keep the first ``samples_per_execution`` states, all labelled with the outcome."""
        if not len(states):
            raise ValueError("execution has no states")
        if skill < cw.N_ACTIONS:
            return 0
        kept = states[: self.config.samples_per_execution]
        self.cycles[-1].extend((o, skill, float(outcome)) for o in kept)
        self.new += len(kept)
        return len(kept)

    def add_samples(self, obs: Sequence[np.ndarray], skills: Sequence[int], outcomes: Sequence[float]) -> None:
        self.cycles[-1].extend(zip(obs, skills, (float(o) for o in outcomes)))
        self.new += len(obs)

    def end_cycle(self) -> None:
        self.cycles.append([])

    # -- training -------------------------------------------------------------

    def train_if_due(self, force: bool = False) -> dict | None:
        cfg = self.config
        data = self.samples()
        if not data or (self.new < cfg.update_every and not force):
            return None
        obs = np.stack([d[0] for d in data])
        skills = np.array([d[1] for d in data])
        y = torch.tensor([d[2] for d in data], dtype=torch.float32)
        x = estimator_inputs(obs, skills)
        total = 0.0
        for _ in range(cfg.epochs):
            perm = self.rng.permutation(len(data))
            for i in range(0, len(perm), cfg.batch_size):
                b = torch.from_numpy(perm[i: i + cfg.batch_size])
                loss = bce_loss(self.net(x[b]), y[b])
                self.optim.zero_grad()
                loss.backward()
                self.optim.step()
                total += loss.item() * len(b)
        self.new = 0
        self.version += 1
        self.snapshot = Snapshot(self.version, frozen_copy(self.net))
        return {"version": self.version, "samples": len(data), "loss": total / (len(data) * cfg.epochs),
                "mean_outcome": float(y.mean())}

    # -- persistence ----------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "net": self.net.state_dict(),
            "optim": self.optim.state_dict(),
            "snapshot": (self.snapshot.version, self.snapshot.net.state_dict()),
            "cycles": [list(c) for c in self.cycles],
            "new": self.new,
            "version": self.version,
            "rng": self.rng.bit_generator.state,
        }

    def load_state_dict(self, state: dict) -> None:
        self.net.load_state_dict(state["net"])
        load_optimizer(self.optim, state["optim"])
        version, sd = state["snapshot"]
        net = EstimatorNet(self.config.hidden)
        net.load_state_dict(sd)
        self.snapshot = Snapshot(version, frozen_copy(net))
        self.cycles = deque((list(c) for c in state["cycles"]), maxlen=self.config.cycles_kept)
        self.new = state["new"]
        self.version = state["version"]
        self.rng.bit_generator.state = state["rng"]
