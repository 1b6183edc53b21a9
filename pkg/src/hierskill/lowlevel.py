"""Per-skill low-level policies trained with advantage-weighted regression.

Every non-elementary skill owns a separate actor-critic network and a FIFO
replay buffer.  Elementary skills never reach a network: the action named
by the skill is executed as is.

Skill compilation happens in :meth:`PolicyBank.relabel_and_store`: besides
each skill segment being stored under its own skill, the concatenation of
all segments of a goal attempt is stored under the attempt's goal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import craftworld as cw
from .nets import ResBlock, VISUAL_CHANNELS, load_optimizer, seeded, visual_tensor

log = logging.getLogger(__name__)

SAMPLE, GREEDY = "sample", "greedy"


@dataclass
class LLConfig:
    conv_channels: tuple[int, int, int] = (16, 32, 32)
    fc_sizes: tuple[int, int] = (256, 64)
    gamma: float = 0.95
    beta: float = 1.0
    max_weight: float = 20.0
    lr: float = 1e-4
    buffer_size: int = 100_000
    update_every: int = 2496
    grad_steps: int = 32
    batch_size: int = 256
    critic_coef: float = 1.0
    compile_failures: bool = True


class SkillNet(nn.Module):
    """Residual conv encoder over the tile window, categorical actor, sigmoid critic."""

    def __init__(self, conv_channels: Sequence[int] = (16, 32, 32), fc_sizes: Sequence[int] = (256, 64)):
        super().__init__()
        c0, c1, c2 = conv_channels
        self.stem = nn.Conv2d(VISUAL_CHANNELS, c0, 3, padding=1)
        self.block1 = ResBlock(c0, c1)
        self.block2 = ResBlock(c1, c2)
        side = cw.VIEW // 2
        self.fc = nn.Sequential(
            nn.Linear(c2 * side * side, fc_sizes[0]), nn.ReLU(),
            nn.Linear(fc_sizes[0], fc_sizes[1]), nn.ReLU(),
        )
        self.actor = nn.Linear(fc_sizes[1], cw.N_ACTIONS)
        self.critic = nn.Linear(fc_sizes[1], 1)
        # near-uniform initial action distribution
        nn.init.normal_(self.actor.weight, std=0.01)
        nn.init.zeros_(self.actor.bias)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = F.relu(self.stem(x))
        h = F.max_pool2d(self.block1(h), 2)
        h = self.block2(h)
        h = self.fc(h.flatten(1))
        return self.actor(h), torch.sigmoid(self.critic(h)).squeeze(-1)


def awr_weights(advantages: torch.Tensor, beta: float, max_weight: float) -> torch.Tensor:
    return torch.exp(advantages / beta).clamp(max=max_weight)


def awr_loss(logits: torch.Tensor, values: torch.Tensor, actions: torch.Tensor, returns: torch.Tensor,
             beta: float, max_weight: float, critic_coef: float = 1.0) -> tuple[torch.Tensor, dict]:
    """Weighted log-likelihood of stored actions plus critic regression.

    The weights use a detached advantage so the actor term never pushes
    gradients into the critic through the weighting.
    """
    adv = returns - values.detach()
    w = awr_weights(adv, beta, max_weight)
    logp = torch.log_softmax(logits, dim=-1).gather(1, actions[:, None]).squeeze(1)
    actor = -(w * logp).mean()
    critic = F.mse_loss(values, returns)
    return actor + critic_coef * critic, {"actor_loss": actor.item(), "critic_loss": critic.item(),
                                          "mean_weight": w.mean().item()}


def discounted_returns(rewards: np.ndarray, last: np.ndarray, done: np.ndarray, bootstrap: np.ndarray,
                       gamma: float) -> np.ndarray:
    """Monte-Carlo returns over back-to-back trajectories in chronological order.

    ``last`` marks the final transition of each trajectory.  A final
    transition that did not succeed (``done`` false) is bootstrapped with
    ``bootstrap`` (the critic at the state the trajectory stopped in).
    """
    out = np.zeros(len(rewards), dtype=np.float64)
    g = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        if last[i]:
            g = rewards[i] if done[i] else rewards[i] + gamma * bootstrap[i]
        else:
            g = rewards[i] + gamma * g
        out[i] = g
    return out


class ReplayBuffer:
    """FIFO ring of transitions, stored trajectory by trajectory."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, cw.OBS_LEN), dtype=np.uint8)
        self.next_obs = np.zeros((capacity, cw.OBS_LEN), dtype=np.uint8)
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity, dtype=np.float32)
        self.last = np.zeros(capacity, dtype=bool)
        self.done = np.zeros(capacity, dtype=bool)
        self.timeout = np.zeros(capacity, dtype=bool)
        self.head = 0  # next write slot
        self.size = 0
        self.new = 0
        self.total = 0

    def __len__(self) -> int:
        return self.size

    def add_trajectory(self, obs: Sequence[np.ndarray], actions: Sequence[int], rewards: Sequence[float],
                       final_obs: np.ndarray, done: bool) -> None:
        n = len(actions)
        if n == 0:
            return
        nxt = list(obs[1:]) + [final_obs]
        for t in range(n):
            i = self.head
            self.obs[i] = obs[t]
            self.next_obs[i] = nxt[t]
            self.action[i] = actions[t]
            self.reward[i] = rewards[t]
            self.last[i] = t == n - 1
            self.done[i] = done and t == n - 1
            self.timeout[i] = (not done) and t == n - 1
            self.head = (self.head + 1) % self.capacity
        self.size = min(self.capacity, self.size + n)
        self.new += n
        self.total += n

    def chronological(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.head) % self.capacity

    ARRAYS = ("obs", "next_obs", "action", "reward", "last", "done", "timeout")

    def state_dict(self) -> dict:
        # slots beyond `size` were never written, so only the filled prefix is kept
        out = {k: getattr(self, k)[: self.size].copy() for k in self.ARRAYS}
        out.update(capacity=self.capacity, head=self.head, size=self.size, new=self.new, total=self.total)
        return out

    @classmethod
    def from_state(cls, state: dict) -> "ReplayBuffer":
        buf = cls(state["capacity"])
        for k in cls.ARRAYS:
            getattr(buf, k)[: state["size"]] = state[k]
        buf.head, buf.size, buf.new, buf.total = state["head"], state["size"], state["new"], state["total"]
        return buf


@dataclass
class LLSegment:
    """One skill execution (or one direct elementary step) inside a goal attempt."""

    skill: int
    elementary: bool
    obs: list[np.ndarray] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    skill_rewards: list[float] = field(default_factory=list)
    goal_rewards: list[float] = field(default_factory=list)
    final_obs: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def success(self) -> bool:
        return bool(self.skill_rewards) and self.skill_rewards[-1] == 1.0


class PolicyBank:
    """Lazily instantiated per-skill networks, buffers and optimizers."""

    def __init__(self, config: LLConfig | None = None, seed: int = 0):
        self.config = config or LLConfig()
        self.seed = seed
        self.nets: dict[int, SkillNet] = {}
        self.optims: dict[int, torch.optim.Optimizer] = {}
        self.buffers: dict[int, ReplayBuffer] = {}
        self.update_counts: dict[int, int] = {}
        self.rng = np.random.default_rng([seed, 0x11])

    # -- policies ---------------------------------------------------------

    def has_policy(self, skill: int) -> bool:
        return skill in self.nets

    def policy(self, skill: int) -> SkillNet:
        if skill < cw.N_ACTIONS:
            raise KeyError(f"elementary skill {skill} has no network")
        if skill not in self.nets:
            with seeded(self.seed * 1_000_003 + skill):
                net = SkillNet(self.config.conv_channels, self.config.fc_sizes)
            self.nets[skill] = net
            self.optims[skill] = torch.optim.Adam(net.parameters(), lr=self.config.lr)
            self.update_counts.setdefault(skill, 0)
        return self.nets[skill]

    @torch.inference_mode()
    def action_probs(self, obs: np.ndarray, skill: int) -> np.ndarray:
        if skill < cw.N_ACTIONS:
            p = np.zeros(cw.N_ACTIONS)
            p[skill] = 1.0
            return p
        if skill not in self.nets:
            raise KeyError(f"no policy for skill {skill}")
        logits, _ = self.nets[skill](visual_tensor(obs))
        return torch.softmax(logits.double(), dim=-1)[0].numpy()

    def act(self, obs: np.ndarray, skill: int, mode: str = SAMPLE, rng: np.random.Generator | None = None) -> int:
        """Elementary skills pass straight through; others sample or argmax the actor."""
        if skill < cw.N_ACTIONS:
            return skill
        p = self.action_probs(obs, skill)
        if mode == GREEDY:
            return int(np.argmax(p))
        u = (rng or self.rng).random()
        return int(min(np.searchsorted(np.cumsum(p), u * p.sum(), side="right"), cw.N_ACTIONS - 1))

    # -- data ---------------------------------------------------------------

    def buffer(self, skill: int) -> ReplayBuffer:
        if skill not in self.buffers:
            self.buffers[skill] = ReplayBuffer(self.config.buffer_size)
        return self.buffers[skill]

    def relabel_and_store(self, segments: Sequence[LLSegment], goal: int,
                          goal_rewards: Sequence[float] | None = None) -> int:
        """Store each skill segment under its skill and the concatenation under ``goal``.

        Returns the length of the compiled trajectory (0 if nothing was stored).
        """
        for seg in segments:
            if seg.elementary or not seg.actions:
                continue
            self.buffer(seg.skill).add_trajectory(seg.obs, seg.actions, seg.skill_rewards, seg.final_obs,
                                                  seg.success)
        obs = [o for s in segments for o in s.obs]
        actions = [a for s in segments for a in s.actions]
        if not actions:
            return 0
        rewards = list(goal_rewards) if goal_rewards is not None else [r for s in segments for r in s.goal_rewards]
        if len(rewards) != len(actions):
            raise ValueError("goal rewards must cover every transition")
        success = rewards[-1] == 1.0
        if not success and not self.config.compile_failures:
            return 0
        final = next(s.final_obs for s in reversed(segments) if s.actions)
        self.buffer(goal).add_trajectory(obs, actions, rewards, final, success)
        return len(actions)

    # -- training -----------------------------------------------------------

    def due(self) -> list[int]:
        return sorted(k for k, b in self.buffers.items() if b.new >= self.config.update_every)

    def returns(self, skill: int) -> tuple[np.ndarray, np.ndarray]:
        """(chronological slot order, Monte-Carlo returns) for a skill's buffer."""
        buf = self.buffers[skill]
        order = buf.chronological()
        boot = np.zeros(len(order))
        tail = np.flatnonzero(buf.timeout[order])
        if len(tail):
            net = self.policy(skill)
            with torch.inference_mode():
                _, v = net(visual_tensor(buf.next_obs[order[tail]]))
            boot[tail] = v.double().numpy()
        g = discounted_returns(buf.reward[order], buf.last[order], buf.done[order], boot, self.config.gamma)
        return order, g

    def awr_update(self, skill: int, force: bool = False) -> dict | None:
        cfg = self.config
        buf = self.buffers.get(skill)
        if buf is None or buf.size == 0 or (buf.new < cfg.update_every and not force):
            return None
        net = self.policy(skill)
        opt = self.optims[skill]
        order, g = self.returns(skill)
        stats: dict = {}
        for _ in range(cfg.grad_steps):
            pick = self.rng.integers(len(order), size=min(cfg.batch_size, len(order)))
            idx = order[pick]
            logits, values = net(visual_tensor(buf.obs[idx]))
            loss, stats = awr_loss(logits, values, torch.from_numpy(buf.action[idx]),
                                   torch.from_numpy(g[pick]).float(), cfg.beta, cfg.max_weight, cfg.critic_coef)
            opt.zero_grad()
            loss.backward()
            opt.step()
        buf.new = 0
        self.update_counts[skill] = self.update_counts.get(skill, 0) + 1
        stats.update(skill=skill, buffer=buf.size, mean_return=float(g.mean()), updates=self.update_counts[skill])
        return stats

    # -- persistence --------------------------------------------------------

    def state_dict(self, with_buffers: bool = True) -> dict:
        out = {
            "nets": {k: v.state_dict() for k, v in self.nets.items()},
            "optims": {k: v.state_dict() for k, v in self.optims.items()},
            "update_counts": dict(self.update_counts),
            "rng": self.rng.bit_generator.state,
        }
        if with_buffers:
            out["buffers"] = {k: b.state_dict() for k, b in self.buffers.items()}
        return out

    def load_state_dict(self, state: dict) -> None:
        self.nets.clear()
        self.optims.clear()
        for k, sd in state["nets"].items():
            self.policy(k).load_state_dict(sd)
            load_optimizer(self.optims[k], state["optims"][k])
        self.update_counts = dict(state["update_counts"])
        self.rng.bit_generator.state = state["rng"]
        if "buffers" in state:
            self.buffers = {k: ReplayBuffer.from_state(b) for k, b in state["buffers"].items()}
