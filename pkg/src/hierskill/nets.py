"""Small torch building blocks shared by the learners."""

from __future__ import annotations

import copy
from contextlib import contextmanager
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import craftworld as cw

N_VIEW = cw.VIEW * cw.VIEW
N_ITEMS = len(cw.ITEMS)
# tile one-hot + faced-cell marker + one constant plane per inventory item
VISUAL_CHANNELS = cw.N_TILE_IDS + 1 + N_ITEMS
FLAT_FEATURES = N_VIEW * cw.N_TILE_IDS + 4 + N_ITEMS

_CENTER = cw.VIEW // 2
_FACED_INDEX = np.array(
    [(_CENTER + dy) * cw.VIEW + (_CENTER + dx) for dx, dy in (cw.DIRECTION_DELTAS[f] for f in range(4))]
)


def visual_tensor(obs: np.ndarray) -> torch.Tensor:
    """``(B, OBS_LEN)`` uint8 observations -> ``(B, C, 9, 9)`` float planes."""
    obs = np.atleast_2d(obs)
    b = obs.shape[0]
    tiles = torch.from_numpy(obs[:, :N_VIEW].astype(np.int64))
    onehot = F.one_hot(tiles, cw.N_TILE_IDS).float()  # B, 81, T
    marker = torch.zeros(b, N_VIEW, 1)
    marker[torch.arange(b), torch.from_numpy(_FACED_INDEX[obs[:, N_VIEW].astype(np.int64)]), 0] = 1.0
    inv = torch.from_numpy(obs[:, N_VIEW + 1:].astype(np.float32) / cw.MAX_ITEM)
    planes = torch.cat([onehot, marker, inv[:, None, :].expand(b, N_VIEW, N_ITEMS)], dim=2)
    return planes.transpose(1, 2).reshape(b, VISUAL_CHANNELS, cw.VIEW, cw.VIEW).contiguous()


def flat_features(obs: np.ndarray) -> torch.Tensor:
    """``(B, OBS_LEN)`` uint8 observations -> ``(B, FLAT_FEATURES)`` floats."""
    obs = np.atleast_2d(obs)
    tiles = torch.from_numpy(obs[:, :N_VIEW].astype(np.int64))
    onehot = F.one_hot(tiles, cw.N_TILE_IDS).float().reshape(obs.shape[0], -1)
    facing = F.one_hot(torch.from_numpy(obs[:, N_VIEW].astype(np.int64)), 4).float()
    inv = torch.from_numpy(obs[:, N_VIEW + 1:].astype(np.float32) / cw.MAX_ITEM)
    return torch.cat([onehot, facing, inv], dim=1)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Identity() if cin == cout else nn.Conv2d(cin, cout, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.conv1(x))
        return F.relu(self.conv2(h) + self.skip(x))


def mlp(sizes: Sequence[int], act: type[nn.Module] = nn.ReLU) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2:
            layers.append(act())
    return nn.Sequential(*layers)


@contextmanager
def seeded(seed: int):
    """Deterministic parameter init without touching the global stream for others."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


def frozen_copy(module: nn.Module) -> nn.Module:
    snap = copy.deepcopy(module)
    for p in snap.parameters():
        p.requires_grad_(False)
    snap.eval()
    return snap


def load_optimizer(optim: torch.optim.Optimizer, state: dict) -> None:
    """Load a copy: ``Optimizer.load_state_dict`` keeps the caller's moment tensors."""
    optim.load_state_dict(copy.deepcopy(state))
