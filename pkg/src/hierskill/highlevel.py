"""High-level policy: trie-constrained skill decoding and token-level PPO.

A skill is emitted word by word.  At every position the logits are masked to
the continuations the trie of currently admissible skills allows, so the
decoded text is always one of them and its log-probability is the sum of the
per-token masked log-probabilities.

Each step's advantage is broadcast to all tokens of the emitted skill; the
clipped surrogate works on per-token ratios.  A KL penalty keeps the masked
token distributions near those of a frozen copy of the initial policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import craftworld as cw
from .goalspace import GoalCatalog, Vocabulary
from .nets import frozen_copy, load_optimizer, mlp, seeded

NEG_INF = -1e9


class SkillTrie:
    """Prefix tree over tokenized skill texts; leaves sit behind the EOS token."""

    def __init__(self, skills: Iterable[tuple[int, Sequence[int]]]):
        self.root: dict = {}
        self.size = 0
        for sid, tokens in skills:
            node = self.root
            for t in tokens[:-1]:
                node = node.setdefault(t, {})
            if tokens[-1] in node:
                raise ValueError(f"duplicate skill path {tuple(tokens)}")
            node[tokens[-1]] = sid
            self.size += 1

    def __len__(self) -> int:
        return self.size

    def allowed(self, prefix: Sequence[int]) -> list[int]:
        node = self.root
        for t in prefix:
            node = node[t]
        return sorted(node)

    def leaf(self, tokens: Sequence[int]) -> int:
        node = self.root
        for t in tokens:
            node = node[t]
        if isinstance(node, dict):
            raise KeyError(f"{tuple(tokens)} is not a complete skill")
        return node

    def paths(self) -> list[tuple[tuple[int, ...], int]]:
        out = []

        def walk(node, prefix):
            for t, child in sorted(node.items()):
                if isinstance(child, dict):
                    walk(child, prefix + (t,))
                else:
                    out.append((prefix + (t,), child))

        walk(self.root, ())
        return out


class SkillCodec:
    """Tokenized skill names for one catalog, with cached tries per admissible set."""

    def __init__(self, catalog: GoalCatalog, vocab: Vocabulary):
        self.vocab = vocab
        self.tokens = {g.id: vocab.tokenize(g.text) for g in catalog}
        self.max_len = max(len(t) for t in self.tokens.values())
        self._trie = lru_cache(maxsize=4096)(self._build)

    def _build(self, skills: frozenset[int]) -> SkillTrie:
        return SkillTrie((s, self.tokens[s]) for s in sorted(skills))

    def trie(self, skills: Iterable[int]) -> SkillTrie:
        return self._trie(frozenset(skills))


# --------------------------------------------------------------------------
# context features
# --------------------------------------------------------------------------

N_KINDS = len(cw.TileKind)


class FeatureSpec:
    """Structured caption features fed to the context encoder."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self.size = N_KINDS * 4 + (N_KINDS + 1) + 4 + len(cw.ITEMS) * 4 + 2 * len(vocab) + cw.N_VERIFIERS + 3

    def __call__(self, state: cw.WorldState, goal_text: str, remaining_frac: float, last_skill_text: str,
                 admissible: Iterable[int]) -> np.ndarray:
        f = np.zeros(self.size, dtype=np.float32)
        view = cw.local_view(state)
        r = cw.VIEW // 2
        ys, xs = np.nonzero(view != cw.VOID)
        kinds = view[ys, xs]
        dx, dy = xs - r, ys - r
        cheb = np.maximum(np.abs(dx), np.abs(dy))
        man = np.abs(dx) + np.abs(dy)
        for k in np.unique(kinds):
            sel = np.flatnonzero((kinds == k) & (cheb > 0))
            if len(sel) == 0:
                continue
            j = sel[np.lexsort((man[sel], cheb[sel]))[0]]
            o = int(k) * 4
            f[o: o + 4] = (1.0, 1.0 - cheb[j] / (r + 1), dx[j] / r, dy[j] / r)
        o = N_KINDS * 4
        fk = state.faced_kind()
        f[o + (N_KINDS if fk is None else fk)] = 1.0
        o += N_KINDS + 1
        f[o + state.facing] = 1.0
        o += 4
        for i, c in enumerate(state.inv):
            f[o + 4 * i: o + 4 * i + 4] = (c / cw.MAX_ITEM, c >= 1, c >= 2, c >= 4)
        o += 4 * len(cw.ITEMS)
        for t in self.vocab.bag(goal_text):
            f[o + t] = 1.0
        o += len(self.vocab)
        if last_skill_text:
            for t in self.vocab.bag(last_skill_text):
                f[o + t] = 1.0
        o += len(self.vocab)
        for s in admissible:
            if s >= cw.N_ACTIONS:
                f[o + s] = 1.0
        o += cw.N_VERIFIERS
        n = state.side
        f[o: o + 3] = (remaining_frac, state.pos[0] / n, state.pos[1] / n)
        return f


# --------------------------------------------------------------------------
# network
# --------------------------------------------------------------------------


@dataclass
class HLConfig:
    hidden: int = 256
    token_embed: int = 64
    value_hidden: tuple[int, int] = (256, 256)
    lr: float = 1e-5
    gamma: float = 0.95
    lam: float = 0.9
    clip: float = 0.2
    entropy_coef: float = 0.01
    kl_coef: float = 0.1
    vf_coef: float = 0.5
    epochs: int = 4
    minibatch: int = 256
    max_grad_norm: float = 0.5


class HLNet(nn.Module):
    def __init__(self, n_features: int, vocab_size: int, config: HLConfig):
        super().__init__()
        h = config.hidden
        self.encoder = nn.Sequential(nn.Linear(n_features, h), nn.ReLU(), nn.Linear(h, h), nn.Tanh())
        self.bos = vocab_size
        self.embed = nn.Embedding(vocab_size + 1, config.token_embed)
        self.gru = nn.GRUCell(config.token_embed, h)
        self.head = nn.Linear(h, vocab_size)
        self.value_head = mlp([h, *config.value_hidden, 1])
        nn.init.normal_(self.head.weight, std=0.01)
        nn.init.zeros_(self.head.bias)

    def context(self, feats: torch.Tensor) -> torch.Tensor:
        return self.encoder(feats)

    def value_from_context(self, ctx: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.value_head(ctx)).squeeze(-1)

    def token_logits(self, ctx: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        """Teacher-forced logits ``(B, L, V)`` for emitted ``tokens (B, L)``."""
        b, length = tokens.shape
        prev = torch.cat([torch.full((b, 1), self.bos, dtype=torch.long), tokens[:, :-1]], dim=1)
        emb = self.embed(prev)
        h = ctx
        out = []
        for t in range(length):
            h = self.gru(emb[:, t], h)
            out.append(self.head(h))
        return torch.stack(out, dim=1)


def masked_log_softmax(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    return torch.log_softmax(logits.masked_fill(~mask, NEG_INF), dim=-1)


# --------------------------------------------------------------------------
# advantages and loss
# --------------------------------------------------------------------------


def gae(rewards: Sequence[float], values: Sequence[float], dones: Sequence[bool], gamma: float, lam: float,
        last_value: float = 0.0) -> np.ndarray:
    """Generalized advantage estimates for one trajectory."""
    n = len(rewards)
    adv = np.zeros(n)
    run = 0.0
    for t in range(n - 1, -1, -1):
        nxt = last_value if t == n - 1 else values[t + 1]
        nonterm = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * nxt * nonterm - values[t]
        run = delta + gamma * lam * nonterm * run
        adv[t] = run
    return adv


def ppo_token_loss(logits: torch.Tensor, ref_logits: torch.Tensor, masks: torch.Tensor, tokens: torch.Tensor,
                   valid: torch.Tensor, old_logp: torch.Tensor, advantages: torch.Tensor, values: torch.Tensor,
                   returns: torch.Tensor, config: HLConfig) -> tuple[torch.Tensor, dict]:
    """Clipped token-level surrogate + entropy bonus + KL to reference + value regression.

    Shapes: ``logits, ref_logits, masks`` are ``(B, L, V)``; ``tokens, valid,
    old_logp`` are ``(B, L)``; ``advantages, values, returns`` are ``(B,)``.
    """
    logp_all = masked_log_softmax(logits, masks)
    ref_all = masked_log_softmax(ref_logits, masks)
    p_all = logp_all.exp()
    logp = logp_all.gather(2, tokens[..., None]).squeeze(-1)
    vf = valid.float()
    n_tok = vf.sum().clamp(min=1.0)
    ratio = torch.exp(logp - old_logp)
    adv = advantages[:, None].expand_as(ratio)
    surr = torch.min(ratio * adv, ratio.clamp(1 - config.clip, 1 + config.clip) * adv)
    policy_loss = -(surr * vf).sum() / n_tok
    inner = torch.where(masks, p_all * logp_all, torch.zeros_like(p_all))
    entropy = -(inner.sum(-1) * vf).sum() / n_tok
    kl_terms = torch.where(masks, p_all * (logp_all - ref_all), torch.zeros_like(p_all))
    kl = (kl_terms.sum(-1) * vf).sum() / n_tok
    value_loss = F.mse_loss(values, returns)
    loss = policy_loss - config.entropy_coef * entropy + config.kl_coef * kl + config.vf_coef * value_loss
    return loss, {"policy_loss": policy_loss.item(), "entropy": entropy.item(), "kl": kl.item(),
                  "value_loss": value_loss.item()}


# --------------------------------------------------------------------------
# policy
# --------------------------------------------------------------------------


@dataclass
class Decision:
    skill: int
    tokens: tuple[int, ...]
    token_logp: np.ndarray
    masks: np.ndarray  # (L_max, V) bool
    value: float

    @property
    def logp(self) -> float:
        return float(self.token_logp.sum())


@dataclass
class HLTransition:
    features: np.ndarray
    decision: Decision
    reward: float
    done: bool


@dataclass
class HLTrajectory:
    goal: int
    steps: list[HLTransition] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)


class HighLevelPolicy:
    def __init__(self, catalog: GoalCatalog, vocab: Vocabulary, config: HLConfig | None = None, seed: int = 0):
        self.config = config or HLConfig()
        self.catalog = catalog
        self.vocab = vocab
        self.codec = SkillCodec(catalog, vocab)
        self.features = FeatureSpec(vocab)
        with seeded(seed * 104729 + 11):
            self.net = HLNet(self.features.size, len(vocab), self.config)
        self.reference = frozen_copy(self.net)
        self.optim = torch.optim.Adam(self.net.parameters(), lr=self.config.lr)
        self.rng = np.random.default_rng([seed, 0x41])
        self.updates = 0

    @property
    def max_len(self) -> int:
        return self.codec.max_len

    @torch.inference_mode()
    def value(self, feats: np.ndarray) -> float:
        ctx = self.net.context(torch.from_numpy(np.atleast_2d(feats)))
        return float(self.net.value_from_context(ctx)[0])

    @torch.inference_mode()
    def decode(self, feats: np.ndarray, admissible: Iterable[int], rng: np.random.Generator | None = None,
               greedy: bool = False) -> Decision:
        """Sample (or argmax) a skill token by token inside the admissible trie."""
        rng = rng or self.rng
        trie = self.codec.trie(admissible)
        if len(trie) == 0:
            raise ValueError("empty admissible set")
        v = len(self.vocab)
        masks = np.zeros((self.max_len, v), dtype=bool)
        masks[:, 0] = True  # padding positions only allow EOS
        logps = np.zeros(self.max_len)
        net = self.net
        ctx = net.context(torch.from_numpy(np.atleast_2d(feats)))
        value = float(net.value_from_context(ctx)[0])
        h = ctx
        prev = net.bos
        tokens: list[int] = []
        node = trie.root
        while isinstance(node, dict):
            pos = len(tokens)
            allowed = sorted(node)
            h = net.gru(net.embed(torch.tensor([prev])), h)
            masks[pos] = False
            masks[pos, allowed] = True
            if len(allowed) == 1:
                tok = allowed[0]
            else:
                lg = net.head(h)[0].double().numpy()[allowed]
                lg = lg - lg.max()
                p = np.exp(lg)
                p /= p.sum()
                if greedy:
                    k = int(np.argmax(p))
                else:
                    k = int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), len(p) - 1))
                tok = allowed[k]
                logps[pos] = np.log(p[k])
            tokens.append(tok)
            prev = tok
            node = node[tok]
        return Decision(node, tuple(tokens), logps, masks, value)

    @torch.inference_mode()
    def skill_logprob(self, feats: np.ndarray, admissible: Iterable[int], skill: int) -> float:
        """Masked log-probability of a full skill (sum over its tokens)."""
        trie = self.codec.trie(admissible)
        toks = self.codec.tokens[skill]
        ctx = self.net.context(torch.from_numpy(np.atleast_2d(feats)))
        logits = self.net.token_logits(ctx, torch.tensor([toks]))[0]
        total = 0.0
        for pos, t in enumerate(toks):
            allowed = trie.allowed(toks[:pos])
            lp = torch.log_softmax(logits[pos, allowed].double(), dim=-1)
            total += float(lp[allowed.index(t)])
        return total

    # -- training ---------------------------------------------------------------

    def _batch(self, trajs: Sequence[HLTrajectory]):
        cfg = self.config
        feats, tokens, masks, old, adv, ret, vals = [], [], [], [], [], [], []
        for tr in trajs:
            values = [s.decision.value for s in tr.steps]
            a = gae([s.reward for s in tr.steps], values, [s.done for s in tr.steps], cfg.gamma, cfg.lam)
            adv.extend(a)
            ret.extend(a + np.asarray(values))
            vals.extend(values)
            for s in tr.steps:
                feats.append(s.features)
                t = list(s.decision.tokens) + [0] * (self.max_len - len(s.decision.tokens))
                tokens.append(t)
                masks.append(s.decision.masks)
                old.append(s.decision.token_logp)
        valid = np.array([[i < len(s.decision.tokens) for i in range(self.max_len)]
                          for tr in trajs for s in tr.steps])
        return (torch.from_numpy(np.stack(feats)), torch.tensor(tokens), torch.from_numpy(np.stack(masks)),
                torch.from_numpy(valid), torch.from_numpy(np.stack(old)).float(),
                torch.tensor(adv, dtype=torch.float32), torch.tensor(ret, dtype=torch.float32))

    def ppo_update(self, trajs: Sequence[HLTrajectory], min_transitions: int = 0) -> dict | None:
        cfg = self.config
        n = sum(len(t) for t in trajs)
        if n == 0 or n < min_transitions:
            return None
        feats, tokens, masks, valid, old, adv, ret = self._batch(trajs)
        with torch.no_grad():
            ref_logits = self.reference.token_logits(self.reference.context(feats), tokens)
        stats: dict[str, float] = {}
        sums: dict[str, float] = {}
        count = 0
        for _ in range(cfg.epochs):
            perm = torch.from_numpy(self.rng.permutation(n))
            for i in range(0, n, cfg.minibatch):
                b = perm[i: i + cfg.minibatch]
                ctx = self.net.context(feats[b])
                logits = self.net.token_logits(ctx, tokens[b])
                values = self.net.value_from_context(ctx)
                loss, stats = ppo_token_loss(logits, ref_logits[b], masks[b], tokens[b], valid[b], old[b], adv[b],
                                             values, ret[b], cfg)
                self.optim.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(self.net.parameters(), cfg.max_grad_norm)
                self.optim.step()
                for k, v in stats.items():
                    sums[k] = sums.get(k, 0.0) + v
                count += 1
        self.updates += 1
        out = {k: v / count for k, v in sums.items()}
        out.update(transitions=n, kl_post=self.batch_kl(feats, tokens, masks, valid),
                   mean_skill_length=float(valid.sum(1).float().mean()), updates=self.updates,
                   mean_reward=float(np.mean([s.reward for t in trajs for s in t.steps])))
        return out

    @torch.no_grad()
    def batch_kl(self, feats: torch.Tensor, tokens: torch.Tensor, masks: torch.Tensor, valid: torch.Tensor) -> float:
        logits = self.net.token_logits(self.net.context(feats), tokens)
        ref = self.reference.token_logits(self.reference.context(feats), tokens)
        lp = masked_log_softmax(logits, masks)
        lr = masked_log_softmax(ref, masks)
        terms = torch.where(masks, lp.exp() * (lp - lr), torch.zeros_like(lp)).sum(-1)
        return float((terms * valid).sum() / valid.sum().clamp(min=1))

    # -- persistence ------------------------------------------------------------

    def state_dict(self) -> dict:
        return {"net": self.net.state_dict(), "reference": self.reference.state_dict(),
                "optim": self.optim.state_dict(), "rng": self.rng.bit_generator.state, "updates": self.updates}

    def load_state_dict(self, state: dict) -> None:
        self.net.load_state_dict(state["net"])
        self.reference.load_state_dict(state["reference"])
        load_optimizer(self.optim, state["optim"])
        self.rng.bit_generator.state = state["rng"]
        self.updates = state["updates"]
