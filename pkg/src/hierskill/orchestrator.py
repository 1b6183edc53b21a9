"""Episode loop, step budgets, transition routing and the training driver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import craftworld as cw
from . import skillspace
from .competence import CompetenceEstimator
from .goalspace import Goal, GoalCatalog, Vocabulary
from .highlevel import HighLevelPolicy, HLTrajectory, HLTransition
from .lowlevel import GREEDY, SAMPLE, LLSegment, PolicyBank
from .sampler import GoalSampler
from .skillspace import UpdateFrequencyTracker

TRAIN_SEED_SPACE = 2**30


class EpisodeCapError(RuntimeError):
    pass


@dataclass
class RunBudgets:
    skills_per_attempt: int = 64
    steps_per_skill: int = 128
    episode_cap: int = 155
    envs_parallel: int = 48
    cycle_size: int = 2496

    def __post_init__(self):
        for name in ("skills_per_attempt", "steps_per_skill", "episode_cap", "envs_parallel", "cycle_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Agent:
    """Everything a rollout reads, plus the learners the trainer writes."""

    catalog: GoalCatalog
    vocab: Vocabulary
    hl: HighLevelPolicy
    bank: PolicyBank
    estimator: CompetenceEstimator
    tracker: UpdateFrequencyTracker
    budgets: RunBudgets
    flat: bool = False


@dataclass
class StepRecord:
    skill: int
    n_admissible: int
    ll_steps: int
    goal_fired: bool
    skill_fired: bool


@dataclass
class AttemptRecord:
    goal: Goal
    start: cw.WorldState
    end: cw.WorldState
    steps: list[StepRecord] = field(default_factory=list)
    segments: list[LLSegment] = field(default_factory=list)
    trajectory: HLTrajectory | None = None
    hl_obs: list[np.ndarray] = field(default_factory=list)
    # (env step index within the attempt, fired verifier ids), only non-empty events beyond the action id
    events: list[tuple[int, list[int]]] = field(default_factory=list)
    inclusion: dict[int, list[float]] = field(default_factory=dict)
    success: bool = False

    @property
    def env_steps(self) -> int:
        return sum(s.ll_steps for s in self.steps)

    @property
    def actions(self) -> list[int]:
        return [a for seg in self.segments for a in seg.actions]


@dataclass
class EpisodeRecord:
    seed: int
    attempts: list[AttemptRecord] = field(default_factory=list)

    @property
    def goals(self) -> list[str]:
        return [a.goal.text for a in self.attempts]

    @property
    def hl_steps(self) -> int:
        return sum(len(a.steps) for a in self.attempts)


def run_goal_attempt(agent: Agent, state: cw.WorldState, goal: Goal, rng: np.random.Generator,
                     greedy: bool = False, last_skill: str = "", ll_greedy: bool | None = None) -> AttemptRecord:
    """Pursue ``goal`` from ``state`` until it fires or the skill budget runs out.

    Learners are only read; the caller routes the returned record to them.
    ``ll_greedy`` defaults to ``greedy``.
    """
    b = agent.budgets
    budget = min(b.skills_per_attempt, b.episode_cap - state.hl_step_count)
    if budget <= 0:
        raise EpisodeCapError(f"episode already at {state.hl_step_count} high-level steps")
    catalog = agent.catalog
    rec = AttemptRecord(goal, state, state, trajectory=HLTrajectory(goal.id))
    ll_mode = GREEDY if (greedy if ll_greedy is None else ll_greedy) else SAMPLE
    t = 0
    for k in range(budget):
        obs = cw.encode_obs(state)
        rec.hl_obs.append(obs)
        adm = skillspace.build(obs, catalog, agent.estimator, agent.tracker, rng, flat=agent.flat)
        for gid, (p, _) in adm.draws.items():
            rec.inclusion.setdefault(gid, []).append(p)
        feats = agent.hl.features(state, goal.text, (budget - k) / b.skills_per_attempt, last_skill, adm.skills)
        dec = agent.hl.decode(feats, adm.skills, rng, greedy=greedy)
        skill = catalog.by_id[dec.skill]
        seg = LLSegment(skill.id, skill.is_elementary)
        if not skill.is_elementary:
            agent.bank.policy(skill.id)
        limit = 1 if skill.is_elementary else b.steps_per_skill
        goal_fired = skill_fired = False
        while len(seg.actions) < limit and not (goal_fired or skill_fired):
            o = obs if not seg.actions else cw.encode_obs(state)
            a = agent.bank.act(o, skill.id, ll_mode, rng)
            nxt, fired = cw.step(state, a)
            skill_fired = skill.fired(state, a, nxt, fired)
            goal_fired = goal.fired(state, a, nxt, fired)
            seg.obs.append(o)
            seg.actions.append(a)
            seg.skill_rewards.append(float(skill_fired))
            seg.goal_rewards.append(float(goal_fired))
            if len(fired) > 1:
                rec.events.append((t, fired[1:]))
            t += 1
            state = nxt
        seg.final_obs = cw.encode_obs(state)
        state = state.with_counters(hl_step_count=state.hl_step_count + 1)
        rec.segments.append(seg)
        rec.steps.append(StepRecord(skill.id, len(adm), len(seg.actions), goal_fired, skill_fired))
        rec.trajectory.steps.append(HLTransition(feats, dec, float(goal_fired), goal_fired))
        last_skill = skill.text
        if goal_fired:
            rec.success = True
            break
    rec.end = state
    return rec


# --------------------------------------------------------------------------
# training driver
# --------------------------------------------------------------------------


def episode_seed(master: int, env_index: int, episode: int) -> int:
    """Training world seeds live in [0, 2**30); held-out seeds start at 2**30."""
    ss = np.random.SeedSequence([master, env_index, episode])
    return int(ss.generate_state(1, dtype=np.uint32)[0]) % TRAIN_SEED_SPACE


@dataclass
class EnvSlot:
    index: int
    rng: np.random.Generator
    side: int
    episode: int = 0
    seed: int = 0
    state: cw.WorldState | None = None
    last_skill: str = ""

    def reset(self, master: int) -> None:
        self.seed = episode_seed(master, self.index, self.episode)
        self.state = cw.generate_world(self.seed, self.side)
        self.episode += 1
        self.last_skill = ""


@dataclass
class Counters:
    env_steps: int = 0
    hl_steps: int = 0
    attempts: int = 0
    episodes: int = 0
    cycle: int = 0
    cycle_hl_steps: int = 0


class Trainer:
    """Collect/train alternation over round-robin environment slots.

    ``emit(record)`` receives every metrics record in order.
    """

    def __init__(self, agent: Agent, sampler: GoalSampler, seed: int, side: int,
                 emit: Callable[[dict], None] = lambda r: None):
        self.agent = agent
        self.sampler = sampler
        self.seed = seed
        self.side = side
        self.emit = emit
        self.counters = Counters()
        self.slots = [EnvSlot(i, np.random.default_rng(np.random.SeedSequence([seed, 0xE0, i])), side)
                      for i in range(agent.budgets.envs_parallel)]
        self.pending: list[HLTrajectory] = []
        self.cycle_inclusion: dict[int, list[float]] = {}
        self.cycle_included: dict[int, int] = {}

    # -- collection ---------------------------------------------------------

    def _record(self, kind: str, **fields) -> None:
        c = self.counters
        self.emit({"kind": kind, "env_steps": c.env_steps, "hl_steps": c.hl_steps, "cycle": c.cycle, **fields})

    def step_slot(self, slot: EnvSlot) -> AttemptRecord:
        agent = self.agent
        if slot.state is None or slot.state.hl_step_count >= agent.budgets.episode_cap:
            slot.reset(self.seed)
            self.counters.episodes += 1
        goal, info = self.sampler.sample_goal(cw.encode_obs(slot.state), slot.rng)
        rec = run_goal_attempt(agent, slot.state, goal, slot.rng, last_skill=slot.last_skill)
        slot.state = rec.end
        slot.last_skill = agent.catalog.by_id[rec.steps[-1].skill].text
        self.route(rec)
        c = self.counters
        c.env_steps += rec.env_steps
        c.hl_steps += len(rec.steps)
        c.cycle_hl_steps += len(rec.steps)
        c.attempts += 1
        self._record("attempt", env=slot.index, episode_seed=slot.seed, goal=goal.text, success=rec.success,
                     skills=[s.skill for s in rec.steps], ll_steps=[s.ll_steps for s in rec.steps],
                     episode_hl_steps=rec.end.hl_step_count, epsilon=info["epsilon"], explored=info["explored"],
                     lp=info["lp"])
        self.train_due()
        return rec

    def route(self, rec: AttemptRecord) -> None:
        """Send one finished attempt to every learner's data store."""
        agent = self.agent
        if not agent.flat:
            agent.bank.relabel_and_store(rec.segments, rec.goal.id)
            for seg in rec.segments:
                if not seg.elementary:
                    agent.estimator.record_execution(seg.obs, seg.skill, seg.success)
        self.sampler.record_outcome(rec.hl_obs, rec.goal, rec.success)
        self.pending.append(rec.trajectory)
        for gid, ps in rec.inclusion.items():
            self.cycle_inclusion.setdefault(gid, []).extend(ps)
        for s in rec.steps:
            if s.skill >= cw.N_ACTIONS:
                self.cycle_included[s.skill] = self.cycle_included.get(s.skill, 0) + 1

    def train_due(self) -> None:
        agent = self.agent
        if not agent.flat:
            for skill in agent.bank.due():
                stats = agent.bank.awr_update(skill)
                if stats is not None:
                    agent.tracker.record_update(skill)
                    self._record("ll_train", **stats)
            stats = agent.estimator.train_if_due()
            if stats is not None:
                self._record("estimator", **stats)
        stats = self.sampler.update_if_due()
        if stats is not None:
            self._record("sampler", **stats)

    def end_cycle(self) -> None:
        agent = self.agent
        stats = agent.hl.ppo_update(self.pending)
        self.pending = []
        c = self.counters
        if stats is not None:
            self._record("hl_train", **stats)
        if not agent.flat:
            incl = {agent.catalog.by_id[g].text: float(np.mean(p)) for g, p in sorted(self.cycle_inclusion.items())}
            calls = {agent.catalog.by_id[g].text: n for g, n in sorted(self.cycle_included.items())}
            self._record("skillspace", mean_inclusion=incl, skill_calls=calls,
                         recent_updates={agent.catalog.by_id[g.id].text: agent.tracker.count(g.id)
                                         for g in agent.catalog.achievements})
        self.cycle_inclusion = {}
        self.cycle_included = {}
        agent.estimator.end_cycle()
        agent.tracker.end_cycle()
        self.sampler.end_cycle()
        c.cycle += 1
        c.cycle_hl_steps = 0

    def run_cycle(self) -> None:
        """Collect at least ``cycle_size`` high-level transitions, then update."""
        i = 0
        while self.counters.cycle_hl_steps < self.agent.budgets.cycle_size:
            self.step_slot(self.slots[i % len(self.slots)])
            i += 1
        self.end_cycle()

    # -- persistence --------------------------------------------------------

    def state_dict(self) -> dict:
        a = self.agent
        return {
            "counters": vars(self.counters).copy(),
            "slots": [{"episode": s.episode, "seed": s.seed, "state": s.state, "last_skill": s.last_skill,
                       "rng": s.rng.bit_generator.state} for s in self.slots],
            "hl": a.hl.state_dict(),
            "bank": a.bank.state_dict(with_buffers=True),
            "estimator": a.estimator.state_dict(),
            "tracker": a.tracker.state_dict(),
            "sampler": self.sampler.state_dict(),
        }

    def load_state_dict(self, state: dict) -> None:
        a = self.agent
        self.counters = Counters(**state["counters"])
        for slot, s in zip(self.slots, state["slots"], strict=True):
            slot.episode, slot.seed, slot.state, slot.last_skill = s["episode"], s["seed"], s["state"], s["last_skill"]
            slot.rng.bit_generator.state = s["rng"]
        a.hl.load_state_dict(state["hl"])
        a.bank.load_state_dict(state["bank"])
        a.estimator.load_state_dict(state["estimator"])
        a.tracker.load_state_dict(state["tracker"])
        self.sampler.load_state_dict(state["sampler"])


# --------------------------------------------------------------------------
# full runs
# --------------------------------------------------------------------------


def build_agent(config) -> tuple[Agent, GoalSampler]:
    from .goalspace import default_catalog, default_vocabulary

    catalog = default_catalog()
    if config.goals is not None:
        catalog = catalog.subset(config.goals)
    vocab = default_vocabulary()
    seed = config.seed
    agent = Agent(
        catalog=catalog,
        vocab=vocab,
        hl=HighLevelPolicy(catalog, vocab, config.hl, seed=seed),
        bank=PolicyBank(config.ll, seed=seed),
        estimator=CompetenceEstimator(config.estimator, seed=seed),
        tracker=UpdateFrequencyTracker(),
        budgets=config.budgets,
        flat=config.flat_baseline,
    )
    return agent, GoalSampler(catalog.achievements, config.sampler, seed=seed)


def run_training(config, resume: bool = False, force: bool = False,
                 progress: Callable[[dict], None] | None = None) -> Trainer:
    """Train until the env-step budget, the cycle limit or the mastery stop rule is hit.

    Writes ``metrics.jsonl`` and ``checkpoint.pt`` under ``config.out_dir``.
    With ``resume`` the run continues from the checkpoint there and the
    metrics file is cut back to the records the checkpoint had seen.
    """
    from pathlib import Path

    from . import config as cfgmod
    from .evaluation import evaluate
    from .persistence import MetricsWriter, load_checkpoint, save_checkpoint

    out = Path(config.out_dir)
    ckpt_path = out / "checkpoint.pt"
    chash = cfgmod.config_hash(config)
    agent, sampler = build_agent(config)
    blob = load_checkpoint(ckpt_path, chash, force) if resume else None
    metrics = MetricsWriter(out / "metrics.jsonl", keep=blob["metrics_lines"] if blob else 0)

    def emit(record: dict) -> None:
        metrics.write(record)
        if progress is not None:
            progress(record)

    trainer = Trainer(agent, sampler, config.seed, config.world.side, emit)
    ev = config.eval
    eval_goals = [agent.catalog[t] for t in ev.goals] if ev.goals else list(agent.catalog.achievements)
    mastered_at: int | None = None
    evals_after = 0
    if blob is not None:
        trainer.load_state_dict(blob["trainer"])
        mastered_at, evals_after = blob["mastery"]
    else:
        (out / "config.yaml").write_text(cfgmod.dumps(config))
        emit({"kind": "run", "env_steps": 0, "hl_steps": 0, "cycle": 0, "config_hash": chash,
              "flat_baseline": config.flat_baseline, "seed": config.seed})
    c = trainer.counters

    def checkpoint() -> None:
        save_checkpoint(ckpt_path, chash, {"config": cfgmod.to_dict(config), "trainer": trainer.state_dict(),
                                           "metrics_lines": metrics.count, "mastery": (mastered_at, evals_after)})

    def finished() -> bool:
        if c.env_steps >= config.max_env_steps:
            return True
        if config.max_cycles is not None and c.cycle >= config.max_cycles:
            return True
        return mastered_at is not None and evals_after >= ev.extra_evals

    try:
        while not finished():
            trainer.run_cycle()
            if c.cycle % ev.every_cycles == 0:
                report = evaluate(agent, eval_goals, ev.n_seeds, config.world.side, ev.greedy, c.env_steps,
                                  c.hl_steps, ev.ll_greedy)
                emit({**report.record(), "cycle": c.cycle})
                if mastered_at is not None:
                    evals_after += 1
                elif ev.stop_after_mastery and report.success_rates.get(ev.stop_after_mastery, 0.0) > ev.threshold:
                    mastered_at = c.hl_steps
            if c.cycle % config.checkpoint_every_cycles == 0 and not finished():
                checkpoint()
        checkpoint()
    finally:
        metrics.close()
    return trainer
