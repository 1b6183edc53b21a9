"""Held-out evaluation, score formulas and plot-data export."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import craftworld as cw
from .goalspace import Goal, GoalCatalog, make_n_compositional, synonym_goals
from .lowlevel import GREEDY, SAMPLE, PolicyBank
from .orchestrator import TRAIN_SEED_SPACE, Agent, AttemptRecord, run_goal_attempt

HELD_OUT_BASE = TRAIN_SEED_SPACE
SYNONYM_RUNS = 8
MOVE_BUCKET = "move"
UNTRACKED_SKILL = "untracked_sg"
UNTRACKED_ACTION = "untracked_ea"


class ScoreInputError(ValueError):
    pass


def held_out_seeds(n: int, offset: int = 0) -> list[int]:
    return [HELD_OUT_BASE + offset + i for i in range(n)]


def _check_rates(rates: Sequence[float]) -> np.ndarray:
    x = np.asarray(rates, dtype=np.float64)
    if x.size == 0:
        raise ScoreInputError("need at least one success rate")
    if np.any(~np.isfinite(x)) or np.any(x < 0) or np.any(x > 100):
        raise ScoreInputError(f"success rates must be percentages in [0, 100], got {rates}")
    return x


def crafter_score(success_rates: Sequence[float], n: int | None = None) -> float:
    """Geometric-mean style score over per-goal success percentages."""
    x = _check_rates(success_rates)
    if n is not None and n != x.size:
        raise ScoreInputError(f"N={n} does not match {x.size} success rates")
    return math.exp(float(np.mean(np.log1p(x)))) - 1.0


def synonym_score(groups: Mapping[str, Sequence[float]]) -> float:
    """Like :func:`crafter_score`, with each goal's log term averaged over its reformulations."""
    if not groups:
        raise ScoreInputError("need at least one goal group")
    per_goal = []
    for goal, rates in groups.items():
        if len(rates) == 0:
            raise ScoreInputError(f"empty reformulation group for {goal!r}")
        per_goal.append(float(np.mean(np.log1p(_check_rates(rates)))))
    return math.exp(float(np.mean(per_goal))) - 1.0


def steps_to_mastery(records: Iterable[Mapping], goal: str, threshold: float = 0.8,
                     step_key: str = "hl_steps") -> int | None:
    """First eval step at which the goal's success rate exceeds ``threshold``."""
    for r in records:
        if r.get("kind") != "eval":
            continue
        sr = r["success_rates"].get(goal)
        if sr is not None and sr > threshold:
            return r[step_key]
    return None


def skill_call_histogram(records: Sequence[AttemptRecord], catalog: GoalCatalog,
                         tracked: Iterable[str] | None = None) -> dict[str, float]:
    """Mean calls per trajectory for each skill, with all moves merged.

    With ``tracked`` given, other achievement skills and other elementary
    actions fall into their own two catch-all buckets.
    """
    if not records:
        return {}
    keep = None if tracked is None else set(tracked)
    counts: Counter[str] = Counter()
    for rec in records:
        for s in rec.steps:
            g = catalog.by_id[s.skill]
            name = MOVE_BUCKET if g.is_elementary and g.verifier in cw.MOVE_FACING else g.text
            if keep is not None and name not in keep:
                name = UNTRACKED_ACTION if g.is_elementary else UNTRACKED_SKILL
            counts[name] += 1
    return {k: v / len(records) for k, v in sorted(counts.items())}


@dataclass
class EvalReport:
    env_steps: int
    hl_steps: int
    n_seeds: int
    success_rates: dict[str, float]
    crafter_score: float
    mean_hl_calls: dict[str, float | None]
    histograms: dict[str, dict[str, float]] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {"kind": "eval", **asdict(self)}


def eval_attempt(agent: Agent, goal: Goal, seed: int, side: int, greedy: bool = True,
                 ll_greedy: bool | None = None) -> AttemptRecord:
    """One goal attempt on a fresh held-out world, with its own rng stream."""
    state = cw.generate_world(seed, side)
    rng = np.random.default_rng([seed, goal.id, 0xEE])
    return run_goal_attempt(agent, state, goal, rng, greedy=greedy, ll_greedy=ll_greedy)


def skill_rollout(goal: Goal, state: cw.WorldState, choose, max_steps: int) -> tuple[bool, int]:
    """Run ``choose(state) -> action`` until the goal fires or ``max_steps`` pass."""
    for t in range(max_steps):
        a = choose(state)
        nxt, fired = cw.step(state, a)
        if goal.fired(state, a, nxt, fired):
            return True, t + 1
        state = nxt
    return False, max_steps


def random_policy_success_rate(goal: Goal, seeds: Sequence[int], side: int, max_steps: int) -> float:
    """Success rate of uniformly random elementary actions, one fresh world per seed."""
    wins = 0
    for seed in seeds:
        rng = np.random.default_rng([seed, 0x5EED])
        ok, _ = skill_rollout(goal, cw.generate_world(seed, side), lambda s: int(rng.integers(cw.N_ACTIONS)),
                              max_steps)
        wins += ok
    return wins / len(seeds)


def ll_success_rate(bank: PolicyBank, goal: Goal, n_seeds: int, side: int, max_steps: int,
                    mode: str = SAMPLE) -> float:
    """Success rate of the goal's own low-level policy run directly on held-out worlds."""
    bank.policy(goal.id)
    wins = 0
    for seed in held_out_seeds(n_seeds):
        rng = np.random.default_rng([seed, goal.id, 0x11])
        ok, _ = skill_rollout(goal, cw.generate_world(seed, side),
                              lambda s: bank.act(cw.encode_obs(s), goal.id, mode, rng), max_steps)
        wins += ok
    return wins / n_seeds


def evaluate_goals(agent: Agent, goals: Sequence[Goal], seeds: Sequence[int], side: int,
                   greedy: bool = True, ll_greedy: bool | None = None) -> dict[str, list[AttemptRecord]]:
    if any(s < HELD_OUT_BASE for s in seeds):
        raise ValueError("evaluation seeds must come from the held-out range")
    return {g.text: [eval_attempt(agent, g, s, side, greedy, ll_greedy) for s in seeds] for g in goals}


def evaluate(agent: Agent, goals: Sequence[Goal], n_seeds: int, side: int, greedy: bool = True,
             env_steps: int = 0, hl_steps: int = 0, ll_greedy: bool | None = None) -> EvalReport:
    runs = evaluate_goals(agent, goals, held_out_seeds(n_seeds), side, greedy, ll_greedy)
    rates, calls, hists = {}, {}, {}
    for text, recs in runs.items():
        wins = [r for r in recs if r.success]
        rates[text] = len(wins) / len(recs)
        calls[text] = float(np.mean([len(r.steps) for r in wins])) if wins else None
        hists[text] = skill_call_histogram(wins, agent.catalog)
    score = crafter_score([100 * r for r in rates.values()])
    # how far each goal has been compiled: its own low-level policy, run alone
    mode = GREEDY if (greedy if ll_greedy is None else ll_greedy) else SAMPLE
    ll_rates = {g.text: (ll_success_rate(agent.bank, g, n_seeds, side, agent.budgets.steps_per_skill, mode)
                         if agent.bank.has_policy(g.id) else None) for g in goals}
    return EvalReport(env_steps, hl_steps, n_seeds, rates, score, calls, hists, {"ll_success_rates": ll_rates})


def synonym_suite(agent: Agent, goals: Sequence[Goal], side: int, runs: int = SYNONYM_RUNS,
                  greedy: bool = True) -> dict:
    seeds = held_out_seeds(runs)
    groups: dict[str, dict[str, float]] = {}
    for g in goals:
        variants = synonym_goals(g)
        res = evaluate_goals(agent, variants, seeds, side, greedy)
        groups[g.text] = {t: 100 * sum(r.success for r in recs) / len(recs) for t, recs in res.items()}
    return {"suite": "synonym", "runs": runs, "groups": groups,
            "score": synonym_score({k: list(v.values()) for k, v in groups.items()})}


def compositional_suite(agent: Agent, goals: Sequence[Goal], n: int, side: int, n_seeds: int = 40,
                        greedy: bool = True) -> dict:
    variants = [make_n_compositional(g, n) for g in goals if not (g.is_go_to or g.is_elementary)]
    if not variants:
        raise ValueError("no goal admits an n-compositional variant")
    res = evaluate_goals(agent, variants, held_out_seeds(n_seeds), side, greedy)
    rates = {t: 100 * sum(r.success for r in recs) / len(recs) for t, recs in res.items()}
    return {"suite": f"compositional-{n}", "n_seeds": n_seeds, "success_rates": rates,
            "score": crafter_score(list(rates.values()))}


# --------------------------------------------------------------------------
# tabular export
# --------------------------------------------------------------------------

PLOT_TABLES = {
    "success_rates.csv": ("env_steps", "hl_steps", "goal", "success_rate"),
    "crafter_score.csv": ("env_steps", "hl_steps", "crafter_score"),
    "mastery.csv": ("goal", "difficulty", "hl_steps_to_mastery"),
    "skill_calls.csv": ("env_steps", "hl_steps", "goal", "bucket", "mean_calls"),
    "hl_calls.csv": ("env_steps", "hl_steps", "goal", "mean_hl_calls"),
}


def export_plot_data(records: Sequence[Mapping], out_dir: str | Path) -> dict[str, int]:
    """Flatten eval records into one CSV per figure; returns row counts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    evals = [r for r in records if r.get("kind") == "eval"]
    rows: dict[str, list[tuple]] = {k: [] for k in PLOT_TABLES}
    goals: list[str] = []
    for r in evals:
        at = (r["env_steps"], r["hl_steps"])
        rows["crafter_score.csv"].append((*at, r["crafter_score"]))
        for g, sr in r["success_rates"].items():
            if g not in goals:
                goals.append(g)
            rows["success_rates.csv"].append((*at, g, sr))
            rows["hl_calls.csv"].append((*at, g, "" if r["mean_hl_calls"][g] is None else r["mean_hl_calls"][g]))
            for bucket, v in r.get("histograms", {}).get(g, {}).items():
                rows["skill_calls.csv"].append((*at, g, bucket, v))
    for g in goals:
        try:
            d = float(cw.difficulty(g))
        except KeyError:
            d = ""
        m = steps_to_mastery(evals, g)
        rows["mastery.csv"].append((g, d, "" if m is None else m))
    for name, header in PLOT_TABLES.items():
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows[name])
    return {k: len(v) for k, v in rows.items()}
