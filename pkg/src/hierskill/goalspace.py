"""Goal catalog, precedence tree, synonym lexicon and word-level tokenizer."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from graphlib import CycleError, TopologicalSorter
from pathlib import Path
from typing import Iterable, Sequence

from . import craftworld as cw

ELEMENTARY = "elementary"
ACHIEVEMENT = "achievement"


class TokenizationError(KeyError):
    pass


class GoalError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Goal:
    id: int
    text: str
    kind: str
    verifier: int
    verb: str | None = None
    # the goal is reached when the verifier has fired `count` times this episode
    count: int = 1

    @property
    def is_elementary(self) -> bool:
        return self.kind == ELEMENTARY

    @property
    def is_go_to(self) -> bool:
        return self.text.split()[0] == "go" or self.verb == "go"

    def fired(self, prev: cw.WorldState, action: int, nxt: cw.WorldState, fired_ids: Sequence[int]) -> bool:
        if self.count == 1:
            return self.verifier in fired_ids
        return nxt.count(self.verifier) >= self.count > prev.count(self.verifier)


# collect/make/place/go synonym table
LEXICON: dict[str, tuple[str, ...]] = {
    "collect": ("gather", "acquire", "procure", "harvest", "amass"),
    "make": ("craft", "construct", "build", "acquire", "create"),
    "place": ("put", "putdown", "install", "deploy", "position"),
    "go": ("move", "walk", "proceed", "travel", "run"),
}

# g' -> g: finishing g' is a prerequisite of g
PRECEDENCE: tuple[tuple[str, str], ...] = (
    ("go to tree", "collect wood"),
    ("collect wood", "place table"),
    ("place table", "go to table"),
    ("place table", "make wood pickaxe"),
    ("go to stone", "collect stone"),
    ("make wood pickaxe", "collect stone"),
    ("go to coal", "collect coal"),
    ("make wood pickaxe", "collect coal"),
    ("collect stone", "place furnace"),
    ("place furnace", "go to furnace"),
)

TRAINING_ACHIEVEMENTS = tuple(range(cw.GO_TO_TREE, cw.GO_TO_FURNACE + 1))


def _default_goals() -> list[Goal]:
    goals = [Goal(int(a), cw.ACTION_TEXTS[a], ELEMENTARY, int(a)) for a in cw.Action]
    for gid in TRAINING_ACHIEVEMENTS:
        text = cw.ACHIEVEMENT_TEXTS[gid]
        goals.append(Goal(gid, text, ACHIEVEMENT, gid, text.split()[0]))
    return goals


SWORD_GOAL = Goal(cw.MAKE_WOOD_SWORD, "make wood sword", ACHIEVEMENT, cw.MAKE_WOOD_SWORD, "make")


class GoalCatalog:
    """Immutable goal set: every elementary action plus the achievement goals."""

    def __init__(self, goals: Iterable[Goal], precedence: Iterable[tuple[str, str]] = PRECEDENCE):
        self.goals: tuple[Goal, ...] = tuple(sorted(goals, key=lambda g: g.id))
        self.by_text = {g.text: g for g in self.goals}
        self.by_id = {g.id: g for g in self.goals}
        if len(self.by_text) != len(self.goals):
            raise GoalError("goal texts must be unique")
        if len(self.by_id) != len(self.goals):
            raise GoalError("goal ids must be unique")
        missing = {int(a) for a in cw.Action} - {g.verifier for g in self.goals if g.is_elementary}
        if missing:
            raise GoalError(f"catalog lacks elementary goals for actions {sorted(missing)}")
        self.precedence = tuple((a, b) for a, b in precedence if a in self.by_text and b in self.by_text)
        ts = TopologicalSorter()
        for a, b in self.precedence:
            ts.add(b, a)
        try:
            self.order = tuple(ts.static_order())
        except CycleError as exc:
            raise GoalError(f"precedence relation has a cycle: {exc.args[1]}") from None

    def __len__(self) -> int:
        return len(self.goals)

    def __iter__(self):
        return iter(self.goals)

    def __getitem__(self, text: str) -> Goal:
        return self.by_text[text]

    @property
    def elementary(self) -> tuple[Goal, ...]:
        return tuple(g for g in self.goals if g.is_elementary)

    @property
    def achievements(self) -> tuple[Goal, ...]:
        return tuple(g for g in self.goals if not g.is_elementary)

    def precedes(self, before: str, after: str) -> bool:
        """Transitive precedence test."""
        todo, seen = [before], set()
        while todo:
            cur = todo.pop()
            for a, b in self.precedence:
                if a == cur and b not in seen:
                    if b == after:
                        return True
                    seen.add(b)
                    todo.append(b)
        return False

    def subset(self, achievement_texts: Iterable[str]) -> "GoalCatalog":
        keep = set(achievement_texts)
        unknown = keep - {g.text for g in self.achievements}
        if unknown:
            raise GoalError(f"unknown achievement goals: {sorted(unknown)}")
        return GoalCatalog([g for g in self.goals if g.is_elementary or g.text in keep], self.precedence)

    # -- text file round trip -------------------------------------------------

    FIELDS = ("id", "text", "kind", "verifier", "verb")

    def dumps(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter="\t", lineterminator="\n")
        w.writerow(self.FIELDS)
        for g in self.goals:
            w.writerow((g.id, g.text, g.kind, g.verifier, g.verb or ""))
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "GoalCatalog":
        rows = list(csv.DictReader(io.StringIO(text), delimiter="\t"))
        goals = []
        for i, row in enumerate(rows, start=2):
            try:
                kind = row["kind"]
                if kind not in (ELEMENTARY, ACHIEVEMENT):
                    raise GoalError(f"bad kind {kind!r}")
                vid = int(row["verifier"])
                if vid not in cw.VERIFIERS:
                    raise GoalError(f"unknown verifier {vid}")
                goals.append(Goal(int(row["id"]), row["text"], kind, vid, row["verb"] or None))
            except (KeyError, ValueError, TypeError) as exc:
                raise GoalError(f"goal file line {i}: {exc}") from None
        return cls(goals)

    @classmethod
    def load(cls, path: str | Path) -> "GoalCatalog":
        return cls.loads(Path(path).read_text())


def default_catalog() -> GoalCatalog:
    return GoalCatalog(_default_goals())


# --------------------------------------------------------------------------
# reformulations
# --------------------------------------------------------------------------


def expand_synonyms(goal: Goal) -> list[str]:
    """Verb-substituted reformulations; empty for goals without a lexicon verb."""
    if goal.is_elementary or goal.verb not in LEXICON:
        return []
    rest = goal.text.split(maxsplit=1)[1]
    return [f"{syn} {rest}" for syn in LEXICON[goal.verb]]


def synonym_goals(goal: Goal) -> list[Goal]:
    return [replace(goal, id=10_000 + 100 * goal.id + i, text=t) for i, t in enumerate(expand_synonyms(goal))]


def make_n_compositional(goal: Goal, n: int) -> Goal:
    """``collect wood`` -> ``collect 2 woods`` with an n-th-firing verifier."""
    if not 2 <= n <= 4:
        raise GoalError(f"n must be in [2, 4], got {n}")
    if goal.is_elementary:
        raise GoalError("elementary goals have no compositional form")
    if goal.is_go_to:
        raise GoalError(f"{goal.text!r}: 'go to' goals are not repeatable")
    verb, obj = goal.text.split(maxsplit=1)
    return replace(goal, id=1_000 * n + goal.id, text=f"{verb} {n} {obj}s", count=n)


# --------------------------------------------------------------------------
# tokenizer
# --------------------------------------------------------------------------

EOS = "<eos>"


def _all_texts() -> list[str]:
    base = _default_goals() + [SWORD_GOAL]
    texts = [g.text for g in base]
    for g in base:
        texts.extend(expand_synonyms(g))
        if not g.is_elementary and not g.is_go_to:
            texts.extend(make_n_compositional(g, n).text for n in (2, 3, 4))
    return texts


class Vocabulary:
    """Word-level vocabulary; id 0 is end-of-sequence."""

    def __init__(self, words: Iterable[str]):
        self.words = (EOS, *sorted(set(words) - {EOS}))
        self.index = {w: i for i, w in enumerate(self.words)}

    @property
    def eos(self) -> int:
        return 0

    def __len__(self) -> int:
        return len(self.words)

    def tokenize(self, text: str) -> tuple[int, ...]:
        try:
            return (*(self.index[w] for w in text.split()), 0)
        except KeyError as exc:
            raise TokenizationError(f"out-of-vocabulary word {exc.args[0]!r} in {text!r}") from None

    def detokenize(self, tokens: Sequence[int]) -> str:
        out = []
        for t in tokens:
            if t == 0:
                break
            out.append(self.words[t])
        return " ".join(out)

    def bag(self, text: str) -> list[int]:
        return list(self.tokenize(text)[:-1])


def default_vocabulary() -> Vocabulary:
    return Vocabulary(w for t in _all_texts() for w in t.split())
