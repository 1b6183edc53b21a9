import pytest
from hypothesis import given, strategies as st

from hierskill import craftworld as cw
from hierskill.goalspace import (
    SWORD_GOAL,
    TRAINING_ACHIEVEMENTS,
    Goal,
    GoalCatalog,
    GoalError,
    TokenizationError,
    default_catalog,
    default_vocabulary,
    expand_synonyms,
    make_n_compositional,
    synonym_goals,
)

CAT = default_catalog()
VOCAB = default_vocabulary()


def test_catalog_sizes():
    assert len(CAT.elementary) == 16
    assert len(CAT.achievements) == 11
    assert [g.id for g in CAT.achievements] == list(TRAINING_ACHIEVEMENTS)
    assert SWORD_GOAL.text not in CAT.by_text


def test_every_action_has_an_elementary_goal():
    assert sorted(g.verifier for g in CAT.elementary) == sorted(int(a) for a in cw.Action)
    assert all(g.id == g.verifier for g in CAT)


def test_precedence_is_transitive_and_acyclic():
    assert CAT.precedes("go to tree", "place furnace")
    assert CAT.precedes("collect wood", "make wood pickaxe")
    assert not CAT.precedes("place furnace", "collect wood")
    order = list(CAT.order)
    for a, b in CAT.precedence:
        assert order.index(a) < order.index(b)


def test_cycle_is_rejected():
    with pytest.raises(GoalError):
        GoalCatalog(CAT.goals, precedence=[("collect wood", "place table"), ("place table", "collect wood")])


def test_duplicate_text_is_rejected():
    dup = Goal(99, "collect wood", "achievement", cw.COLLECT_WOOD, "collect")
    with pytest.raises(GoalError):
        GoalCatalog([*CAT.goals, dup])


def test_missing_elementary_goal_is_rejected():
    with pytest.raises(GoalError):
        GoalCatalog([g for g in CAT.goals if g.id != int(cw.Action.NOOP)])


def test_tsv_round_trip():
    again = GoalCatalog.loads(CAT.dumps())
    assert again.goals == CAT.goals


def test_bad_tsv_row_reports_line():
    text = CAT.dumps().replace("\tachievement\t17\t", "\tachievement\tseventeen\t")
    with pytest.raises(GoalError, match="line"):
        GoalCatalog.loads(text)


def test_subset_keeps_elementary_goals():
    sub = CAT.subset(["go to tree", "collect wood", "place table"])
    assert len(sub.elementary) == 16
    assert [g.text for g in sub.achievements] == ["go to tree", "collect wood", "place table"]
    with pytest.raises(GoalError):
        CAT.subset(["make wood sword"])


def test_synonyms():
    g = CAT["collect wood"]
    assert expand_synonyms(g) == ["gather wood", "acquire wood", "procure wood", "harvest wood", "amass wood"]
    assert expand_synonyms(CAT["move up"]) == []
    ids = {s.id for a in CAT.achievements for s in synonym_goals(a)}
    assert len(ids) == 5 * 11 and not ids & {g.id for g in CAT}
    assert all(s.verifier == g.verifier for s in synonym_goals(g))


def test_compositional_goal_fires_on_nth_event():
    g = make_n_compositional(CAT["collect wood"], 2)
    assert g.text == "collect 2 woods"
    grid = cw.generate_world(0, 9).grid.copy()
    grid[:] = cw.TileKind.GRASS
    grid[4, 5] = cw.TileKind.TREE
    s = cw.WorldState(grid, (4, 4), cw.Facing.RIGHT, (0,) * 6)
    hits = []
    for _ in range(3):
        nxt, fired = cw.step(s, cw.Action.CHOP_TREE)
        hits.append(g.fired(s, cw.Action.CHOP_TREE, nxt, fired))
        s = nxt
    assert hits == [False, True, False]


@pytest.mark.parametrize("text", ["go to tree", "go to table", "move up"])
def test_compositional_rejects_go_to_and_elementary(text):
    with pytest.raises(GoalError):
        make_n_compositional(CAT[text], 2)


def test_compositional_n_range():
    with pytest.raises(GoalError):
        make_n_compositional(CAT["collect wood"], 5)


def test_vocabulary_eos_and_unknown_words():
    assert VOCAB.words[0] == "<eos>"
    toks = VOCAB.tokenize("place table")
    assert toks[-1] == VOCAB.eos and VOCAB.detokenize(toks) == "place table"
    with pytest.raises(TokenizationError):
        VOCAB.tokenize("place banana")


@given(st.sampled_from([g.text for g in CAT] + [s.text for a in CAT.achievements for s in synonym_goals(a)]))
def test_tokenize_round_trip(text):
    assert VOCAB.detokenize(VOCAB.tokenize(text)) == text


def test_vocabulary_covers_held_out_texts():
    VOCAB.tokenize(SWORD_GOAL.text)
    for g in CAT.achievements:
        if not g.is_go_to:
            for n in (2, 3, 4):
                VOCAB.tokenize(make_n_compositional(g, n).text)
