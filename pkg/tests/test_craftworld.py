import dataclasses
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hierskill import craftworld as cw
from hierskill.craftworld import Action, TileKind

GOLDEN = Path(__file__).parent / "golden"


def facing_state(kind, inv=None, side=9):
    """Agent in the middle of an all-grass world, facing one tile of ``kind`` to the right."""
    grid = np.full((side, side), TileKind.GRASS, dtype=np.uint8)
    c = side // 2
    grid[c, c + 1] = kind
    items = [0] * len(cw.ITEMS)
    for name, n in (inv or {}).items():
        items[cw.ITEM_INDEX[name]] = n
    return cw.WorldState(grid, (c, c), cw.Facing.RIGHT, tuple(items))


# -- generation ----------------------------------------------------------------


def test_generation_is_deterministic():
    a, b = cw.generate_world(0, 32), cw.generate_world(0, 32)
    assert a.same_as(b)
    assert a.grid.tobytes() == b.grid.tobytes()


def test_different_seeds_give_different_grids():
    assert not np.array_equal(cw.generate_world(0, 32).grid, cw.generate_world(1, 32).grid)


def test_small_world_has_a_tree():
    assert (cw.generate_world(5, 7).grid == TileKind.TREE).any()


def test_side_below_seven_is_rejected():
    with pytest.raises(cw.ConfigError):
        cw.generate_world(0, 6)


def _reachable_faces(state):
    g = state.grid
    n = g.shape[0]
    seen, todo = {state.pos}, [state.pos]
    while todo:
        x, y = todo.pop()
        for dx, dy in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < n and 0 <= ny < n and (nx, ny) not in seen and g[ny, nx] in cw.WALKABLE:
                seen.add((nx, ny))
                todo.append((nx, ny))
    kinds = set()
    for x, y in seen:
        for dx, dy in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < n and 0 <= ny < n:
                kinds.add(int(g[ny, nx]))
    return kinds


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), side=st.integers(7, 24))
def test_required_resources_reachable_and_no_placed_objects(seed, side):
    s = cw.generate_world(seed, side)
    kinds = _reachable_faces(s)
    assert {TileKind.TREE, TileKind.STONE, TileKind.COAL} <= kinds
    placed = {TileKind.TABLE, TileKind.FURNACE, TileKind.PLANT, TileKind.PLACED_STONE}
    assert not np.isin(s.grid, list(placed)).any()
    assert s.grid[s.pos[1], s.pos[0]] in cw.WALKABLE


# -- rules ------------------------------------------------------------------


def test_chop_tree_adds_wood_and_fires_collect():
    s = facing_state(TileKind.TREE)
    nxt, fired = cw.step(s, Action.CHOP_TREE)
    assert nxt.inventory["wood"] == 1
    assert cw.COLLECT_WOOD in fired


def test_go_to_tree_fires_when_first_facing():
    s = facing_state(TileKind.TREE)
    s = dataclasses.replace(s, facing=cw.Facing.LEFT)
    nxt, fired = cw.step(s, Action.MOVE_RIGHT)
    # the tree blocks the move; turning toward it is enough
    assert nxt.pos == s.pos
    assert cw.GO_TO_TREE in fired
    _, again = cw.step(nxt, Action.NOOP)
    assert cw.GO_TO_TREE not in again


def test_place_table_with_two_wood():
    s = facing_state(TileKind.GRASS, {"wood": 2})
    nxt, fired = cw.step(s, Action.PLACE_TABLE)
    assert nxt.inventory["wood"] == 0
    assert nxt.faced_kind() == TileKind.TABLE
    assert nxt.placements == ((int(TileKind.TABLE), nxt.faced_cell()),)
    assert cw.PLACE_TABLE in fired


def test_place_table_with_one_wood_is_a_noop():
    s = facing_state(TileKind.GRASS, {"wood": 1})
    nxt, fired = cw.step(s, Action.PLACE_TABLE)
    assert np.array_equal(nxt.grid, s.grid) and nxt.inv == s.inv and nxt.placements == s.placements
    assert fired == [int(Action.PLACE_TABLE)]
    assert nxt.ll_step_count == s.ll_step_count + 1


def test_extract_stone_without_pickaxe_is_a_noop():
    s = facing_state(TileKind.STONE)
    nxt, fired = cw.step(s, Action.EXTRACT_STONE)
    assert nxt.inv == s.inv and np.array_equal(nxt.grid, s.grid)
    assert fired == [int(Action.EXTRACT_STONE)]


def test_extract_stone_with_pickaxe():
    s = facing_state(TileKind.STONE, {"wood_pickaxe": 1})
    nxt, fired = cw.step(s, Action.EXTRACT_STONE)
    assert nxt.inventory["stone"] == 1 and nxt.faced_kind() == TileKind.PATH
    assert cw.COLLECT_STONE in fired


def test_crafting_needs_a_table():
    s = facing_state(TileKind.TABLE, {"wood": 1})
    nxt, fired = cw.step(s, Action.CRAFT_WOOD_PICKAXE)
    assert nxt.inventory == {**s.inventory, "wood": 0, "wood_pickaxe": 1}
    assert cw.MAKE_WOOD_PICKAXE in fired
    s = facing_state(TileKind.GRASS, {"wood": 1})
    assert cw.step(s, Action.CRAFT_WOOD_PICKAXE)[0].inv == s.inv


def test_furnace_consumes_four_stone():
    s = facing_state(TileKind.SAND, {"stone": 5})
    nxt, fired = cw.step(s, Action.PLACE_FURNACE)
    assert nxt.inventory["stone"] == 1 and cw.PLACE_FURNACE in fired


@pytest.mark.parametrize("kind", [TileKind.TREE, TileKind.STONE, TileKind.WATER, TileKind.TABLE,
                                  TileKind.FURNACE])
def test_moves_blocked_by_solid_tiles(kind):
    s = facing_state(kind)
    assert cw.step(s, Action.MOVE_RIGHT)[0].pos == s.pos


def test_moves_stop_at_the_border():
    s = facing_state(TileKind.GRASS, side=7)
    s = dataclasses.replace(s, pos=(6, 3))
    assert cw.step(s, Action.MOVE_RIGHT)[0].pos == (6, 3)


actions = st.lists(st.sampled_from(list(Action)), min_size=1, max_size=150)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), acts=actions)
def test_rollout_invariants(seed, acts):
    s0 = cw.generate_world(seed, 9)
    s, wood_in, wood_out = s0, 0, 0
    for a in acts:
        nxt, fired = cw.step(s, a)
        d = nxt.inventory["wood"] - s.inventory["wood"]
        if d > 0:
            assert a == Action.CHOP_TREE
            wood_in += d
        elif d < 0:
            assert a in (Action.PLACE_TABLE, Action.CRAFT_WOOD_PICKAXE, Action.CRAFT_WOOD_SWORD)
            wood_out -= d
        s = nxt
        n = s.side
        assert 0 <= s.pos[0] < n and 0 <= s.pos[1] < n
        assert all(v >= 0 for v in s.inv)
        for kind, (x, y) in s.placements:
            assert s.grid[y, x] == kind
        assert fired[0] == int(a)
    assert wood_in - wood_out == s.inventory["wood"]
    assert s.ll_step_count == len(acts)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), acts=actions)
def test_same_actions_same_trajectory(seed, acts):
    def run():
        s, out = cw.generate_world(seed, 9), []
        for a in acts:
            s, fired = cw.step(s, a)
            out.append((s.grid.tobytes(), s.pos, s.facing, s.inv, tuple(fired)))
        return out

    assert run() == run()


# -- observations -----------------------------------------------------------


def test_local_view_pads_outside_with_void():
    s = facing_state(TileKind.TREE, side=7)
    s = dataclasses.replace(s, pos=(0, 0))
    v = cw.local_view(s)
    assert v.shape == (cw.VIEW, cw.VIEW)
    assert (v[:4, :] == cw.VOID).all() and (v[:, :4] == cw.VOID).all()
    assert v[4, 4] == s.grid[0, 0]


def test_encode_obs_layout():
    s = facing_state(TileKind.TREE, {"wood": 3})
    o = cw.encode_obs(s)
    assert o.shape == (cw.OBS_LEN,) and o.dtype == np.uint8
    assert o[cw.VIEW * cw.VIEW] == cw.Facing.RIGHT
    assert o[cw.VIEW * cw.VIEW + 1 + cw.WOOD] == 3


@pytest.mark.parametrize("dx,dy,label", [(0, -3, "north"), (3, 0, "east"), (-2, 2, "south-west"),
                                         (1, -3, "north"), (3, 1, "east"), (2, -1, "north-east")])
def test_direction_labels(dx, dy, label):
    assert cw._direction(dx, dy) == label


def test_caption_names_faced_table():
    s = facing_state(TileKind.TABLE)
    assert "Facing: table" in cw.caption(s, "make wood pickaxe", [], "")


def test_caption_empty_inventory_section():
    s = facing_state(TileKind.GRASS)
    lines = cw.caption(s, "collect wood", [], "").splitlines()
    i = lines.index("Inventory:")
    assert lines[i + 1] == ""


def test_caption_mentions_each_kind_once():
    s = facing_state(TileKind.TREE)
    grid = s.grid.copy()
    grid[2, 2] = TileKind.TREE
    s = dataclasses.replace(s, grid=grid)
    lines = cw.caption(s, "collect wood", [], "").splitlines()
    seen = [ln for ln in lines if ln.startswith("- tree:")]
    assert seen == ["- tree: 1 step east"]


def test_caption_skill_list_only_when_non_empty():
    s = facing_state(TileKind.GRASS)
    assert "Low-level policies:" not in cw.caption(s, "collect wood", [], "")
    cap = cw.caption(s, "collect wood", ["go to tree"], "")
    assert "Low-level policies:\n- go to tree" in cap


def test_caption_component_order():
    s = cw.generate_world(3, 9)
    cap = cw.caption(s, "place table", ["collect wood"], "chop tree")
    keys = [cw.GAME_SENTENCE, "Goal:", "Steps taken:", "Position:", "Visible:", "Facing:", "Inventory:",
            "Elementary actions:", "Low-level policies:", "Previous action:"]
    pos = [cap.index(k) for k in keys]
    assert pos == sorted(pos)


def test_caption_golden():
    s = cw.generate_world(3, 9)
    for a in (Action.CHOP_TREE, Action.CHOP_TREE, Action.MOVE_UP, Action.PLACE_TABLE):
        s, _ = cw.step(s, a)
    s = s.with_counters(hl_step_count=4)
    cap = cw.caption(s, "make wood pickaxe", ["collect wood", "place table"], "build table", remaining=60)
    assert cap == (GOLDEN / "caption_seed3.txt").read_text()


def test_caption_regenerates_deterministically():
    s = cw.generate_world(11, 16)
    assert cw.caption(s, "go to tree", [], "") == cw.caption(s, "go to tree", [], "")


# -- difficulty -------------------------------------------------------------


DIFFICULTY_TABLE = {
    "go to tree": Fraction(1, 2), "go to stone": Fraction(1, 2), "go to coal": Fraction(1, 2),
    "collect wood": Fraction(1, 2), "place table": Fraction(5, 2), "go to table": Fraction(5, 2),
    "make wood pickaxe": Fraction(4), "collect stone": Fraction(5), "collect coal": Fraction(5),
    "place furnace": Fraction(17, 2), "go to furnace": Fraction(17, 2),
}


@pytest.mark.parametrize("goal,expected", DIFFICULTY_TABLE.items())
def test_difficulty_rows(goal, expected):
    assert cw.difficulty(goal) == expected


def test_difficulty_unknown_goal():
    with pytest.raises(KeyError):
        cw.difficulty("make wood sword")
