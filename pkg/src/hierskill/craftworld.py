"""Crafter-style gridworld with an 11-goal achievement tree.

The world is a square tile grid indexed ``grid[y, x]``; ``x`` grows east and
``y`` grows south, so ``move_up`` is north.  Survival mechanics, enemies and
the iron/diamond tiers are absent; iron exists only as an inert tile.

States are values: :func:`step` returns a fresh :class:`WorldState` and only
copies the grid when a tile actually changes, so old states stay valid for
verifiers that compare ``prev`` and ``next``.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid world or run configuration values."""


class TileKind(IntEnum):
    GRASS = 0
    SAND = 1
    PATH = 2
    WATER = 3
    TREE = 4
    BUSH = 5
    STONE = 6
    COAL = 7
    IRON = 8
    TABLE = 9
    FURNACE = 10
    PLANT = 11
    PLACED_STONE = 12


#: id used for out-of-bounds cells in local views
VOID = len(TileKind)
N_TILE_IDS = VOID + 1

TILE_NAMES = {
    TileKind.GRASS: "grass",
    TileKind.SAND: "sand",
    TileKind.PATH: "path",
    TileKind.WATER: "water",
    TileKind.TREE: "tree",
    TileKind.BUSH: "bush",
    TileKind.STONE: "stone",
    TileKind.COAL: "coal",
    TileKind.IRON: "iron",
    TileKind.TABLE: "table",
    TileKind.FURNACE: "furnace",
    TileKind.PLANT: "plant",
    TileKind.PLACED_STONE: "stone",
}

WALKABLE = frozenset({TileKind.GRASS, TileKind.SAND, TileKind.PATH})
# placement targets ("facing grass, sand, path")
BUILDABLE = WALKABLE
STONE_TARGETS = WALKABLE | {TileKind.WATER}
PLACED_KINDS = frozenset({TileKind.TABLE, TileKind.FURNACE, TileKind.PLANT, TileKind.PLACED_STONE})


class Action(IntEnum):
    MOVE_UP = 0
    MOVE_DOWN = 1
    MOVE_LEFT = 2
    MOVE_RIGHT = 3
    CHOP_TREE = 4
    CHOP_BUSH = 5
    CHOP_GRASS = 6
    EXTRACT_STONE = 7
    EXTRACT_COAL = 8
    PLACE_TABLE = 9
    PLACE_FURNACE = 10
    PLACE_STONE = 11
    PLACE_PLANT = 12
    CRAFT_WOOD_PICKAXE = 13
    CRAFT_WOOD_SWORD = 14
    NOOP = 15


N_ACTIONS = len(Action)
assert N_ACTIONS == 16

# Text of each elementary action as offered to the high level.  Placement
# actions use the "build"/"put" wording so they never collide with the
# "place table"/"place furnace" achievements.
ACTION_TEXTS: dict[Action, str] = {
    Action.MOVE_UP: "move up",
    Action.MOVE_DOWN: "move down",
    Action.MOVE_LEFT: "move left",
    Action.MOVE_RIGHT: "move right",
    Action.CHOP_TREE: "chop tree",
    Action.CHOP_BUSH: "chop bush",
    Action.CHOP_GRASS: "chop grass",
    Action.EXTRACT_STONE: "extract stone",
    Action.EXTRACT_COAL: "extract coal",
    Action.PLACE_TABLE: "build table",
    Action.PLACE_FURNACE: "build furnace",
    Action.PLACE_STONE: "put stone",
    Action.PLACE_PLANT: "put plant",
    Action.CRAFT_WOOD_PICKAXE: "craft wood pickaxe",
    Action.CRAFT_WOOD_SWORD: "craft wood sword",
    Action.NOOP: "noop",
}

ACTION_HINTS: dict[Action, str] = {
    Action.CHOP_TREE: "needs: facing tree",
    Action.CHOP_BUSH: "needs: facing bush",
    Action.CHOP_GRASS: "needs: facing grass",
    Action.EXTRACT_STONE: "needs: wood pickaxe, facing stone",
    Action.EXTRACT_COAL: "needs: wood pickaxe, facing coal",
    Action.PLACE_TABLE: "needs: 2 wood",
    Action.PLACE_FURNACE: "needs: 4 stone",
    Action.PLACE_STONE: "needs: 1 stone",
    Action.PLACE_PLANT: "needs: 1 sapling, facing grass",
    Action.CRAFT_WOOD_PICKAXE: "needs: 1 wood, facing table",
    Action.CRAFT_WOOD_SWORD: "needs: 1 wood, facing table",
}


class Facing(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


DIRECTION_DELTAS: dict[int, tuple[int, int]] = {
    Facing.UP: (0, -1),
    Facing.DOWN: (0, 1),
    Facing.LEFT: (-1, 0),
    Facing.RIGHT: (1, 0),
}
MOVE_FACING = {
    Action.MOVE_UP: Facing.UP,
    Action.MOVE_DOWN: Facing.DOWN,
    Action.MOVE_LEFT: Facing.LEFT,
    Action.MOVE_RIGHT: Facing.RIGHT,
}

ITEMS = ("sapling", "wood", "stone", "coal", "wood_pickaxe", "wood_sword")
ITEM_INDEX = {name: i for i, name in enumerate(ITEMS)}
SAPLING, WOOD, STONE, COAL, WOOD_PICKAXE, WOOD_SWORD = range(len(ITEMS))
MAX_ITEM = 9


# --------------------------------------------------------------------------
# Goal ids.  Elementary goals reuse the action index; achievements follow.
# --------------------------------------------------------------------------

GO_TO_TREE = 16
COLLECT_WOOD = 17
PLACE_TABLE = 18
GO_TO_TABLE = 19
MAKE_WOOD_PICKAXE = 20
GO_TO_STONE = 21
COLLECT_STONE = 22
GO_TO_COAL = 23
COLLECT_COAL = 24
PLACE_FURNACE = 25
GO_TO_FURNACE = 26
# not part of the training tree; used for the similar-trajectory probe
MAKE_WOOD_SWORD = 27

ACHIEVEMENT_TEXTS: dict[int, str] = {
    GO_TO_TREE: "go to tree",
    COLLECT_WOOD: "collect wood",
    PLACE_TABLE: "place table",
    GO_TO_TABLE: "go to table",
    MAKE_WOOD_PICKAXE: "make wood pickaxe",
    GO_TO_STONE: "go to stone",
    COLLECT_STONE: "collect stone",
    GO_TO_COAL: "go to coal",
    COLLECT_COAL: "collect coal",
    PLACE_FURNACE: "place furnace",
    GO_TO_FURNACE: "go to furnace",
    MAKE_WOOD_SWORD: "make wood sword",
}
N_VERIFIERS = MAKE_WOOD_SWORD + 1
N_ACHIEVEMENT_SLOTS = N_VERIFIERS - N_ACTIONS


@dataclass(frozen=True, slots=True)
class WorldParams:
    """Densities used by :func:`generate_world`."""

    tree: float = 0.11
    bush: float = 0.01
    sand_blobs: float = 0.012
    water_blobs: float = 0.008
    stone_blobs: float = 0.012
    coal_in_stone: float = 0.2
    iron_in_stone: float = 0.03
    max_tries: int = 200


@dataclass(frozen=True, slots=True)
class WorldState:
    grid: np.ndarray
    pos: tuple[int, int]
    facing: int
    inv: tuple[int, ...]
    placements: tuple[tuple[int, tuple[int, int]], ...] = ()
    ll_step_count: int = 0
    hl_step_count: int = 0
    episode_step_count: int = 0
    seed: int = 0
    # per-episode firing counts of the achievement verifiers (ids 16..27)
    achievement_counts: tuple[int, ...] = field(default=(0,) * N_ACHIEVEMENT_SLOTS)

    @property
    def side(self) -> int:
        return self.grid.shape[0]

    @property
    def inventory(self) -> dict[str, int]:
        return dict(zip(ITEMS, self.inv))

    def faced_cell(self) -> tuple[int, int]:
        dx, dy = DIRECTION_DELTAS[self.facing]
        return self.pos[0] + dx, self.pos[1] + dy

    def faced_kind(self) -> int | None:
        x, y = self.faced_cell()
        n = self.grid.shape[0]
        if 0 <= x < n and 0 <= y < n:
            return int(self.grid[y, x])
        return None

    def count(self, verifier_id: int) -> int:
        return self.achievement_counts[verifier_id - N_ACTIONS]

    def same_as(self, other: "WorldState") -> bool:
        """Structural equality (dataclass ``==`` is ambiguous on arrays)."""
        return (
            np.array_equal(self.grid, other.grid)
            and self.pos == other.pos
            and self.facing == other.facing
            and self.inv == other.inv
            and self.placements == other.placements
            and self.ll_step_count == other.ll_step_count
            and self.hl_step_count == other.hl_step_count
            and self.episode_step_count == other.episode_step_count
            and self.seed == other.seed
            and self.achievement_counts == other.achievement_counts
        )

    def with_counters(self, **kw) -> "WorldState":
        return dataclasses.replace(self, **kw)


# --------------------------------------------------------------------------
# generation
# --------------------------------------------------------------------------


def _blob(grid: np.ndarray, rng: np.random.Generator, kind: int, radius: int) -> list[tuple[int, int]]:
    n = grid.shape[0]
    cx, cy = int(rng.integers(n)), int(rng.integers(n))
    cells = []
    for y in range(max(0, cy - radius), min(n, cy + radius + 1)):
        for x in range(max(0, cx - radius), min(n, cx + radius + 1)):
            # ragged edges
            if abs(x - cx) + abs(y - cy) <= radius or rng.random() < 0.4:
                grid[y, x] = kind
                cells.append((x, y))
    return cells


def _reachable(grid: np.ndarray, start: tuple[int, int]) -> set[tuple[int, int]]:
    n = grid.shape[0]
    seen = {start}
    todo = deque([start])
    while todo:
        x, y = todo.popleft()
        for dx, dy in DIRECTION_DELTAS.values():
            nx, ny = x + dx, y + dy
            if 0 <= nx < n and 0 <= ny < n and (nx, ny) not in seen and grid[ny, nx] in WALKABLE:
                seen.add((nx, ny))
                todo.append((nx, ny))
    return seen


def _reachable_kinds(grid: np.ndarray, cells: Iterable[tuple[int, int]]) -> set[int]:
    n = grid.shape[0]
    kinds = set()
    for x, y in cells:
        for dx, dy in DIRECTION_DELTAS.values():
            nx, ny = x + dx, y + dy
            if 0 <= nx < n and 0 <= ny < n:
                kinds.add(int(grid[ny, nx]))
    return kinds


_REQUIRED = (TileKind.TREE, TileKind.STONE, TileKind.COAL)


def _scatter(side: int, rng: np.random.Generator, params: WorldParams) -> np.ndarray:
    grid = np.full((side, side), TileKind.GRASS, dtype=np.uint8)
    area = side * side
    for _ in range(max(1, round(area * params.sand_blobs))):
        _blob(grid, rng, TileKind.SAND, 1)
    for _ in range(round(area * params.water_blobs)):
        _blob(grid, rng, TileKind.WATER, 1)
    for _ in range(max(1, round(area * params.stone_blobs))):
        for x, y in _blob(grid, rng, TileKind.STONE, 1):
            r = rng.random()
            if r < params.coal_in_stone:
                grid[y, x] = TileKind.COAL
            elif r < params.coal_in_stone + params.iron_in_stone:
                grid[y, x] = TileKind.IRON
    open_ = (grid == TileKind.GRASS) | (grid == TileKind.SAND)
    trees = (rng.random((side, side)) < params.tree) & open_
    grid[trees] = TileKind.TREE
    bushes = (rng.random((side, side)) < params.bush) & (grid == TileKind.GRASS)
    grid[bushes] = TileKind.BUSH
    return grid


def generate_world(seed: int, side: int = 32, params: WorldParams | None = None) -> WorldState:
    """Procedurally generate a world; identical ``(seed, side)`` give identical worlds.

    Tree, stone and coal patches are scattered uniformly and the layout is
    rejection-sampled until each of them is adjacent to a cell reachable
    from the spawn point.  If ``max_tries`` layouts fail (only plausible on
    tiny grids) the missing kinds are planted next to reachable cells.
    """
    if side < 7:
        raise ConfigError(f"world side must be >= 7, got {side}")
    params = params or WorldParams()
    rng = np.random.default_rng([int(seed), int(side)])
    grid = spawn = reach = None
    for _ in range(params.max_tries):
        grid = _scatter(side, rng, params)
        grass = np.argwhere(grid == TileKind.GRASS)
        if len(grass) == 0:
            continue
        y, x = grass[int(rng.integers(len(grass)))]
        spawn = (int(x), int(y))
        reach = _reachable(grid, spawn)
        if set(_REQUIRED) <= _reachable_kinds(grid, reach):
            break
    else:
        _plant_missing(grid, spawn, rng)
        reach = _reachable(grid, spawn)
        assert set(_REQUIRED) <= _reachable_kinds(grid, reach)
    return WorldState(
        grid=grid,
        pos=spawn,
        facing=Facing.DOWN,
        inv=(0,) * len(ITEMS),
        seed=int(seed),
    )


def _plant_missing(grid: np.ndarray, spawn: tuple[int, int], rng: np.random.Generator) -> None:
    n = grid.shape[0]
    for kind in _REQUIRED:
        reach = _reachable(grid, spawn)
        if kind in _reachable_kinds(grid, reach):
            continue
        candidates = sorted(
            (x + dx, y + dy)
            for x, y in reach
            for dx, dy in DIRECTION_DELTAS.values()
            if 0 <= x + dx < n and 0 <= y + dy < n and (x + dx, y + dy) != spawn
            and grid[y + dy, x + dx] in WALKABLE
        )
        # keep spawn connected: prefer cells whose removal leaves reach intact
        for cx, cy in (candidates[i] for i in rng.permutation(len(candidates))):
            old = grid[cy, cx]
            grid[cy, cx] = kind
            if len(_reachable(grid, spawn)) == len(reach) - 1:
                break
            grid[cy, cx] = old


# --------------------------------------------------------------------------
# dynamics
# --------------------------------------------------------------------------


def _set_tile(grid: np.ndarray, x: int, y: int, kind: int) -> np.ndarray:
    g = grid.copy()
    g[y, x] = kind
    return g


def _bump(inv: tuple[int, ...], item: int, delta: int) -> tuple[int, ...]:
    lst = list(inv)
    lst[item] = min(MAX_ITEM, lst[item] + delta)
    return tuple(lst)


def apply_action(state: WorldState, action: int) -> WorldState:
    """Pure game rules; counters and verifier bookkeeping are done by :func:`step`."""
    a = Action(action)
    grid, pos, facing, inv, placements = state.grid, state.pos, state.facing, state.inv, state.placements
    if a in MOVE_FACING:
        facing = MOVE_FACING[a]
        dx, dy = DIRECTION_DELTAS[facing]
        nx, ny = pos[0] + dx, pos[1] + dy
        n = grid.shape[0]
        if 0 <= nx < n and 0 <= ny < n and grid[ny, nx] in WALKABLE:
            pos = (nx, ny)
        return dataclasses.replace(state, pos=pos, facing=facing)

    fx, fy = state.faced_cell()
    kind = state.faced_kind()
    if a is Action.CHOP_TREE:
        if kind == TileKind.TREE and inv[WOOD] < MAX_ITEM:
            inv = _bump(inv, WOOD, 1)
    elif a is Action.CHOP_BUSH:
        if kind == TileKind.BUSH and inv[SAPLING] < MAX_ITEM:
            inv = _bump(inv, SAPLING, 1)
            grid = _set_tile(grid, fx, fy, TileKind.GRASS)
    elif a is Action.CHOP_GRASS:
        if kind == TileKind.GRASS and inv[SAPLING] < MAX_ITEM:
            inv = _bump(inv, SAPLING, 1)
    elif a is Action.EXTRACT_STONE:
        if kind in (TileKind.STONE, TileKind.PLACED_STONE) and inv[WOOD_PICKAXE] >= 1 and inv[STONE] < MAX_ITEM:
            inv = _bump(inv, STONE, 1)
            grid = _set_tile(grid, fx, fy, TileKind.PATH)
            if kind == TileKind.PLACED_STONE:
                placements = tuple(p for p in placements if p[1] != (fx, fy))
    elif a is Action.EXTRACT_COAL:
        if kind == TileKind.COAL and inv[WOOD_PICKAXE] >= 1 and inv[COAL] < MAX_ITEM:
            inv = _bump(inv, COAL, 1)
            grid = _set_tile(grid, fx, fy, TileKind.PATH)
    elif a is Action.PLACE_TABLE:
        if kind in BUILDABLE and inv[WOOD] >= 2:
            inv = _bump(inv, WOOD, -2)
            grid = _set_tile(grid, fx, fy, TileKind.TABLE)
            placements = placements + ((int(TileKind.TABLE), (fx, fy)),)
    elif a is Action.PLACE_FURNACE:
        if kind in BUILDABLE and inv[STONE] >= 4:
            inv = _bump(inv, STONE, -4)
            grid = _set_tile(grid, fx, fy, TileKind.FURNACE)
            placements = placements + ((int(TileKind.FURNACE), (fx, fy)),)
    elif a is Action.PLACE_STONE:
        if kind in STONE_TARGETS and inv[STONE] >= 1:
            inv = _bump(inv, STONE, -1)
            grid = _set_tile(grid, fx, fy, TileKind.PLACED_STONE)
            placements = placements + ((int(TileKind.PLACED_STONE), (fx, fy)),)
    elif a is Action.PLACE_PLANT:
        if kind == TileKind.GRASS and inv[SAPLING] >= 1:
            inv = _bump(inv, SAPLING, -1)
            grid = _set_tile(grid, fx, fy, TileKind.PLANT)
            placements = placements + ((int(TileKind.PLANT), (fx, fy)),)
    elif a is Action.CRAFT_WOOD_PICKAXE:
        if kind == TileKind.TABLE and inv[WOOD] >= 1 and inv[WOOD_PICKAXE] < MAX_ITEM:
            inv = _bump(_bump(inv, WOOD, -1), WOOD_PICKAXE, 1)
    elif a is Action.CRAFT_WOOD_SWORD:
        if kind == TileKind.TABLE and inv[WOOD] >= 1 and inv[WOOD_SWORD] < MAX_ITEM:
            inv = _bump(_bump(inv, WOOD, -1), WOOD_SWORD, 1)
    if grid is state.grid and inv is state.inv and placements is state.placements:
        return state
    return dataclasses.replace(state, grid=grid, inv=inv, placements=placements)


# --------------------------------------------------------------------------
# verifiers
# --------------------------------------------------------------------------

Predicate = Callable[[WorldState, int, WorldState], bool]


def _faces(kind: int) -> Predicate:
    # event: the agent starts facing `kind` on this transition
    def check(prev: WorldState, action: int, nxt: WorldState) -> bool:
        if nxt.faced_kind() != kind:
            return False
        return prev.faced_cell() != nxt.faced_cell() or prev.faced_kind() != kind

    return check


def _gains(item: int) -> Predicate:
    return lambda prev, action, nxt: nxt.inv[item] > prev.inv[item]


def _places(kind: int) -> Predicate:
    def check(prev: WorldState, action: int, nxt: WorldState) -> bool:
        return len(nxt.placements) > len(prev.placements) and nxt.placements[-1][0] == kind

    return check


def _does(a: int) -> Predicate:
    return lambda prev, action, nxt: action == a


VERIFIERS: dict[int, Predicate] = {int(a): _does(int(a)) for a in Action}
VERIFIERS.update(
    {
        GO_TO_TREE: _faces(TileKind.TREE),
        COLLECT_WOOD: _gains(WOOD),
        PLACE_TABLE: _places(TileKind.TABLE),
        GO_TO_TABLE: _faces(TileKind.TABLE),
        MAKE_WOOD_PICKAXE: _gains(WOOD_PICKAXE),
        GO_TO_STONE: _faces(TileKind.STONE),
        COLLECT_STONE: _gains(STONE),
        GO_TO_COAL: _faces(TileKind.COAL),
        COLLECT_COAL: _gains(COAL),
        PLACE_FURNACE: _places(TileKind.FURNACE),
        GO_TO_FURNACE: _faces(TileKind.FURNACE),
        MAKE_WOOD_SWORD: _gains(WOOD_SWORD),
    }
)


def fired_verifiers(prev: WorldState, action: int, nxt: WorldState) -> list[int]:
    return [vid for vid, pred in VERIFIERS.items() if pred(prev, action, nxt)]


def step(state: WorldState, action: int) -> tuple[WorldState, list[int]]:
    """Apply one elementary action; return the next state and the fired goal ids."""
    nxt = apply_action(state, action)
    fired = [int(action)]
    for vid in range(N_ACTIONS, N_VERIFIERS):
        if VERIFIERS[vid](state, action, nxt):
            fired.append(vid)
    counts = state.achievement_counts
    if len(fired) > 1:
        lst = list(counts)
        for vid in fired[1:]:
            lst[vid - N_ACTIONS] += 1
        counts = tuple(lst)
    nxt = dataclasses.replace(
        nxt,
        ll_step_count=state.ll_step_count + 1,
        episode_step_count=state.episode_step_count + 1,
        achievement_counts=counts,
    )
    return nxt, fired


# --------------------------------------------------------------------------
# observations
# --------------------------------------------------------------------------

VIEW = 9
OBS_LEN = VIEW * VIEW + 1 + len(ITEMS)


def local_view(state: WorldState, size: int = VIEW) -> np.ndarray:
    """Tile ids in a ``size x size`` window centred on the agent (VOID outside)."""
    r = size // 2
    n = state.grid.shape[0]
    x, y = state.pos
    out = np.full((size, size), VOID, dtype=np.uint8)
    x0, x1 = max(0, x - r), min(n, x + r + 1)
    y0, y1 = max(0, y - r), min(n, y + r + 1)
    out[y0 - (y - r): y1 - (y - r), x0 - (x - r): x1 - (x - r)] = state.grid[y0:y1, x0:x1]
    return out


def encode_obs(state: WorldState) -> np.ndarray:
    """Compact uint8 observation: flattened view, facing, inventory counts."""
    out = np.empty(OBS_LEN, dtype=np.uint8)
    out[: VIEW * VIEW] = local_view(state).ravel()
    out[VIEW * VIEW] = state.facing
    out[VIEW * VIEW + 1:] = state.inv
    return out


@dataclass(frozen=True, slots=True)
class Observation:
    visual: np.ndarray
    caption: str


def observe(state: WorldState, goal_text: str = "", remaining: int = 0, admissible: list[str] | None = None,
            last_action: str = "") -> Observation:
    return Observation(encode_obs(state), caption(state, goal_text, admissible or [], last_action, remaining))


def _direction(dx: int, dy: int) -> str:
    ns = "north" if dy < 0 else "south"
    ew = "west" if dx < 0 else "east"
    if dx == 0 or abs(dy) > 2 * abs(dx):
        return ns
    if dy == 0 or abs(dx) > 2 * abs(dy):
        return ew
    return f"{ns}-{ew}"


@dataclass(frozen=True, slots=True)
class Sighting:
    name: str
    distance: int
    dx: int
    dy: int

    @property
    def direction(self) -> str:
        return _direction(self.dx, self.dy)


def visible_elements(state: WorldState, size: int = VIEW) -> list[Sighting]:
    """Nearest instance of each visible tile name (Chebyshev distance), in first-seen order."""
    view = local_view(state, size)
    r = size // 2
    best: dict[str, Sighting] = {}
    order: list[str] = []
    for vy in range(size):
        for vx in range(size):
            tid = int(view[vy, vx])
            if tid == VOID or (vx == r and vy == r):
                continue
            name = TILE_NAMES[TileKind(tid)]
            dx, dy = vx - r, vy - r
            dist = max(abs(dx), abs(dy))
            cur = best.get(name)
            if cur is None:
                order.append(name)
            if cur is None or (dist, abs(dx) + abs(dy)) < (cur.distance, abs(cur.dx) + abs(cur.dy)):
                best[name] = Sighting(name, dist, dx, dy)
    return sorted((best[n] for n in order), key=lambda s: (s.distance, order.index(s.name)))


GAME_SENTENCE = "Crafting gridworld. Act with an elementary action or call one of the listed low-level policies."


def _steps(n: int) -> str:
    return f"{n} step" if n == 1 else f"{n} steps"


def caption(state: WorldState, goal_text: str, admissible: list[str], last_action: str,
            remaining: int = 64) -> str:
    """Textual observation in a fixed component order."""
    lines = [GAME_SENTENCE, ""]
    lines.append(f"Goal: {goal_text} ({_steps(remaining)} left)")
    lines.append(f"Steps taken: {state.hl_step_count}")
    lines.append("")
    lines.append(f"Position: ({state.pos[0]},{state.pos[1]})")
    lines.append("")
    lines.append("Visible:")
    for s in visible_elements(state):
        lines.append(f"- {s.name}: {_steps(s.distance)} {s.direction}")
    lines.append("")
    kind = state.faced_kind()
    faced = "nothing" if kind is None else TILE_NAMES[TileKind(kind)]
    lines.append(f"Facing: {faced}")
    lines.append("")
    lines.append("Inventory:")
    for name, n in zip(ITEMS, state.inv):
        if n:
            lines.append(f"- {name.replace('_', ' ')}: {n}")
    lines.append("")
    for kind, (x, y) in state.placements:
        lines.append(f"Placed {TILE_NAMES[TileKind(kind)]} at ({x},{y})")
    lines.append("")
    lines.append("Elementary actions:")
    for a in Action:
        hint = ACTION_HINTS.get(a)
        lines.append(f"- {ACTION_TEXTS[a]}" + (f" ({hint})" if hint else ""))
    if admissible:
        lines.append("")
        lines.append("Low-level policies:")
        lines.extend(f"- {s}" for s in admissible)
    lines.append("")
    lines.append(f"Previous action: {last_action or 'none'}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# difficulty
# --------------------------------------------------------------------------

# (go to, collect, place, make) decomposition of each goal from a reset world
DECOMPOSITION: dict[str, tuple[int, int, int, int]] = {
    "go to tree": (1, 0, 0, 0),
    "go to stone": (1, 0, 0, 0),
    "go to coal": (1, 0, 0, 0),
    "collect wood": (0, 1, 0, 0),
    "place table": (0, 2, 1, 0),
    "go to table": (0, 2, 1, 0),
    "make wood pickaxe": (0, 3, 1, 1),
    "collect stone": (0, 4, 1, 1),
    "collect coal": (0, 4, 1, 1),
    "place furnace": (0, 7, 2, 1),
    "go to furnace": (0, 7, 2, 1),
}

HALF = Fraction(1, 2)


def difficulty(goal_text: str) -> Fraction:
    """Collect steps weigh 1, place/make steps 1/2.

    Going to an ambient resource is worth 1/2, and "collect wood" counts the
    same as "go to tree" since chopping needs no tool.
    """
    try:
        go, collect, place, make = DECOMPOSITION[goal_text]
    except KeyError:
        raise KeyError(f"no difficulty entry for goal {goal_text!r}") from None
    if go or (collect, place, make) == (1, 0, 0):
        return HALF
    return collect + HALF * (place + make)


class Env:
    """Mutable convenience wrapper around a :class:`WorldState`."""

    def __init__(self, side: int = 32, params: WorldParams | None = None):
        self.side = side
        self.params = params or WorldParams()
        self.state: WorldState | None = None

    def reset(self, seed: int) -> WorldState:
        self.state = generate_world(seed, self.side, self.params)
        return self.state

    def step(self, action: int) -> tuple[WorldState, list[int]]:
        self.state, fired = step(self.state, action)
        return self.state, fired
