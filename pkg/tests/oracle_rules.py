"""Second, independent implementation of the crafting rules and goal events.

Written directly from the requirement list, on its own string-based world
model.  Only the initial grid is shared with the package (through tile
names), so a disagreement points at either the rules or the verifiers.
"""

from __future__ import annotations

WALK = {"grass", "sand", "path"}
STEP = {"up": (0, -1), "down": (0, 1), "left": (-1, 0), "right": (1, 0)}
CAP = 9

ACTIONS = [
    "move up", "move down", "move left", "move right", "chop tree", "chop bush", "chop grass", "extract stone",
    "extract coal", "build table", "build furnace", "put stone", "put plant", "craft wood pickaxe",
    "craft wood sword", "noop",
]


class RuleWorld:
    def __init__(self, tiles: list[list[str]], x: int, y: int, facing: str):
        self.tiles = [row[:] for row in tiles]
        self.x, self.y, self.facing = x, y, facing
        self.items = {k: 0 for k in ("sapling", "wood", "stone", "coal", "wood_pickaxe", "wood_sword")}

    def front(self) -> tuple[int, int]:
        dx, dy = STEP[self.facing]
        return self.x + dx, self.y + dy

    def front_tile(self) -> str | None:
        fx, fy = self.front()
        if 0 <= fy < len(self.tiles) and 0 <= fx < len(self.tiles[0]):
            return self.tiles[fy][fx]
        return None

    def _gain(self, item: str) -> bool:
        if self.items[item] >= CAP:
            return False
        self.items[item] += 1
        return True

    def _set_front(self, tile: str) -> None:
        fx, fy = self.front()
        self.tiles[fy][fx] = tile

    def act(self, name: str) -> set[str]:
        """Apply one action; return the goal texts that complete on this step."""
        before = (self.front(), self.front_tile())
        events: set[str] = set()
        t = self.front_tile()
        it = self.items
        if name.startswith("move "):
            self.facing = name.split()[1]
            nx, ny = self.front()
            if 0 <= ny < len(self.tiles) and 0 <= nx < len(self.tiles[0]) and self.tiles[ny][nx] in WALK:
                self.x, self.y = nx, ny
        elif name == "chop tree":
            if t == "tree" and self._gain("wood"):
                events.add("collect wood")
        elif name == "chop bush":
            if t == "bush" and self._gain("sapling"):
                self._set_front("grass")
        elif name == "chop grass":
            if t == "grass":
                self._gain("sapling")
        elif name == "extract stone":
            if t in ("stone", "placed stone") and it["wood_pickaxe"] > 0 and self._gain("stone"):
                self._set_front("path")
                events.add("collect stone")
        elif name == "extract coal":
            if t == "coal" and it["wood_pickaxe"] > 0 and self._gain("coal"):
                self._set_front("path")
                events.add("collect coal")
        elif name == "build table":
            if t in WALK and it["wood"] >= 2:
                it["wood"] -= 2
                self._set_front("table")
                events.add("place table")
        elif name == "build furnace":
            if t in WALK and it["stone"] >= 4:
                it["stone"] -= 4
                self._set_front("furnace")
                events.add("place furnace")
        elif name == "put stone":
            if t in WALK | {"water"} and it["stone"] >= 1:
                it["stone"] -= 1
                self._set_front("placed stone")
        elif name == "put plant":
            if t == "grass" and it["sapling"] >= 1:
                it["sapling"] -= 1
                self._set_front("plant")
        elif name == "craft wood pickaxe":
            if t == "table" and it["wood"] >= 1 and it["wood_pickaxe"] < CAP:
                it["wood"] -= 1
                it["wood_pickaxe"] += 1
                events.add("make wood pickaxe")
        elif name == "craft wood sword":
            if t == "table" and it["wood"] >= 1 and it["wood_sword"] < CAP:
                it["wood"] -= 1
                it["wood_sword"] += 1
                events.add("make wood sword")
        after = (self.front(), self.front_tile())
        for target in ("tree", "table", "stone", "coal", "furnace"):
            # "go to" completes when the agent comes to face the target
            if after[1] == target and before != after:
                events.add(f"go to {target}")
        events.add(name)
        return events
