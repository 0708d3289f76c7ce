"""Bundled environments and specification sets for the resupply and surveillance missions."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from ..model import Mdp, model_from_dict

MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}
# slip directions relative to the intended move: its left, its right, and backwards
SLIPS = {"up": ("left", "right", "down"), "down": ("right", "left", "up"),
         "left": ("down", "up", "right"), "right": ("up", "down", "left")}

BASES = {
    "blue": [(4, 0), (4, 1), (5, 0), (5, 1)],
    "red": [(0, 4), (0, 5), (1, 4), (1, 5)],
    "yellow": [(2, 2), (2, 3), (3, 2), (3, 3)],
    "green": [(4, 4), (4, 5), (5, 4), (5, 5)],
}


def gridworld_document(size: int = 6, success: float = 0.99) -> dict:
    """Resupply gridworld: start in the top-left cell, four 2x2 bases, slippery moves."""
    slip = (1.0 - success) / 3

    def name(r, c):
        return f"r{r}c{c}"

    def move(r, c, d):
        dr, dc = MOVES[d]
        r2, c2 = r + dr, c + dc
        return (r2, c2) if 0 <= r2 < size and 0 <= c2 < size else (r, c)

    transitions = []
    for r in range(size):
        for c in range(size):
            for a in MOVES:
                dist = {}
                for d, p in [(a, success)] + [(s, slip) for s in SLIPS[a]]:
                    dst = move(r, c, d)
                    dist[dst] = dist.get(dst, 0.0) + p
                for (r2, c2), p in sorted(dist.items()):
                    transitions.append({"from": name(r, c), "action": a, "to": name(r2, c2), "prob": p})
    labels = {}
    for color, cells in BASES.items():
        for r, c in cells:
            labels.setdefault(name(r, c), []).append(color)
    return {
        "states": [name(r, c) for r in range(size) for c in range(size)],
        "initial": name(0, 0),
        "actions": list(MOVES),
        "atomic_props": sorted(BASES),
        "transitions": transitions,
        "labels": labels,
    }


def surveillance_document() -> dict:
    """Hub S1 joined to outposts S2..S5, which form a ring; moves are deterministic.

    Action ``go_Sk`` moves to ``Sk`` when it is adjacent (or the current state)
    and otherwise leaves the agent in place.
    """
    names = ["S1", "S2", "S3", "S4", "S5"]
    adjacent = {("S1", o) for o in names[1:]} | {("S2", "S3"), ("S3", "S4"), ("S4", "S5"), ("S5", "S2")}
    adjacent |= {(b, a) for a, b in adjacent}
    transitions = []
    for s in names:
        for target in names:
            dst = target if (s, target) in adjacent or s == target else s
            transitions.append({"from": s, "action": f"go_{target}", "to": dst, "prob": 1.0})
    return {
        "states": names,
        "initial": "S1",
        "actions": [f"go_{s}" for s in names],
        "atomic_props": ["blue", "red", "yellow", "green"],
        "transitions": transitions,
        "labels": {"S2": ["blue"], "S3": ["red"], "S4": ["yellow"], "S5": ["green"]},
    }


def asset_path(name: str) -> Path:
    return Path(str(resources.files(__package__).joinpath(name)))


def resupply_grid() -> Mdp:
    return model_from_dict(json.loads(asset_path("resupply_grid.json").read_text()))


def surveillance_mdp() -> Mdp:
    return model_from_dict(json.loads(asset_path("surveillance.json").read_text()))


INSTANCES = {
    "resupply-1": ("resupply_grid.json", "resupply1.spec"),
    "resupply-2": ("resupply_grid.json", "resupply2.spec"),
    "surveillance": ("surveillance.json", "surveillance.spec"),
}


def write_assets(directory: Path):
    directory = Path(directory)
    (directory / "resupply_grid.json").write_text(json.dumps(gridworld_document(), indent=1) + "\n")
    (directory / "surveillance.json").write_text(json.dumps(surveillance_document(), indent=1) + "\n")
