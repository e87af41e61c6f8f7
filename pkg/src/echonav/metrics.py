"""Navigation metrics (SPL, SR, SNA) and top-down trajectory maps."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, InputError
from .world import AgentState, OccupancyGrid, replay_trajectory, scene_from_ref, shortest_path


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    path_length: int            # p: cells actually traversed
    shortest_length: int        # l: geodesic start -> goal
    action_count: int           # n: actions executed, Stop included
    optimal_action_count: int   # n*: fewest actions, Stop included

    @classmethod
    def from_log(cls, record: dict) -> "EpisodeResult":
        return cls(bool(record["success"]), int(record["path_length"]), int(record["shortest_length"]),
                   int(record["action_count"]), int(record["optimal_action_count"]))


def _check(results: Sequence[EpisodeResult]) -> list:
    results = list(results)
    if not results:
        raise ContractError("metrics need at least one episode result")
    return results


def compute_spl(results: Iterable[EpisodeResult]) -> float:
    """Success weighted by path length, in percent."""
    rs = _check(results)
    terms = [r.shortest_length / max(r.path_length, r.shortest_length) if r.success else 0.0 for r in rs]
    return 100.0 * float(np.mean(terms))


def compute_sr(results: Iterable[EpisodeResult]) -> float:
    rs = _check(results)
    return 100.0 * sum(r.success for r in rs) / len(rs)


def compute_sna(results: Iterable[EpisodeResult]) -> float:
    """Success weighted by number of actions, in percent."""
    rs = _check(results)
    terms = [r.optimal_action_count / max(r.action_count, r.optimal_action_count) if r.success else 0.0
             for r in rs]
    return 100.0 * float(np.mean(terms))


def summarize(results: Iterable[EpisodeResult]) -> dict:
    rs = _check(results)
    return {"episodes": len(rs), "spl": compute_spl(rs), "sr": compute_sr(rs), "sna": compute_sna(rs)}


# ---------------------------------------------------------------------------
# trajectory maps
# ---------------------------------------------------------------------------

WALL = (38, 38, 46)
FLOOR = (236, 236, 230)
GEODESIC = (40, 170, 60)
START = (255, 150, 0)
GOAL = (220, 30, 40)
RAMP_DARK = np.array([8, 30, 110], dtype=float)
RAMP_LIGHT = np.array([150, 210, 255], dtype=float)


def blue_ramp(i: int, n: int) -> tuple:
    t = 0.0 if n <= 1 else i / (n - 1)
    return tuple(int(round(v)) for v in (1 - t) * RAMP_DARK + t * RAMP_LIGHT)


def map_layers(record: dict, grid: OccupancyGrid | None = None):
    """Cell colours of a trajectory map plus start/goal cells, from an episode-log record."""
    try:
        grid = grid or scene_from_ref(record["scene"])
        start = AgentState(*(int(v) for v in record["start"]))
        goal = tuple(int(v) for v in record["goal"])
        actions = [int(a) for a in record.get("actions", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"episode record is not reconstructible: {exc}") from None
    if not (grid.is_free(*start.cell) and grid.is_free(*goal)):
        raise InputError(f"start/goal do not lie on free cells of scene {grid.seed}")
    colours = np.empty((grid.height, grid.width, 3), dtype=np.uint8)
    colours[:] = FLOOR
    colours[grid.walls] = WALL
    for x, y in shortest_path(grid, start.cell, goal):
        colours[y, x] = GEODESIC
    if actions:
        cells = replay_trajectory(grid, start, actions)
        for i, (x, y) in enumerate(cells):
            colours[y, x] = blue_ramp(i, len(cells))
    return colours, start.cell, goal


def raster_map(record: dict, grid: OccupancyGrid | None = None, cell_px: int = 12) -> np.ndarray:
    """``[H*cell_px, W*cell_px, 3]`` uint8 image with inset start/goal markers."""
    colours, start, goal = map_layers(record, grid)
    img = np.repeat(np.repeat(colours, cell_px, axis=0), cell_px, axis=1)
    inset = max(1, cell_px // 4)
    for (x, y), col in ((start, START), (goal, GOAL)):
        img[y * cell_px + inset:(y + 1) * cell_px - inset, x * cell_px + inset:(x + 1) * cell_px - inset] = col
    return img


def _svg(record: dict, grid: OccupancyGrid | None, cell_px: int) -> str:
    colours, start, goal = map_layers(record, grid)
    H, W, _ = colours.shape
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W * cell_px}" height="{H * cell_px}">']
    for y in range(H):
        for x in range(W):
            r, g, b = (int(v) for v in colours[y, x])
            out.append(f'<rect x="{x * cell_px}" y="{y * cell_px}" width="{cell_px}" height="{cell_px}" '
                       f'fill="#{r:02x}{g:02x}{b:02x}"/>')
    rad = cell_px / 4
    for (x, y), (r, g, b) in ((start, START), (goal, GOAL)):
        out.append(f'<circle cx="{(x + 0.5) * cell_px:g}" cy="{(y + 0.5) * cell_px:g}" r="{rad:g}" '
                   f'fill="#{r:02x}{g:02x}{b:02x}"/>')
    out.append("</svg>\n")
    return "\n".join(out)


def export_trajectory_map(episode_log: dict, grid: OccupancyGrid | None, out_path,
                          cell_px: int = 12) -> Path:
    """Write a top-down map; ``.svg`` gives vector output, anything else binary PPM."""
    out_path = Path(out_path)
    if out_path.suffix.lower() == ".svg":
        payload = _svg(episode_log, grid, cell_px).encode()
    else:
        img = raster_map(episode_log, grid, cell_px)
        h, w, _ = img.shape
        payload = f"P6\n{w} {h}\n255\n".encode() + img.tobytes()
    try:
        with open(out_path, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write trajectory map to {out_path}: {exc.strerror}") from exc
    return out_path


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P6":
            raise InputError(f"{path} is not a binary PPM")
        w, h = (int(v) for v in fh.readline().split())
        fh.readline()
        return np.frombuffer(fh.read(), dtype=np.uint8).reshape(h, w, 3)


# ---------------------------------------------------------------------------
# episode logs
# ---------------------------------------------------------------------------

def write_jsonl(path, records: Iterable[dict], mode: str = "w") -> None:
    with open(path, mode) as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_episode_log(path) -> list:
    """Parse an episode-log file; malformed lines raise ``InputError`` with the line number."""
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{os.fspath(path)}:{lineno}: malformed JSON ({exc.msg})") from None
            missing = {"scene", "start", "goal", "actions"} - set(rec) if isinstance(rec, dict) else {"<object>"}
            if missing:
                raise InputError(f"{os.fspath(path)}:{lineno}: missing fields {sorted(missing)}")
            records.append(rec)
    return records
