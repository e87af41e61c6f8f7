"""Grid-world stand-in for a 3D audio-visual navigation simulator.

Scenes are procedural occupancy grids; an episode places an agent and a
sounding goal in one scene.  Observations are an egocentric depth (or RGB)
image rendered by grid ray casting and a two-channel magnitude spectrogram
whose level falls off with *geodesic* distance and whose interaural balance
follows the direction of the first step along a shortest path, so sound
appears to bend around walls.

Coordinates are ``(x, y)`` with ``y`` growing downward (row index); headings
are ``0=N, 1=E, 2=S, 3=W``.
"""

from __future__ import annotations

import colorsys
import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .encoders import EgoImage, ObsConfig, Spectrogram
from .errors import ConfigError, ContractError, InputError, SceneRejected

STOP, FORWARD, TURN_LEFT, TURN_RIGHT = 0, 1, 2, 3
ACTION_NAMES = ("stop", "forward", "turn_left", "turn_right")
HEADINGS = "NESW"
DIRS = ((0, -1), (1, 0), (0, 1), (-1, 0))
HEADING_ANGLE = (math.pi / 2, 0.0, -math.pi / 2, math.pi)

SPLITS = ("heard_train", "heard_val", "heard_test",
          "unheard_train", "unheard_val", "unheard_test")
_SCENE_OFFSETS = {"train": 0, "val": 100_000, "test": 200_000}


@dataclass
class WorldConfig:
    layout: str = "rooms"        # rooms | open
    min_size: int = 11
    max_size: int = 21
    min_room: int = 3
    max_room: int = 7
    scene_seed: int = 1000
    train_scenes: int = 20
    val_scenes: int = 5
    test_scenes: int = 5
    num_classes: int = 32
    class_split: list = field(default_factory=lambda: [22, 4, 6])
    class_seed: int = 7
    min_geodesic: int = 2
    max_steps: int = 200
    max_depth: float = 10.0
    fov_deg: float = 90.0
    ild_beta: float = 0.6
    noise_sigma: float = 0.01
    amplitude: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.layout not in ("rooms", "open"):
            raise ConfigError(f"world.layout must be 'rooms' or 'open', got {self.layout!r}")
        if self.min_size < 5 or self.max_size < self.min_size:
            raise ConfigError("world: need 5 <= min_size <= max_size")
        if len(self.class_split) != 3 or any(int(c) < 0 for c in self.class_split):
            raise ConfigError("world.class_split must be three nonnegative counts")
        if sum(self.class_split) > self.num_classes or self.class_split[0] < 1:
            raise ConfigError("world.class_split exceeds num_classes or has an empty train pool")
        for name in ("train_scenes", "val_scenes", "test_scenes", "max_steps", "min_room"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"world.{name} must be >= 1")
        if self.min_geodesic < 1:
            raise ConfigError("world.min_geodesic must be >= 1 (start must differ from goal)")
        if not 0 < self.fov_deg < 180 or self.max_depth <= 0:
            raise ConfigError("world: fov_deg must be in (0, 180) and max_depth positive")
        if self.noise_sigma < 0 or not 0 <= self.ild_beta <= 1:
            raise ConfigError("world: noise_sigma must be >= 0 and ild_beta in [0, 1]")


@dataclass
class RewardConfig:
    success: float = 10.0
    progress: float = 1.0
    step_penalty: float = 0.01


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SceneRef:
    seed: int
    width: int
    height: int
    layout: str = "rooms"
    min_room: int = 3
    max_room: int = 7


@dataclass
class OccupancyGrid:
    walls: np.ndarray  # [height, width] bool
    ref: SceneRef

    @property
    def width(self) -> int:
        return self.walls.shape[1]

    @property
    def height(self) -> int:
        return self.walls.shape[0]

    @property
    def seed(self) -> int:
        return self.ref.seed

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and not self.walls[y, x]

    def free_cells(self) -> list:
        ys, xs = np.nonzero(~self.walls)
        return list(zip(xs.tolist(), ys.tolist()))


def generate_scene(seed: int, width: int, height: int, layout: str = "rooms",
                   min_room: int = 3, max_room: int = 7) -> OccupancyGrid:
    """Rooms separated by one-cell walls with single-cell doors (recursive division)."""
    if width < 5 or height < 5:
        raise ConfigError(f"scene must be at least 5x5, got {width}x{height}")
    if layout not in ("rooms", "open"):
        raise ConfigError(f"unknown layout {layout!r}")
    ref = SceneRef(int(seed), int(width), int(height), layout, int(min_room), int(max_room))
    walls = np.zeros((height, width), dtype=bool)
    walls[0, :] = walls[-1, :] = True
    walls[:, 0] = walls[:, -1] = True
    if layout == "open":
        return OccupancyGrid(walls, ref)

    rng = np.random.default_rng(seed)
    stack = [(1, 1, width - 2, height - 2)]
    while stack:
        x0, y0, x1, y1 = stack.pop()
        w, h = x1 - x0 + 1, y1 - y0 + 1
        if max(w, h) <= max_room and rng.random() < 0.5:
            continue
        # a wall line must land on wall cells at both ends, never on a door
        vertical = [x for x in range(x0 + min_room, x1 - min_room + 1)
                    if walls[y0 - 1, x] and walls[y1 + 1, x]]
        horizontal = [y for y in range(y0 + min_room, y1 - min_room + 1)
                      if walls[y, x0 - 1] and walls[y, x1 + 1]]
        if w > h or (w == h and rng.random() < 0.5):
            order = ("v", vertical), ("h", horizontal)
        else:
            order = ("h", horizontal), ("v", vertical)
        kind, options = next(((k, o) for k, o in order if o), (None, None))
        if kind is None:
            continue
        at = int(options[rng.integers(len(options))])
        if kind == "v":
            walls[y0:y1 + 1, at] = True
            walls[int(rng.integers(y0, y1 + 1)), at] = False
            stack += [(x0, y0, at - 1, y1), (at + 1, y0, x1, y1)]
        else:
            walls[at, x0:x1 + 1] = True
            walls[at, int(rng.integers(x0, x1 + 1))] = False
            stack += [(x0, y0, x1, at - 1), (x0, at + 1, x1, y1)]
    _keep_largest_component(walls)
    return OccupancyGrid(walls, ref)


def _keep_largest_component(walls: np.ndarray) -> None:
    labels = -np.ones(walls.shape, dtype=int)
    sizes = []
    for y, x in zip(*np.nonzero(~walls)):
        if labels[y, x] >= 0:
            continue
        lab = len(sizes)
        labels[y, x] = lab
        queue, n = deque([(x, y)]), 0
        while queue:
            cx, cy = queue.popleft()
            n += 1
            for dx, dy in DIRS:
                nx, ny = cx + dx, cy + dy
                if not walls[ny, nx] and labels[ny, nx] < 0:
                    labels[ny, nx] = lab
                    queue.append((nx, ny))
        sizes.append(n)
    if len(sizes) > 1:
        keep = int(np.argmax(sizes))
        walls[(labels >= 0) & (labels != keep)] = True


def scene_for_seed(seed: int, world: WorldConfig) -> OccupancyGrid:
    rng = np.random.default_rng([int(seed), 0x5CE9E])
    w = int(rng.integers(world.min_size, world.max_size + 1))
    h = int(rng.integers(world.min_size, world.max_size + 1))
    return generate_scene(seed, w, h, world.layout, world.min_room, world.max_room)


def scene_from_ref(ref: SceneRef | dict) -> OccupancyGrid:
    if isinstance(ref, dict):
        ref = SceneRef(**ref)
    return generate_scene(ref.seed, ref.width, ref.height, ref.layout, ref.min_room, ref.max_room)


# ---------------------------------------------------------------------------
# shortest paths
# ---------------------------------------------------------------------------

def distance_field(grid: OccupancyGrid, source: tuple) -> np.ndarray:
    """BFS step counts from ``source`` to every cell; -1 marks walls and unreachable cells."""
    dist = -np.ones(grid.walls.shape, dtype=np.int64)
    sx, sy = source
    if not grid.is_free(sx, sy):
        return dist
    dist[sy, sx] = 0
    queue = deque([(sx, sy)])
    walls = grid.walls
    while queue:
        x, y = queue.popleft()
        nd = dist[y, x] + 1
        for dx, dy in DIRS:
            nx, ny = x + dx, y + dy
            if not walls[ny, nx] and dist[ny, nx] < 0:
                dist[ny, nx] = nd
                queue.append((nx, ny))
    return dist


def geodesic_distance(grid: OccupancyGrid, a: tuple, b: tuple):
    """4-connected shortest path length in cells, or ``None`` if unreachable."""
    if tuple(a) == tuple(b):
        return 0 if grid.in_bounds(*a) else None
    d = int(distance_field(grid, a)[b[1], b[0]])
    return None if d < 0 else d


def shortest_path(grid: OccupancyGrid, start: tuple, goal: tuple) -> list:
    """Cells of one shortest path, start to goal inclusive (neighbor order N, E, S, W)."""
    dist = distance_field(grid, goal)
    x, y = start
    if dist[y, x] < 0:
        return []
    path = [(x, y)]
    while dist[y, x] > 0:
        for dx, dy in DIRS:
            if dist[y + dy, x + dx] == dist[y, x] - 1:
                x, y = x + dx, y + dy
                break
        path.append((x, y))
    return path


def optimal_action_count(grid: OccupancyGrid, start: "AgentState", goal: tuple) -> int | None:
    """Fewest actions (moves and quarter turns) to reach ``goal``, plus the final Stop."""
    seen = {(start.x, start.y, start.heading): 0}
    queue = deque([(start.x, start.y, start.heading)])
    while queue:
        x, y, hd = queue.popleft()
        cost = seen[(x, y, hd)]
        if (x, y) == tuple(goal):
            return cost + 1
        dx, dy = DIRS[hd]
        succ = [((hd - 1) % 4, x, y), ((hd + 1) % 4, x, y)]
        if grid.is_free(x + dx, y + dy):
            succ.append((hd, x + dx, y + dy))
        for nh, nx, ny in succ:
            if (nx, ny, nh) not in seen:
                seen[(nx, ny, nh)] = cost + 1
                queue.append((nx, ny, nh))
    return None


# ---------------------------------------------------------------------------
# episodes and splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AgentState:
    x: int
    y: int
    heading: int

    @property
    def cell(self) -> tuple:
        return (self.x, self.y)


@dataclass(frozen=True)
class SoundSplits:
    train: tuple
    val: tuple
    test: tuple

    @classmethod
    def from_world(cls, world: WorldConfig) -> "SoundSplits":
        a, b, c = (int(n) for n in world.class_split)
        return cls(tuple(range(a)), tuple(range(a, a + b)), tuple(range(a + b, a + b + c)))

    def pool(self, split: str) -> tuple:
        sound, phase = parse_split(split)
        if sound == "heard":
            return (0,)
        return getattr(self, phase)


def parse_split(split: str) -> tuple:
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}; expected one of {', '.join(SPLITS)}")
    sound, phase = split.split("_")
    return sound, phase


def scene_pool(world: WorldConfig, split: str) -> list:
    """Scene seeds of a split; val and test scenes never appear in training."""
    _, phase = parse_split(split)
    count = {"train": world.train_scenes, "val": world.val_scenes, "test": world.test_scenes}[phase]
    base = world.scene_seed + _SCENE_OFFSETS[phase]
    return [base + i for i in range(count)]


@dataclass
class Episode:
    scene: SceneRef
    start: AgentState
    goal: tuple
    sound_class: int
    split: str
    max_steps: int
    geodesic: int = 0


def generate_episode(grid: OccupancyGrid, rng: np.random.Generator, split: str,
                     sound_splits: SoundSplits, min_geodesic: int = 2, max_steps: int = 200,
                     retries: int = 100) -> Episode:
    pool = sound_splits.pool(split)
    if not pool:
        raise ConfigError(f"split {split!r} has an empty sound-class pool")
    cells = grid.free_cells()
    if len(cells) < 2:
        raise SceneRejected(f"scene {grid.seed} has fewer than two free cells")
    for _ in range(retries):
        gi, si = rng.integers(len(cells), size=2)
        goal, start = cells[gi], cells[si]
        d = int(distance_field(grid, goal)[start[1], start[0]])
        if d >= max(1, min_geodesic):
            break
    else:
        raise SceneRejected(
            f"scene {grid.seed}: no start/goal pair at geodesic >= {min_geodesic} after {retries} tries")
    heading = int(rng.integers(4))
    cls = int(pool[rng.integers(len(pool))]) if len(pool) > 1 else int(pool[0])
    return Episode(grid.ref, AgentState(start[0], start[1], heading), goal, cls, split, max_steps, d)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _cast_column(walls: np.ndarray, px: float, py: float, rx: float, ry: float, max_depth: float):
    """Perpendicular distance to the first wall along a ray (grid DDA) and the hit cell/side."""
    mx, my = int(px), int(py)
    ddx = abs(1.0 / rx) if rx else math.inf
    ddy = abs(1.0 / ry) if ry else math.inf
    if rx < 0:
        sx, side_x = -1, (px - mx) * ddx
    else:
        sx, side_x = 1, (mx + 1.0 - px) * ddx
    if ry < 0:
        sy, side_y = -1, (py - my) * ddy
    else:
        sy, side_y = 1, (my + 1.0 - py) * ddy
    while True:
        if side_x < side_y:
            dist, side = side_x, 0
            side_x += ddx
            mx += sx
        else:
            dist, side = side_y, 1
            side_y += ddy
            my += sy
        if dist > max_depth:
            return max_depth, None, side
        if walls[my, mx]:
            return dist, (mx, my), side


def _wall_hue(cell) -> float:
    x, y = cell
    return ((x * 73856093) ^ (y * 19349663)) % 360 / 360.0


def render_view(state: AgentState, grid: OccupancyGrid, cfg: ObsConfig,
                max_depth: float = 10.0, fov_deg: float = 90.0) -> np.ndarray:
    """``[Hv, Wv, C]`` pixels for the pose; depth mode is normalized hit distance."""
    H, W = cfg.Hv, cfg.Wv
    dx, dy = DIRS[state.heading]
    half = math.tan(math.radians(fov_deg) / 2)
    plane_x, plane_y = -dy * half, dx * half  # screen right
    px, py = state.x + 0.5, state.y + 0.5
    wall_d = np.empty(W)
    hits, sides = [], []
    for i in range(W):
        cam = 2.0 * (i + 0.5) / W - 1.0
        d, hit, side = _cast_column(grid.walls, px, py, dx + plane_x * cam, dy + plane_y * cam, max_depth)
        wall_d[i] = d
        hits.append(hit)
        sides.append(side)
    # floor/ceiling distance per row for a camera at half wall height
    yn = (np.arange(H) + 0.5 - H / 2) / (H / 2) * half
    plane_d = 0.5 / np.abs(yn)
    depth = np.minimum(wall_d[None, :], plane_d[:, None])
    norm = np.clip(depth / max_depth, 0.0, 1.0)
    if cfg.mode == "depth":
        return norm[:, :, None]
    shade = 1.0 - 0.8 * norm
    rgb = np.empty((H, W, 3))
    on_wall = wall_d[None, :] <= plane_d[:, None]
    floor = (yn > 0)[:, None]
    for i in range(W):
        if hits[i] is None:
            base = (0.5, 0.5, 0.5)
        else:
            base = colorsys.hsv_to_rgb(_wall_hue(hits[i]), 0.55, 0.9 if sides[i] == 0 else 0.72)
        for r in range(H):
            if on_wall[r, i]:
                c = base
            elif floor[r, 0]:
                c = (0.45, 0.40, 0.35)
            else:
                c = (0.85, 0.85, 0.90)
            rgb[r, i] = np.multiply(c, shade[r, i])
    return np.clip(rgb, 0.0, 1.0)


def render_depth(state: AgentState, grid: OccupancyGrid, cfg: ObsConfig,
                 max_depth: float = 10.0, fov_deg: float = 90.0) -> EgoImage:
    return EgoImage(cfg.mode, render_view(state, grid, cfg, max_depth, fov_deg))


def sound_envelope(class_id: int, F: int, seed: int = 7) -> np.ndarray:
    """Procedural spectral envelope of a sound class, normalized to unit max."""
    rng = np.random.default_rng([int(seed), int(class_id)])
    bins = np.arange(F)
    env = np.full(F, 0.05)
    for _ in range(int(rng.integers(2, 5))):
        centre = rng.uniform(0, F - 1)
        width = rng.uniform(0.6, max(1.0, F / 4))
        env += rng.uniform(0.3, 1.0) * np.exp(-0.5 * ((bins - centre) / width) ** 2)
    return env / env.max()


def arrival_direction(dist: np.ndarray, x: int, y: int):
    """World angle (radians, counter-clockwise from +x) of the first shortest-path step.

    Several tied first steps are averaged as unit vectors; ``None`` on the source cell.
    """
    d = dist[y, x]
    if d <= 0:
        return None
    steps = [(dx, dy) for dx, dy in DIRS if dist[y + dy, x + dx] == d - 1]
    vx = sum(s[0] for s in steps)
    vy = sum(s[1] for s in steps)
    if vx * vx + vy * vy < 1e-12:
        vx, vy = steps[0]
    return math.atan2(-vy, vx)


def interaural_gains(dist_geo: int, sin_rel: float, beta: float) -> tuple:
    g = 1.0 / (1.0 + dist_geo)
    return g * (1.0 + beta * sin_rel) / (1.0 + beta), g * (1.0 - beta * sin_rel) / (1.0 + beta)


def relative_sine(state: AgentState, arrival) -> float:
    if arrival is None:
        return 0.0
    s = math.sin(arrival - HEADING_ANGLE[state.heading])
    return 0.0 if abs(s) < 1e-12 else s


def render_binaural(state: AgentState, grid: OccupancyGrid, episode: Episode, cfg: ObsConfig,
                    rng: np.random.Generator | None, world: WorldConfig,
                    dist: np.ndarray | None = None) -> Spectrogram:
    if dist is None:
        dist = distance_field(grid, episode.goal)
    d = int(dist[state.y, state.x])
    if d < 0:
        raise InputError(f"sound source at {episode.goal} is unreachable from {state.cell}")
    s = relative_sine(state, arrival_direction(dist, state.x, state.y))
    gl, gr = interaural_gains(d, s, world.ild_beta)
    env = world.amplitude * sound_envelope(episode.sound_class, cfg.F, world.class_seed)
    frame = np.stack([gl * env, gr * env])
    mags = np.repeat(frame[:, :, None], cfg.Tw, axis=2)
    if world.noise_sigma > 0:
        if rng is None:
            raise ContractError("render_binaural: noise_sigma > 0 needs an rng")
        mags = np.maximum(mags + rng.normal(0.0, world.noise_sigma, mags.shape), 0.0)
    return Spectrogram(mags)


@dataclass
class Observation:
    image: EgoImage
    spectrogram: Spectrogram

    def __post_init__(self):
        if not (np.all(np.isfinite(self.image.pixels)) and np.all(np.isfinite(self.spectrogram.data))):
            raise InputError("observation contains non-finite values")


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------

class NavEnv:
    """One navigation environment drawing episodes from a split.

    ``reset`` samples a scene from the split's pool and an episode in it;
    ``step`` applies one of ``STOP, FORWARD, TURN_LEFT, TURN_RIGHT``.  When an
    episode finishes, ``info["log"]`` carries its episode-log record.
    """

    def __init__(self, world: WorldConfig, obs: ObsConfig, split: str, seed,
                 reward: RewardConfig | None = None):
        self.world, self.obs_cfg, self.split = world, obs, split
        self.reward_cfg = reward or RewardConfig()
        self.rng = np.random.default_rng(seed)
        self.sound_splits = SoundSplits.from_world(world)
        self.scenes = scene_pool(world, split)
        self._grids: dict = {}
        self._views: dict = {}
        self.episode = None
        self.done = True

    def grid_for(self, seed: int) -> OccupancyGrid:
        if seed not in self._grids:
            self._grids[seed] = scene_for_seed(seed, self.world)
        return self._grids[seed]

    def sample_episode(self) -> Episode:
        seed = self.scenes[int(self.rng.integers(len(self.scenes)))]
        return generate_episode(self.grid_for(seed), self.rng, self.split, self.sound_splits,
                                self.world.min_geodesic, self.world.max_steps)

    def reset(self, episode: Episode | None = None, noise_seed=None) -> Observation:
        ep = episode or self.sample_episode()
        self.grid = self._grids.get(ep.scene.seed) or scene_from_ref(ep.scene)
        self._grids.setdefault(ep.scene.seed, self.grid)
        if not (self.grid.is_free(*ep.start.cell) and self.grid.is_free(*ep.goal)):
            raise InputError(f"episode does not fit scene {ep.scene.seed}")
        self.episode = ep
        self.dist = distance_field(self.grid, ep.goal)
        self.state = ep.start
        self.noise_rng = self.rng if noise_seed is None else np.random.default_rng(noise_seed)
        self.steps = 0
        self.done = False
        self.actions, self.rewards = [], []
        self.path_length = 0
        self.trajectory = [list(ep.start.cell)]
        return self.observe()

    def view(self, state: AgentState) -> np.ndarray:
        key = (self.grid.seed, self.grid.width, self.grid.height, state)
        img = self._views.get(key)
        if img is None:
            if len(self._views) >= 50_000:
                self._views.clear()
            img = render_view(state, self.grid, self.obs_cfg, self.world.max_depth, self.world.fov_deg)
            self._views[key] = img
        return img

    def observe(self) -> Observation:
        spec = render_binaural(self.state, self.grid, self.episode, self.obs_cfg,
                               self.noise_rng, self.world, self.dist)
        return Observation(EgoImage(self.obs_cfg.mode, self.view(self.state)), spec)

    def step(self, action: int):
        if self.done:
            raise ContractError("step() called on a finished episode; call reset()")
        action = int(action)
        if action not in (STOP, FORWARD, TURN_LEFT, TURN_RIGHT):
            raise ContractError(f"invalid action {action}")
        rc = self.reward_cfg
        s = self.state
        before = int(self.dist[s.y, s.x])
        reward = -rc.step_penalty
        success = collision = False
        if action == STOP:
            success = s.cell == tuple(self.episode.goal)
            if success:
                reward += rc.success
            self.done = True
        elif action == FORWARD:
            dx, dy = DIRS[s.heading]
            if self.grid.is_free(s.x + dx, s.y + dy):
                self.state = AgentState(s.x + dx, s.y + dy, s.heading)
                self.path_length += 1
                self.trajectory.append(list(self.state.cell))
            else:
                collision = True
            reward += rc.progress * (before - int(self.dist[self.state.y, self.state.x]))
        elif action == TURN_LEFT:
            self.state = AgentState(s.x, s.y, (s.heading - 1) % 4)
        else:
            self.state = AgentState(s.x, s.y, (s.heading + 1) % 4)
        self.steps += 1
        self.actions.append(action)
        self.rewards.append(reward)
        if not self.done and self.steps >= self.episode.max_steps:
            self.done = True
        info = {"success": success, "collision": collision,
                "geodesic": int(self.dist[self.state.y, self.state.x])}
        if self.done:
            info["log"] = self.episode_log(success)
        return self.observe(), reward, self.done, info

    def episode_log(self, success: bool) -> dict:
        ep = self.episode
        return {
            "scene": asdict(ep.scene),
            "split": ep.split,
            "start": [ep.start.x, ep.start.y, ep.start.heading],
            "goal": list(ep.goal),
            "sound_class": ep.sound_class,
            "max_steps": ep.max_steps,
            "actions": list(self.actions),
            "rewards": [float(r) for r in self.rewards],
            "success": bool(success),
            "path_length": self.path_length,
            "shortest_length": ep.geodesic,
            "action_count": len(self.actions),
            "optimal_action_count": optimal_action_count(self.grid, ep.start, ep.goal),
        }


def replay_trajectory(grid: OccupancyGrid, start: AgentState, actions) -> list:
    """Cells visited when ``actions`` are executed from ``start`` (collisions keep position)."""
    s = start
    cells = [s.cell]
    for a in actions:
        if a == FORWARD:
            dx, dy = DIRS[s.heading]
            if grid.is_free(s.x + dx, s.y + dy):
                s = AgentState(s.x + dx, s.y + dy, s.heading)
                cells.append(s.cell)
        elif a == TURN_LEFT:
            s = AgentState(s.x, s.y, (s.heading - 1) % 4)
        elif a == TURN_RIGHT:
            s = AgentState(s.x, s.y, (s.heading + 1) % 4)
        elif a == STOP:
            break
    return cells
