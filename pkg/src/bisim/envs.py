"""Built-in testbeds.

The main one is a 31-state grid: two 3x5 rooms stacked vertically, joined by
a single hallway cell, with one goal cell per room placed mirror-symmetrically.
Movement is deterministic; walking into a wall (or off the grid) keeps the
agent in place at reward -1, entering a goal cell pays +1, anything else pays
0. Goal cells are ordinary states with their own outgoing transitions.

Also here: a 3-state example where the optimal values of two states agree but
the action-labeled metric separates them maximally, the duplication wrapper
that splits every transition across two identical copies of the state space,
and seeded random MDP generation for property tests.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .mdp import DeterministicMdp, StochasticMdp

WALL, FLOOR, GOAL = "#", ".", "G"

DEFAULT_LAYOUT_ROWS = (
    "G....",
    ".....",
    ".....",
    "##.##",
    ".....",
    ".....",
    "G....",
)

# Action ids, in table order.
UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
ACTION_NAMES = ("up", "down", "left", "right")


class GridLayout:
    """Character-grid world description: '#' wall, '.' floor, 'G' goal."""

    def __init__(self, rows):
        rows = [str(r) for r in rows]
        if not rows:
            raise ValueError("layout has no rows")
        width = len(rows[0])
        if width == 0:
            raise ValueError("layout rows are empty")
        for i, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(
                    f"layout row {i} has length {len(row)}, expected {width}")
            for j, ch in enumerate(row):
                if ch not in (WALL, FLOOR, GOAL):
                    raise ValueError(
                        f"layout has invalid character {ch!r} at row {i}, "
                        f"column {j}")
        self.rows = rows
        self.height = len(rows)
        self.width = width
        self.coords = []          # state id -> (row, col)
        self.state_of = {}        # (row, col) -> state id
        for r in range(self.height):
            for c in range(self.width):
                if rows[r][c] != WALL:
                    self.state_of[(r, c)] = len(self.coords)
                    self.coords.append((r, c))
        self.num_states = len(self.coords)
        self.goal_states = [
            self.state_of[(r, c)]
            for (r, c) in self.coords if rows[r][c] == GOAL]

    def is_wall(self, r: int, c: int) -> bool:
        if r < 0 or r >= self.height or c < 0 or c >= self.width:
            return True
        return self.rows[r][c] == WALL

    def xy_table(self) -> np.ndarray:
        """Noise-free (x, y) embedding of every state, min-max normalized
        into [-1, 1] per axis over the non-wall cells."""
        coords = np.array(self.coords, dtype=np.float64)
        xs, ys = coords[:, 1], coords[:, 0]
        out = np.empty((self.num_states, 2))
        for k, axis in enumerate((xs, ys)):
            lo, hi = axis.min(), axis.max()
            out[:, k] = 0.0 if hi == lo else 2.0 * (axis - lo) / (hi - lo) - 1.0
        return out


def parse_layout(text: str) -> GridLayout:
    return GridLayout([line for line in text.splitlines() if line.strip()])


def load_layout(path) -> GridLayout:
    with open(path) as f:
        return parse_layout(f.read())


def default_layout() -> GridLayout:
    return GridLayout(DEFAULT_LAYOUT_ROWS)


def mirror_state_map(layout: GridLayout) -> np.ndarray:
    """Top-bottom reflection map (r, c) -> (height-1-r, c) as a state
    permutation; raises when the layout is not symmetric under it."""
    out = np.empty(layout.num_states, dtype=np.int64)
    for s, (r, c) in enumerate(layout.coords):
        mirrored = (layout.height - 1 - r, c)
        if mirrored not in layout.state_of:
            raise ValueError(
                f"layout is not mirror-symmetric: cell {(r, c)} has no "
                f"counterpart at {mirrored}")
        if layout.rows[r][c] != layout.rows[mirrored[0]][mirrored[1]]:
            raise ValueError(
                f"layout is not mirror-symmetric: cell kinds differ at "
                f"{(r, c)} vs {mirrored}")
        out[s] = layout.state_of[mirrored]
    return out


@dataclasses.dataclass
class NoiseModel:
    """Per-coordinate Gaussian noise held inside [-clip, clip].

    mode "truncate" redraws out-of-range samples (keeps the bell shape inside
    the window); "clamp" projects them onto the boundary instead.
    """

    sigma: float
    clip: float
    mode: str = "truncate"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.clip <= 0:
            raise ValueError("clip must be positive")
        if self.mode not in ("truncate", "clamp"):
            raise ValueError(f"unknown noise mode {self.mode!r}")

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.sigma == 0.0:
            return np.zeros(shape)
        out = rng.normal(0.0, self.sigma, size=shape)
        if self.mode == "clamp":
            return np.clip(out, -self.clip, self.clip)
        bad = np.abs(out) > self.clip
        while bad.any():
            out[bad] = rng.normal(0.0, self.sigma, size=int(bad.sum()))
            bad = np.abs(out) > self.clip
        return out


def embed_xy(layout: GridLayout, state: int,
             noise: NoiseModel | None = None,
             rng: np.random.Generator | None = None) -> np.ndarray:
    """Normalized (x, y) coordinates of a state, optionally perturbed by a
    fresh noise draw from the supplied generator."""
    out = layout.xy_table()[state].copy()
    if noise is not None:
        if rng is None:
            raise ValueError("noisy embedding requires an rng")
        out += noise.draw(rng, (2,))
    return out


def build_gridworld(layout: GridLayout, gamma: float) -> DeterministicMdp:
    """Deterministic grid MDP with 4 actions (up, down, left, right)."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if not layout.goal_states:
        raise ValueError("layout has no goal cells")
    n = layout.num_states
    next_state = np.empty((n, 4), dtype=np.int64)
    reward = np.zeros((n, 4))
    for s, (r, c) in enumerate(layout.coords):
        for a, (dr, dc) in enumerate(_MOVES):
            tr, tc = r + dr, c + dc
            if layout.is_wall(tr, tc):
                next_state[s, a] = s
                reward[s, a] = -1.0
            else:
                next_state[s, a] = layout.state_of[(tr, tc)]
                reward[s, a] = 1.0 if layout.rows[tr][tc] == GOAL else 0.0
    labels = [f"({r},{c})" for (r, c) in layout.coords]
    return DeterministicMdp(n, 4, next_state, reward, gamma, labels=labels)


def build_pessimism_mdp(k: float = 1.0, gamma: float = 0.9) -> DeterministicMdp:
    """3-state, 2-action example: states 0 and 1 earn the same optimal value
    but only through differently-labeled actions, so the action-matched
    metric separates them by k/(1-gamma) while the lax metric does not."""
    next_state = np.array([[1, 2], [2, 0], [2, 2]])
    reward = np.array([[k, 0.0], [0.0, k], [0.0, 0.0]])
    return DeterministicMdp(3, 2, next_state, reward, gamma,
                            labels=["s", "t", "u"])


def duplicate_mdp(mdp: DeterministicMdp, jump_prob: float) -> StochasticMdp:
    """Two copies of the state space; every transition lands in the
    within-copy successor with probability 1-jump_prob and in the other
    copy's successor with probability jump_prob. States s and s+S are twins
    and should be behaviorally indistinguishable for any jump probability."""
    if not 0.0 <= jump_prob <= 1.0:
        raise ValueError("jump_prob must lie in [0, 1]")
    n, m = mdp.num_states, mdp.num_actions
    transition = np.zeros((2 * n, m, 2 * n))
    for s in range(n):
        for a in range(m):
            nxt = mdp.next_state[s, a]
            transition[s, a, nxt] += 1.0 - jump_prob
            transition[s, a, nxt + n] += jump_prob
            transition[s + n, a, nxt + n] += 1.0 - jump_prob
            transition[s + n, a, nxt] += jump_prob
    reward = np.vstack([mdp.reward, mdp.reward])
    labels = None
    if mdp.labels is not None:
        labels = [f"{l}/0" for l in mdp.labels] + [f"{l}/1" for l in mdp.labels]
    return StochasticMdp(2 * n, m, transition, reward, mdp.gamma,
                         labels=labels)


def random_deterministic_mdp(num_states: int, num_actions: int,
                             reward_range=(-1.0, 1.0), gamma: float = 0.9,
                             seed: int = 0) -> DeterministicMdp:
    if num_states < 1 or num_actions < 1:
        raise ValueError("num_states and num_actions must be at least 1")
    rng = np.random.default_rng(seed)
    lo, hi = reward_range
    return DeterministicMdp(
        num_states, num_actions,
        rng.integers(0, num_states, size=(num_states, num_actions)),
        rng.uniform(lo, hi, size=(num_states, num_actions)),
        gamma)
