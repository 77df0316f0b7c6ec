"""20x20 tabular GridWorld with slippery actions.

Cells are integers 0..399 numbered bottom-to-top within a column, columns
left to right, so cell 0 is the bottom-left start and cell 399 the top-right
goal. Geometrically the grid lives on the unit square with pitch 0.05 and
cell centers at ((col + 0.5) * 0.05, (row + 0.5) * 0.05); the center mapping
is what the coordinate-space hill climbing operates on.

The intended action executes with probability 0.8, otherwise one of the four
actions is taken uniformly at random. Moves off the grid leave the cell
unchanged. Reward is -1 per step (cost to goal), discount 1.0, and episodes
end on reaching the goal or at the 1000-step cap (truncation only).
"""

from __future__ import annotations

import numpy as np

GRID = 20
N_CELLS = GRID * GRID
N_ACTIONS = 4
PITCH = 1.0 / GRID
START_CELL = 0
GOAL_CELL = N_CELLS - 1

# action order matches the continuous GridWorld: up, down, left, right
_DELTAS = ((0, 1), (0, -1), (-1, 0), (1, 0))  # (dcol, drow)


def cell_to_colrow(cell: int) -> tuple[int, int]:
    return cell // GRID, cell % GRID


def colrow_to_cell(col: int, row: int) -> int:
    return col * GRID + row


def cell_to_center(cell: int) -> np.ndarray:
    col, row = cell_to_colrow(cell)
    return np.array([(col + 0.5) * PITCH, (row + 0.5) * PITCH])


def center_to_cell(x: float, y: float) -> int:
    """Snap a point to the nearest valid cell."""
    col = min(GRID - 1, max(0, int(x / PITCH)))
    row = min(GRID - 1, max(0, int(y / PITCH)))
    return colrow_to_cell(col, row)


def apply_move(cell: int, direction: int) -> int:
    col, row = cell_to_colrow(cell)
    dc, dr = _DELTAS[direction]
    nc, nr = col + dc, row + dr
    if 0 <= nc < GRID and 0 <= nr < GRID:
        return colrow_to_cell(nc, nr)
    return cell


class TabularGridWorld:
    def __init__(self, success_prob: float = 0.8):
        self.success_prob = success_prob
        self.n_cells = N_CELLS
        self.n_actions = N_ACTIONS
        self.gamma = 1.0
        self.episode_cap = 1000
        self.tag = "tabular-gridworld"

    def initial_cell(self) -> int:
        return START_CELL

    def step(self, cell: int, a: int, rng: np.random.Generator):
        """Returns (next_cell, reward, terminal)."""
        if not 0 <= a < N_ACTIONS:
            raise ValueError(f"invalid action {a}")
        direction = a if rng.random() < self.success_prob else int(rng.integers(N_ACTIONS))
        nxt = apply_move(cell, direction)
        return nxt, -1.0, nxt == GOAL_CELL

    def transition_kernel(self) -> np.ndarray:
        """Dense P[s, a, s'] for exact value iteration; goal is absorbing."""
        p = np.zeros((N_CELLS, N_ACTIONS, N_CELLS))
        slip = (1.0 - self.success_prob) / N_ACTIONS
        for s in range(N_CELLS):
            if s == GOAL_CELL:
                p[s, :, s] = 1.0
                continue
            for a in range(N_ACTIONS):
                p[s, a, apply_move(s, a)] += self.success_prob
                for d in range(N_ACTIONS):
                    p[s, a, apply_move(s, d)] += slip
        return p
