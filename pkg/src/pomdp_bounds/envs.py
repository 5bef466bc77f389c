"""Builtin benchmark environments and the name registry used by the CLI."""

from __future__ import annotations

import itertools
from typing import Callable

import numpy as np

from .core import Belief, ModelError, PomdpModel


def _check_discount(gamma: float):
    if not 0.0 < gamma < 1.0:
        raise ModelError(f"discount must lie in (0, 1), got {gamma}")


def build_guessing_game(gamma: float = 0.95) -> PomdpModel:
    """Guess the hidden state (x or y) or wait; waiting swaps the state with probability 0.2."""
    _check_discount(gamma)
    sx, sy, sink = 0, 1, 2
    T = [np.zeros((3, 3)) for _ in range(3)]
    for a in (0, 1):
        T[a][:, sink] = 1.0
    T[2][sx, sx], T[2][sx, sy] = 0.8, 0.2
    T[2][sy, sy], T[2][sy, sx] = 0.8, 0.2
    T[2][sink, sink] = 1.0
    Z = [np.ones((3, 1)) for _ in range(3)]
    R = np.zeros((3, 3))
    R[sx, 0] = 1.0
    R[sy, 1] = 1.0
    return PomdpModel(
        T, Z, R, gamma, Belief.uniform([sx, sy]),
        state_names=["s_x", "s_y", "s_sink"],
        action_names=["x", "y", "w"],
        observation_names=["none"],
        name="guessing_game",
    )


def build_tiger(gamma: float = 0.95) -> PomdpModel:
    """Classic tiger problem with 0.85 listening accuracy."""
    _check_discount(gamma)
    listen, open_left, open_right = 0, 1, 2
    T = [np.eye(2), np.full((2, 2), 0.5), np.full((2, 2), 0.5)]
    Z = [np.array([[0.85, 0.15], [0.15, 0.85]]), np.full((2, 2), 0.5), np.full((2, 2), 0.5)]
    R = np.zeros((2, 3))
    R[:, listen] = -1.0
    R[:, open_left] = [-100.0, 10.0]
    R[:, open_right] = [10.0, -100.0]
    return PomdpModel(
        T, Z, R, gamma, Belief.uniform([0, 1]),
        state_names=["tiger-left", "tiger-right"],
        action_names=["listen", "open-left", "open-right"],
        observation_names=["hear-left", "hear-right"],
        name="tiger",
    )


GRID_MOVES = {"stay": (0, 0), "up": (1, 0), "down": (-1, 0), "left": (0, -1), "right": (0, 1)}


def build_grid(gamma: float = 0.95, size: int = 6) -> PomdpModel:
    """Navigate from the bottom-left to the top-right cell observing only the column.

    State index is ``row * size + col`` with row 0 at the bottom. Moves succeed
    with probability 0.6; each other move and staying get 0.1, and mass that
    would leave the grid stays in place. Reward 1 is paid on entering (or
    remaining in) the top-right cell, expressed as an expected ``R(s, a)``.
    """
    _check_discount(gamma)
    n = size * size
    names = list(GRID_MOVES)
    goal = n - 1

    def target(s, move):
        r, c = divmod(s, size)
        dr, dc = GRID_MOVES[move]
        r2, c2 = r + dr, c + dc
        if 0 <= r2 < size and 0 <= c2 < size:
            return r2 * size + c2
        return s

    T = []
    for a, move in enumerate(names):
        mat = np.zeros((n, n))
        for s in range(n):
            if move == "stay":
                mat[s, s] = 1.0
                continue
            for other in names:
                mat[s, target(s, other)] += 0.6 if other == move else 0.1
        T.append(mat)
    Zm = np.zeros((n, size))
    Zm[np.arange(n), np.arange(n) % size] = 1.0
    Z = [Zm] * len(names)
    R = np.stack([T[a][:, goal] for a in range(len(names))], axis=1)
    return PomdpModel(
        T, Z, R, gamma, Belief.unit(0),
        state_names=[f"r{s // size}c{s % size}" for s in range(n)],
        action_names=names,
        observation_names=[f"col{c}" for c in range(size)],
        name="grid",
    )


KOON_LEVELS = 4
KOON_DEGRADE = (0.2, 0.5, 0.9)


def build_k_out_of_n(n_components: int = 2, gamma: float = 0.95) -> PomdpModel:
    """Maintenance of ``N`` components with four degradation levels each.

    Per component the agent chooses nothing (0), inspect (1) or repair (2).
    Unrepaired components degrade one level with probability 0.2, 0.5 or 0.9
    when zero, one or more components are currently broken. The joint
    observation carries, per component, the post-transition level when that
    component is inspected and level 0 otherwise; since the agent knows which
    components it inspected, the shared symbol is unambiguous and
    ``|O| = 4^N``.
    """
    if n_components not in (1, 2, 3):
        raise ModelError(f"K-out-of-N supports 1 to 3 components, got {n_components}")
    _check_discount(gamma)
    L, N = KOON_LEVELS, n_components
    broken = L - 1
    states = list(itertools.product(range(L), repeat=N))
    actions = list(itertools.product(range(3), repeat=N))
    enc = lambda levels: sum(lv * L**i for i, lv in enumerate(levels))
    n_s, n_a = len(states), len(actions)
    # itertools.product varies the last component fastest; re-index by enc
    states.sort(key=enc)
    actions.sort(key=lambda acts: sum(x * 3**i for i, x in enumerate(acts)))

    T, Z = [], []
    R = np.zeros((n_s, n_a))
    for a, acts in enumerate(actions):
        tmat = np.zeros((n_s, n_s))
        zmat = np.zeros((n_s, n_s))
        for s, levels in enumerate(states):
            n_broken = sum(lv == broken for lv in levels)
            p = KOON_DEGRADE[min(n_broken, 2)]
            per_comp = []
            for lv, act in zip(levels, acts):
                if act == 2:
                    per_comp.append({0: 1.0})
                elif lv == broken:
                    per_comp.append({lv: 1.0})
                else:
                    per_comp.append({lv: 1.0 - p, lv + 1: p})
            for combo in itertools.product(*(d.items() for d in per_comp)):
                nxt = enc([lv for lv, _ in combo])
                tmat[s, nxt] += np.prod([q for _, q in combo])
            R[s, a] = (-0.5 * n_broken
                       - 0.05 * sum(x == 1 for x in acts)
                       - 0.25 * sum(x == 2 for x in acts))
        for s2, levels in enumerate(states):
            seen = [lv if act == 1 else 0 for lv, act in zip(levels, acts)]
            zmat[s2, enc(seen)] = 1.0
        T.append(tmat)
        Z.append(zmat)
    act_sym = "nir"
    return PomdpModel(
        T, Z, R, gamma, Belief.unit(0),
        state_names=["s" + "".join(map(str, lv)) for lv in states],
        action_names=["".join(act_sym[x] for x in acts) for acts in actions],
        observation_names=["o" + "".join(map(str, lv)) for lv in states],
        name=f"k_out_of_n_{N}",
    )


BUILTINS: dict[str, Callable[..., PomdpModel]] = {
    "guessing_game": build_guessing_game,
    "tiger": build_tiger,
    "grid": build_grid,
    "k_out_of_n": build_k_out_of_n,
}


def make_env(name: str, gamma: float = 0.95) -> PomdpModel:
    """Resolve a builtin by name; ``k_out_of_n(2)``, ``k_out_of_n_2`` and ``koon2`` all work."""
    key = name.strip().lower().replace("-", "_")
    for prefix in ("k_out_of_n", "koon"):
        if key.startswith(prefix) and key != prefix:
            digits = "".join(ch for ch in key[len(prefix):] if ch.isdigit())
            if not digits:
                break
            return build_k_out_of_n(int(digits), gamma)
    if key in ("k_out_of_n", "koon"):
        return build_k_out_of_n(2, gamma)
    if key not in BUILTINS:
        raise KeyError(f"unknown environment {name!r}; choose from {sorted(BUILTINS)}")
    return BUILTINS[key](gamma)
