"""Partially observable Catch.

An NxN binary screen, N frames per episode. A ball starts in a uniform
column of the top row and falls one row per frame; the agent slides a
two-pixel paddle along the bottom row. The terminal frame pays +1 if the
paddle touches the ball column, else -1. Observations are the rendered
screen for frames t < M and all zeros afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..autodiff import ContractError

LEFT, STAY, RIGHT = 0, 1, 2
ACTIONS = (LEFT, STAY, RIGHT)
ACTION_DELTA = {LEFT: -1, STAY: 0, RIGHT: 1}


@dataclass(frozen=True)
class CatchState:
    n: int
    m: int
    t: int
    ball_col: int
    paddle_col: int  # left pixel of the paddle, in [0, n-2]

    @property
    def done(self) -> bool:
        return self.t >= self.n - 1


def render(state: CatchState) -> np.ndarray:
    """Flat N*N observation; blank once the observability horizon passes."""
    obs = np.zeros((state.n, state.n), dtype=np.float64)
    if state.t < state.m:
        obs[state.t, state.ball_col] = 1.0
        obs[state.n - 1, state.paddle_col] = 1.0
        obs[state.n - 1, state.paddle_col + 1] = 1.0
    return obs.reshape(-1)


def catch_reset(n: int, m: int, rng: np.random.Generator) -> tuple[CatchState, np.ndarray]:
    if n < 4:
        raise ContractError(f"screen size must be >= 4, got {n}")
    if not 1 <= m <= n:
        raise ContractError(f"observability horizon must be in [1, {n}], got {m}")
    state = CatchState(
        n=n,
        m=m,
        t=0,
        ball_col=int(rng.integers(0, n)),
        paddle_col=int(rng.integers(0, n - 1)),
    )
    return state, render(state)


def catch_step(state: CatchState, action: int) -> tuple[CatchState, np.ndarray, float, bool]:
    if state.done:
        raise ContractError("episode already finished")
    if action not in ACTIONS:
        raise ContractError(f"unknown action {action!r}")
    paddle = min(max(state.paddle_col + ACTION_DELTA[action], 0), state.n - 2)
    nxt = replace(state, t=state.t + 1, paddle_col=paddle)
    reward = 0.0
    if nxt.done:
        touched = nxt.ball_col in (paddle, paddle + 1)
        reward = 1.0 if touched else -1.0
    return nxt, render(nxt), reward, nxt.done


def catch_oracle(state: CatchState) -> int:
    """Greedy full-observability policy: slide toward covering the ball."""
    if state.ball_col in (state.paddle_col, state.paddle_col + 1):
        return STAY
    target = min(state.ball_col, state.n - 2)
    return RIGHT if target > state.paddle_col else LEFT
