"""Deterministic classic-control tasks: catch, cartpole, mountain_car.

All three follow the same tiny interface: ``reset(seed)`` and ``step(action)``
return a ``StepResult``; three discrete actions each; observations are float32
vectors.  An action-noise wrapper replaces the agent's action with a uniform
random one at a configurable rate (the *executed* action is what callers see
and should log).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ENV_IDS = ("catch", "cartpole", "mountain_car")


@dataclass(frozen=True)
class EnvSpec:
    env_id: str
    observation_dim: int
    action_count: int
    max_episode_steps: int


ENV_SPECS = {
    "catch": EnvSpec("catch", 50, 3, 9),
    "cartpole": EnvSpec("cartpole", 6, 3, 1000),
    "mountain_car": EnvSpec("mountain_car", 3, 3, 1000),
}


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminal: bool
    step_index: int


@dataclass(frozen=True)
class NoiseConfig:
    epsilon: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")


class _EnvBase:
    spec: EnvSpec

    def __init__(self):
        self._step_index = 0
        self._terminal = True

    def reset(self, seed: int) -> StepResult:
        self._rng = np.random.default_rng(seed)
        self._step_index = 0
        self._terminal = False
        obs = self._reset_state()
        return StepResult(obs, 0.0, False, 0)

    def step(self, action: int) -> StepResult:
        if self._terminal:
            raise RuntimeError(f"{self.spec.env_id}: step() called on a terminal episode")
        if not 0 <= action < self.spec.action_count:
            raise ValueError(f"{self.spec.env_id}: action {action} out of range "
                             f"[0, {self.spec.action_count})")
        self._step_index += 1
        obs, reward, terminal = self._transition(int(action))
        if self._step_index >= self.spec.max_episode_steps:
            terminal = True
        self._terminal = terminal
        return StepResult(obs, reward, terminal, self._step_index)

    # subclasses
    def _reset_state(self) -> np.ndarray:
        raise NotImplementedError

    def _transition(self, action: int) -> tuple[np.ndarray, float, bool]:
        raise NotImplementedError


class Catch(_EnvBase):
    """10x5 board; the ball falls one row per step, the paddle moves one column.

    Observation is the flattened binary board.  The episode always lasts 9
    steps and pays +1 if the paddle is under the ball on the final row, else
    -1; every other step pays 0.
    """

    ROWS, COLS = 10, 5
    spec = ENV_SPECS["catch"]

    def _reset_state(self) -> np.ndarray:
        self._ball_row = 0
        self._ball_col = int(self._rng.integers(0, self.COLS))
        self._paddle_col = self.COLS // 2
        return self._observation()

    def _observation(self) -> np.ndarray:
        board = np.zeros((self.ROWS, self.COLS), dtype=np.float32)
        board[self._ball_row, self._ball_col] = 1.0
        board[self.ROWS - 1, self._paddle_col] = 1.0
        return board.reshape(-1)

    def _transition(self, action: int):
        self._paddle_col = int(np.clip(self._paddle_col + action - 1, 0, self.COLS - 1))
        self._ball_row += 1
        if self._ball_row == self.ROWS - 1:
            reward = 1.0 if self._ball_col == self._paddle_col else -1.0
            return self._observation(), reward, True
        return self._observation(), 0.0, False


class Cartpole(_EnvBase):
    """Cart-pole balancing with a 6-dim observation and a 1000-step cap.

    Physics: gravity 9.8, cart mass 1.0, pole mass 0.1, half-length 0.5,
    force -10/0/+10; each action advances 0.01s via 10 Euler substeps.
    Reward is +1 per step while |angle| <= 12 degrees and |x| <= 2.4; the
    episode ends when either bound is violated or at the step cap.
    """

    spec = ENV_SPECS["cartpole"]

    GRAVITY = 9.8
    MASS_CART = 1.0
    MASS_POLE = 0.1
    HALF_LENGTH = 0.5
    FORCE_MAG = 10.0
    SUBSTEPS = 10
    SUBSTEP_DT = 0.001
    ANGLE_LIMIT = 12.0 * math.pi / 180.0
    X_LIMIT = 2.4
    INIT_SCALE = 0.05

    def _reset_state(self) -> np.ndarray:
        self._x, self._xdot, self._theta, self._thetadot = self._rng.uniform(
            -self.INIT_SCALE, self.INIT_SCALE, size=4)
        return self._observation()

    def _observation(self) -> np.ndarray:
        return np.array([
            self._x,
            self._xdot,
            math.cos(self._theta),
            math.sin(self._theta),
            self._thetadot,
            self._step_index / self.spec.max_episode_steps,
        ], dtype=np.float32)

    def _transition(self, action: int):
        force = (action - 1) * self.FORCE_MAG
        total_mass = self.MASS_CART + self.MASS_POLE
        pml = self.MASS_POLE * self.HALF_LENGTH
        x, xdot, th, thdot = self._x, self._xdot, self._theta, self._thetadot
        for _ in range(self.SUBSTEPS):
            cos, sin = math.cos(th), math.sin(th)
            temp = (force + pml * thdot * thdot * sin) / total_mass
            thacc = (self.GRAVITY * sin - cos * temp) / (
                self.HALF_LENGTH * (4.0 / 3.0 - self.MASS_POLE * cos * cos / total_mass))
            xacc = temp - pml * thacc * cos / total_mass
            x += self.SUBSTEP_DT * xdot
            xdot += self.SUBSTEP_DT * xacc
            th += self.SUBSTEP_DT * thdot
            thdot += self.SUBSTEP_DT * thacc
        self._x, self._xdot, self._theta, self._thetadot = x, xdot, th, thdot
        angle = abs((th + math.pi) % (2.0 * math.pi) - math.pi)
        upright = angle <= self.ANGLE_LIMIT and abs(x) <= self.X_LIMIT
        return self._observation(), (1.0 if upright else 0.0), not upright


class MountainCar(_EnvBase):
    """Classic underpowered car in a valley; -1 per step until the goal.

    Observation is [position, velocity, step/max].  Terminates at position
    >= 0.5 or at the 1000-step cap; the return of a policy that never reaches
    the goal is exactly -1000.
    """

    spec = ENV_SPECS["mountain_car"]

    MIN_POS, MAX_POS = -1.2, 0.6
    MAX_SPEED = 0.07
    GOAL_POS = 0.5
    FORCE = 0.001
    GRAVITY_SCALE = 0.0025

    def _reset_state(self) -> np.ndarray:
        self._pos = float(self._rng.uniform(-0.6, -0.4))
        self._vel = 0.0
        return self._observation()

    def _observation(self) -> np.ndarray:
        return np.array([
            self._pos,
            self._vel,
            self._step_index / self.spec.max_episode_steps,
        ], dtype=np.float32)

    def _transition(self, action: int):
        self._vel += (action - 1) * self.FORCE - self.GRAVITY_SCALE * math.cos(3.0 * self._pos)
        self._vel = float(np.clip(self._vel, -self.MAX_SPEED, self.MAX_SPEED))
        self._pos += self._vel
        if self._pos <= self.MIN_POS:
            self._pos = self.MIN_POS
            self._vel = max(self._vel, 0.0)
        self._pos = float(min(self._pos, self.MAX_POS))
        return self._observation(), -1.0, self._pos >= self.GOAL_POS


_ENV_CLASSES = {"catch": Catch, "cartpole": Cartpole, "mountain_car": MountainCar}


def make_env(env_id: str) -> _EnvBase:
    try:
        return _ENV_CLASSES[env_id]()
    except KeyError:
        raise ValueError(f"unknown env_id {env_id!r}; expected one of {ENV_IDS}") from None


class ActionNoiseWrapper:
    """Replaces the agent's action with a uniform random one w.p. epsilon.

    ``step`` returns (result, executed_action); callers log the executed
    action so the recorded transitions are consistent with the dynamics.
    """

    def __init__(self, env: _EnvBase, config: NoiseConfig):
        self.env = env
        self.config = config
        self.spec = env.spec
        self._rng = np.random.default_rng(config.seed)

    def reset(self, seed: int) -> StepResult:
        return self.env.reset(seed)

    def step(self, action: int) -> tuple[StepResult, int]:
        executed = int(action)
        if self.config.epsilon > 0 and self._rng.random() < self.config.epsilon:
            executed = int(self._rng.integers(0, self.spec.action_count))
        return self.env.step(executed), executed


def noisy_step(env: _EnvBase, action: int, rng: np.random.Generator,
               epsilon: float) -> tuple[StepResult, int]:
    """Single noisy step against a caller-held RNG stream."""
    executed = int(action)
    if epsilon > 0 and rng.random() < epsilon:
        executed = int(rng.integers(0, env.spec.action_count))
    return env.step(executed), executed
