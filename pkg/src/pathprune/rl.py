"""Tabular Q-learning navigation on a fixed grid scene, greedy-policy
evaluation, and the train-on-A / test-on-B environment-shift experiment."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import FREE, NEIGHBOR_ORDER, GridScene

N_ACTIONS = 4  # Up, Right, Down, Left, in canonical order


@dataclass(frozen=True)
class RewardConfig:
    r_goal: float = 1.0
    r_step: float = -0.01
    r_collision: float = -0.1
    # Optional per-cell penalty (<= 0) added on entering a cell; hook for
    # social-norm shaping such as penalizing one lane of a corridor.
    bias_map: np.ndarray | None = None

    def __post_init__(self):
        if self.r_goal <= 0:
            raise ValueError("r_goal must be > 0")
        if self.r_step > 0 or self.r_collision > 0:
            raise ValueError("r_step and r_collision must be <= 0")
        if self.bias_map is not None and np.any(np.asarray(self.bias_map) > 0):
            raise ValueError("bias_map entries must be <= 0")


@dataclass
class NavMDP:
    """Deterministic gridworld: blocked moves leave the state unchanged,
    the goal is absorbing, episodes are capped at max_steps actions."""

    scene: GridScene
    rewards: RewardConfig = field(default_factory=RewardConfig)
    max_steps: int = 0  # 0 means the default cap 4 * width * height

    def __post_init__(self):
        if self.max_steps <= 0:
            self.max_steps = 4 * self.scene.width * self.scene.height

    def step(self, state: tuple[int, int], action: int):
        dr, dc = NEIGHBOR_ORDER[action]
        nr, nc = state[0] + dr, state[1] + dc
        h, w = self.scene.cells.shape
        if 0 <= nr < h and 0 <= nc < w and self.scene.cells[nr, nc] == FREE:
            nxt = (nr, nc)
            reward = self.rewards.r_step
        else:
            nxt = state
            reward = self.rewards.r_step + self.rewards.r_collision
        done = nxt == self.scene.goal
        if done:
            reward += self.rewards.r_goal
        if self.rewards.bias_map is not None:
            reward += float(self.rewards.bias_map[nxt])
        return nxt, reward, done

    def free_starts(self) -> list[tuple[int, int]]:
        cells = np.argwhere(self.scene.cells == FREE)
        return [(int(r), int(c)) for r, c in cells if (r, c) != self.scene.goal]


@dataclass(frozen=True)
class QLearnConfig:
    alpha: float = 0.2
    gamma: float = 0.95
    episodes: int = 4000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.8  # fraction of episodes over which epsilon anneals

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must be in (0, 1]")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("gamma must be in [0, 1)")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")

    def epsilon_at(self, episode: int) -> float:
        ramp = max(1.0, self.eps_fraction * self.episodes)
        frac = min(1.0, episode / ramp)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass
class QPolicy:
    q: np.ndarray  # (H, W, 4) action values
    hyperparams: dict
    train_seed: int

    def greedy(self, state: tuple[int, int]) -> int:
        # argmax returns the first maximum, i.e. canonical action order.
        return int(np.argmax(self.q[state[0], state[1]]))


@dataclass
class EvalResult:
    win_rate: float  # percent
    mean_steps: float
    run_time: float


@dataclass
class ShiftRow:
    env_id: str
    win_rate: float
    run_time: float
    episodes: int


@dataclass
class ShiftReport:
    rows: list[ShiftRow]
    train_time: float
    train_episodes: int
    seed: int


def q_learning(
    mdp: NavMDP, hp: QLearnConfig = QLearnConfig(), seed: int = 0
) -> tuple[QPolicy, list[bool]]:
    """One-step Q-learning with epsilon-greedy exploration and randomized
    start cells; deterministic per seed. Returns the policy and per-episode
    win flags."""
    rng = np.random.default_rng(seed)
    h, w = mdp.scene.cells.shape
    q = np.zeros((h, w, N_ACTIONS), dtype=np.float64)
    starts = mdp.free_starts()
    wins: list[bool] = []
    for episode in range(hp.episodes):
        eps = hp.epsilon_at(episode)
        state = starts[int(rng.integers(len(starts)))]
        won = False
        for _ in range(mdp.max_steps):
            if rng.random() < eps:
                action = int(rng.integers(N_ACTIONS))
            else:
                action = int(np.argmax(q[state[0], state[1]]))
            nxt, reward, done = mdp.step(state, action)
            target = reward if done else reward + hp.gamma * float(np.max(q[nxt[0], nxt[1]]))
            q[state[0], state[1], action] += hp.alpha * (target - q[state[0], state[1], action])
            state = nxt
            if done:
                won = True
                break
        wins.append(won)
    hyper = {
        "alpha": hp.alpha,
        "gamma": hp.gamma,
        "episodes": hp.episodes,
        "eps_start": hp.eps_start,
        "eps_end": hp.eps_end,
        "eps_fraction": hp.eps_fraction,
    }
    return QPolicy(q, hyper, seed), wins


def evaluate(
    policy: QPolicy,
    mdp: NavMDP,
    episodes: int,
    randomize_start: bool = False,
    seed: int = 0,
) -> EvalResult:
    """Greedy rollouts without exploration. A win is reaching the goal within
    max_steps; failed episodes count max_steps toward mean_steps."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = np.random.default_rng(seed)
    starts = mdp.free_starts()
    t0 = time.perf_counter()
    wins = 0
    total_steps = 0
    for _ in range(episodes):
        if randomize_start:
            state = starts[int(rng.integers(len(starts)))]
        else:
            state = mdp.scene.start
        steps = mdp.max_steps
        for step in range(mdp.max_steps):
            state, _, done = mdp.step(state, policy.greedy(state))
            if done:
                wins += 1
                steps = step + 1
                break
        total_steps += steps
    run_time = time.perf_counter() - t0
    return EvalResult(100.0 * wins / episodes, total_steps / episodes, run_time)


def shift_experiment(
    env_a: NavMDP,
    env_b: NavMDP,
    hp: QLearnConfig = QLearnConfig(),
    seed: int = 0,
    eval_episodes: int = 50,
) -> ShiftReport:
    """Train on env A only, then evaluate the frozen greedy policy on both
    environments over randomized-start episodes."""
    t0 = time.perf_counter()
    policy, _ = q_learning(env_a, hp, seed)
    train_time = time.perf_counter() - t0
    # Both environments draw the same start stream, so the rows pair up and
    # identical environments give identical win rates.
    res_a = evaluate(policy, env_a, eval_episodes, randomize_start=True, seed=seed + 1)
    res_b = evaluate(policy, env_b, eval_episodes, randomize_start=True, seed=seed + 1)
    rows = [
        ShiftRow("A", res_a.win_rate, res_a.run_time, eval_episodes),
        ShiftRow("B", res_b.win_rate, res_b.run_time, eval_episodes),
    ]
    return ShiftReport(rows, train_time, hp.episodes, seed)


SHIFT_CSV_COLUMNS = ["env_id", "win_rate_pct", "run_time_s", "episodes"]


def write_shift_csv(report: ShiftReport, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SHIFT_CSV_COLUMNS)
        for row in report.rows:
            writer.writerow([row.env_id, row.win_rate, row.run_time, row.episodes])
