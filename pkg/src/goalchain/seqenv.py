"""Sequential goal-reaching MDP over the car environment.

Observations carry the car state, the 1-based index of the current goal and
the goal itself. Reaching the current goal pays reward 1 and advances the
index automatically; only the final goal (or a collision) terminates the
episode for bootstrapping purposes. Exhausting the per-index step budget
raises a timeout flag that ends the rollout without marking the transition
terminal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .demo import GoalSequence
from .dubins import CarState, DubinsParams, Goal, MazeLayout, env_step, is_success


class IndexOutOfRange(IndexError):
    pass


class ExtendedState(NamedTuple):
    state: CarState
    index: int  # 1-based; n_goals + 1 appears only as a terminal sentinel
    goal: Goal


@dataclass(frozen=True)
class Transition:
    obs: ExtendedState
    action: float
    next_obs: ExtendedState
    reward: float
    done: bool      # terminal for bootstrapping: final success or collision
    success: bool
    timeout: bool   # per-index budget exhausted; ends the rollout only


def _check_index(index: int, gseq: GoalSequence) -> None:
    if not 1 <= index <= gseq.n_goals:
        raise IndexOutOfRange(f"index {index} not in [1, {gseq.n_goals}]")


def compute_reward(next_state: CarState, index: int, gseq: GoalSequence) -> float:
    """1 iff next_state lies in the success set of the indexed goal."""
    _check_index(index, gseq)
    return 1.0 if is_success(next_state, gseq.goals[index - 1], gseq.eps_success) else 0.0


def next_index(next_state: CarState, index: int, gseq: GoalSequence) -> int:
    """Deterministic index shift: advance exactly on a rewarded transition."""
    return index + 1 if compute_reward(next_state, index, gseq) > 0.0 else index


def next_goal_and_index(next_state: CarState, goal: Goal, index: int,
                        gseq: GoalSequence) -> tuple[Goal, int]:
    """Goal/index pair for the next observation.

    The success test uses the goal actually conditioning the transition
    (which may differ from the sequence goal after relabelling), while the
    switched-to goal always comes from the sequence. Success on the final
    index returns the goal unchanged with the sentinel index.
    """
    if not is_success(next_state, goal, gseq.eps_success):
        return goal, index
    if index >= gseq.n_goals:
        return goal, index + 1
    return gseq.goals[index], index + 1


def discount_flag(next_state: CarState, index_after: int,
                  gseq: GoalSequence) -> bool:
    """True (terminal) iff the final goal was just achieved."""
    return index_after == gseq.n_goals + 1


class SequentialGoalEnv:
    """Stateful rollout wrapper owning the per-index step counter.

    One rollout per instance at a time; several instances may share the same
    immutable maze and goal sequence. With terminal_successes=True every
    success ends the episode (used by the ablation variants), otherwise only
    the final one does.
    """

    def __init__(self, maze: MazeLayout, params: DubinsParams,
                 gseq: GoalSequence, t_max: int = 25,
                 terminal_successes: bool = False):
        self.maze = maze
        self.params = params
        self.gseq = gseq
        self.t_max = t_max
        self.terminal_successes = terminal_successes
        self._obs: ExtendedState | None = None
        self._t_in_index = 0

    @property
    def n_goals(self) -> int:
        return self.gseq.n_goals

    @property
    def obs(self) -> ExtendedState | None:
        return self._obs

    @property
    def t_in_index(self) -> int:
        return self._t_in_index

    def reset(self, index: int) -> ExtendedState:
        _check_index(index, self.gseq)
        self._obs = ExtendedState(
            self.gseq.reset_states[index - 1], index, self.gseq.goals[index - 1])
        self._t_in_index = 0
        return self._obs

    def step(self, action: float) -> Transition:
        if self._obs is None:
            raise RuntimeError("reset() must be called before step()")
        obs = self._obs
        next_state, env_done = env_step(obs.state, action, self.maze, self.params)
        self._t_in_index += 1

        goal2, index2 = next_goal_and_index(next_state, obs.goal, obs.index, self.gseq)
        success = index2 == obs.index + 1
        reward = 1.0 if success else 0.0
        last_index = success and obs.index >= self.gseq.n_goals
        timeout = (not success) and self._t_in_index >= self.t_max
        done = env_done or last_index or (self.terminal_successes and success)
        if success:
            self._t_in_index = 0

        next_obs = ExtendedState(next_state, index2, goal2)
        transition = Transition(obs, float(action), next_obs, reward,
                                done, success, timeout)
        self._obs = next_obs
        return transition
