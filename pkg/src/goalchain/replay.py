"""Episode-aware replay buffer with goal/index relabelling.

Sampled batches mix original transitions with relabelled ones whose intended
goal is replaced by a goal actually achieved later in the same episode
("future" strategy). Four behaviours are supported:

  dcil2       - relabelled successes advance the index and point the next
                observation at the following sequence goal, so their value
                bootstraps into the next link of the chain.
  dcil1_bonus - plain relabelling with terminal successes; original (not
                relabelled) successes additionally receive a critic-value
                bonus, added by the learner at update time.
  no_index    - plain relabelling, terminal successes, index fields unused.
  no_goal     - no relabelling at all.

Original successful transitions always pass through unchanged. Episode
boundaries are never straddled: a relabel goal comes from the same episode,
at the same or a later step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .demo import GoalSequence
from .dubins import CarState, Goal, is_success, project_goal
from .seqenv import ExtendedState, Transition

RELABEL_MODES = ("dcil2", "dcil1_bonus", "no_index", "no_goal")


class EmptyEpisode(ValueError):
    pass


class BufferEmpty(RuntimeError):
    pass


class NotSameEpisode(ValueError):
    """Relabel goal does not come from the transition's episode future."""


def check_mode(mode: str) -> str:
    if mode not in RELABEL_MODES:
        raise ValueError(f"unknown relabel mode {mode!r}; pick one of {RELABEL_MODES}")
    return mode


@dataclass
class EpisodeRecord:
    transitions: list[Transition]
    achieved_goals: list[Goal]

    @classmethod
    def from_transitions(cls, transitions) -> "EpisodeRecord":
        transitions = list(transitions)
        achieved = [project_goal(t.next_obs.state) for t in transitions]
        return cls(transitions, achieved)

    def __post_init__(self):
        if len(self.transitions) != len(self.achieved_goals):
            raise ValueError("one achieved goal per transition required")

    def __len__(self) -> int:
        return len(self.transitions)


def relabel_transition(t: Transition, achieved: Goal, gseq: GoalSequence,
                       mode: str, episode: EpisodeRecord | None = None) -> Transition:
    """Relabel one stored transition with an achieved goal.

    When the source episode is supplied, membership is verified: the
    transition must belong to it and `achieved` must be one of the episode's
    achieved goals at the transition's step or later.
    """
    check_mode(mode)
    if episode is not None:
        try:
            pos = episode.transitions.index(t)
        except ValueError:
            raise NotSameEpisode("transition not found in the episode") from None
        future = [tuple(g) for g in episode.achieved_goals[pos:]]
        if tuple(achieved) not in future:
            raise NotSameEpisode("goal not achieved at or after the transition")

    if mode == "no_goal" or t.success:
        return t  # original successes pass through untouched

    gbar = Goal(*achieved)
    succ = is_success(t.next_obs.state, gbar, gseq.eps_success)
    obs = ExtendedState(t.obs.state, t.obs.index, gbar)

    if mode == "dcil2":
        if succ:
            i = t.obs.index
            if i >= gseq.n_goals:
                next_obs = ExtendedState(t.next_obs.state, i + 1, gbar)
                done = True
            else:
                next_obs = ExtendedState(t.next_obs.state, i + 1, gseq.goals[i])
                done = False
            return Transition(obs, t.action, next_obs, 1.0, done, True, t.timeout)
        next_obs = ExtendedState(t.next_obs.state, t.obs.index, gbar)
        return Transition(obs, t.action, next_obs, 0.0, t.done, False, t.timeout)

    # Vanilla relabelling (no_index / dcil1_bonus): goals swap, indices keep
    # their stored values but are ignored downstream, successes terminate.
    next_obs = ExtendedState(t.next_obs.state, t.next_obs.index, gbar)
    return Transition(obs, t.action, next_obs, 1.0 if succ else 0.0,
                      succ or t.done, succ, t.timeout)


_FIELDS = (
    ("state", 3, np.float64), ("action", 1, np.float64),
    ("next_state", 3, np.float64), ("index", 1, np.int64),
    ("next_index", 1, np.int64), ("goal", 2, np.float64),
    ("next_goal", 2, np.float64), ("reward", 1, np.float64),
    ("done", 1, np.bool_), ("success", 1, np.bool_),
    ("timeout", 1, np.bool_), ("achieved", 2, np.float64),
)


class ReplayBuffer:
    """Bounded FIFO of whole episodes, stored as flat per-field arrays.

    Eviction removes oldest episodes; the newest episode is never evicted,
    so the capacity may be exceeded by at most one episode.
    """

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be at least one transition")
        self.capacity = capacity
        self._rng = rng
        self._alloc = 0
        self._lo = 0
        self._hi = 0
        self._episodes: list[tuple[int, int]] = []
        self._cols: dict[str, np.ndarray] = {}
        self._ep_end = np.empty(0, dtype=np.int64)

    def __len__(self) -> int:
        return self._hi - self._lo

    @property
    def n_episodes(self) -> int:
        return len(self._episodes)

    def _grow(self, need: int) -> None:
        live = self._hi - self._lo
        if self._alloc - self._hi >= need:
            return
        # Size follows the live data so steady-state eviction never inflates
        # the allocation; compaction cost is amortised over the appends.
        new_alloc = max(2 * (live + need), 1024)
        for name, width, dtype in _FIELDS:
            fresh = np.empty((new_alloc, width) if width > 1 else new_alloc, dtype)
            if live:
                fresh[:live] = self._cols[name][self._lo:self._hi]
            self._cols[name] = fresh
        fresh_end = np.empty(new_alloc, dtype=np.int64)
        if live:
            fresh_end[:live] = self._ep_end[self._lo:self._hi] - self._lo
        self._ep_end = fresh_end
        self._episodes = [(s - self._lo, e - self._lo) for s, e in self._episodes]
        self._alloc = new_alloc
        self._hi = live
        self._lo = 0

    def push(self, episode: EpisodeRecord) -> None:
        n = len(episode)
        if n == 0:
            raise EmptyEpisode("refusing to store an empty episode")
        self._grow(n)
        start, end = self._hi, self._hi + n
        cols = self._cols
        for row, (t, ach) in enumerate(zip(episode.transitions,
                                           episode.achieved_goals), start=start):
            cols["state"][row] = t.obs.state
            cols["action"][row] = t.action
            cols["next_state"][row] = t.next_obs.state
            cols["index"][row] = t.obs.index
            cols["next_index"][row] = t.next_obs.index
            cols["goal"][row] = t.obs.goal
            cols["next_goal"][row] = t.next_obs.goal
            cols["reward"][row] = t.reward
            cols["done"][row] = t.done
            cols["success"][row] = t.success
            cols["timeout"][row] = t.timeout
            cols["achieved"][row] = ach
        self._ep_end[start:end] = end
        self._episodes.append((start, end))
        self._hi = end
        while len(self) > self.capacity and len(self._episodes) > 1:
            _, evict_end = self._episodes.pop(0)
            self._lo = evict_end

    def sample_arrays(self, n: int, relabel_fraction: float, gseq: GoalSequence,
                      mode: str) -> dict[str, np.ndarray]:
        """Uniform transition sample as a dict of arrays, relabelled in place."""
        check_mode(mode)
        if len(self) == 0:
            raise BufferEmpty("no stored transitions to sample")
        if not 0.0 <= relabel_fraction <= 1.0:
            raise ValueError("relabel_fraction must lie in [0, 1]")
        idx = self._rng.integers(self._lo, self._hi, size=n)
        batch = {name: self._cols[name][idx].copy() for name, _, _ in _FIELDS}
        batch["relabeled"] = np.zeros(n, dtype=bool)
        k = int(n * relabel_fraction)
        if k > 0 and mode != "no_goal":
            self._relabel_rows(batch, idx[:k], gseq, mode)
        return batch

    def _relabel_rows(self, batch: dict[str, np.ndarray], rows: np.ndarray,
                      gseq: GoalSequence, mode: str) -> None:
        k = len(rows)
        future = self._rng.integers(rows, self._ep_end[rows])
        gbar = self._cols["achieved"][future]
        apply = ~batch["success"][:k]  # original successes pass through
        if not np.any(apply):
            return
        diff = batch["achieved"][:k] - gbar
        succ = np.hypot(diff[:, 0], diff[:, 1]) < gseq.eps_success
        sel = lambda m: apply & m

        goal = batch["goal"][:k]
        next_goal = batch["next_goal"][:k]
        index = batch["index"][:k]
        nxt_index = batch["next_index"][:k]
        reward = batch["reward"][:k]
        done = batch["done"][:k]
        success = batch["success"][:k]

        goal[apply] = gbar[apply]
        batch["relabeled"][:k][apply] = True
        if mode == "dcil2":
            hit = sel(succ)
            miss = sel(~succ)
            reward[hit] = 1.0
            success[hit] = True
            nxt_index[hit] = index[hit] + 1
            inner = hit & (index < gseq.n_goals)
            last = hit & (index >= gseq.n_goals)
            goals_arr = np.asarray(gseq.goals, dtype=np.float64)
            next_goal[inner] = goals_arr[index[inner]]  # 0-based row of goal i+1
            next_goal[last] = gbar[last]
            done[inner] = False
            done[last] = True
            reward[miss] = 0.0
            success[miss] = False
            nxt_index[miss] = index[miss]
            next_goal[miss] = gbar[miss]
        else:  # no_index / dcil1_bonus: vanilla relabelling, terminal successes
            next_goal[apply] = gbar[apply]
            reward[apply] = succ[apply].astype(np.float64)
            success[apply] = succ[apply]
            done[apply] |= succ[apply]

    def sample_batch(self, n: int, relabel_fraction: float, gseq: GoalSequence,
                     mode: str) -> list[Transition]:
        """Same sampling as sample_arrays, materialised as Transition objects."""
        batch = self.sample_arrays(n, relabel_fraction, gseq, mode)
        out = []
        for row in range(n):
            obs = ExtendedState(CarState(*batch["state"][row]),
                                int(batch["index"][row]),
                                Goal(*batch["goal"][row]))
            nxt = ExtendedState(CarState(*batch["next_state"][row]),
                                int(batch["next_index"][row]),
                                Goal(*batch["next_goal"][row]))
            out.append(Transition(obs, float(batch["action"][row]), nxt,
                                  float(batch["reward"][row]),
                                  bool(batch["done"][row]),
                                  bool(batch["success"][row]),
                                  bool(batch["timeout"][row])))
        return out

    def to_csv(self, path) -> None:
        header = ["x", "y", "theta", "action", "next_x", "next_y", "next_theta",
                  "index", "next_index", "gx", "gy", "next_gx", "next_gy",
                  "reward", "done", "success", "timeout", "achieved_x", "achieved_y"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in range(self._lo, self._hi):
                writer.writerow([
                    *self._cols["state"][row], self._cols["action"][row],
                    *self._cols["next_state"][row], self._cols["index"][row],
                    self._cols["next_index"][row], *self._cols["goal"][row],
                    *self._cols["next_goal"][row], self._cols["reward"][row],
                    int(self._cols["done"][row]), int(self._cols["success"][row]),
                    int(self._cols["timeout"][row]), *self._cols["achieved"][row],
                ])
