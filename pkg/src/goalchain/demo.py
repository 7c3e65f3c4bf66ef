"""Demonstration handling: planning, file I/O and goal-sequence extraction.

A demonstration is a state-only trajectory. It is sliced, in the projected
goal space, into sub-trajectories of equal arc length; the endpoint of each
slice becomes a goal and the state opening each slice becomes the reset
state for training that goal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dubins import (
    CarState,
    DubinsParams,
    Goal,
    MazeLayout,
    env_step,
    is_success,
    project_goal,
)


class PlanningFailed(RuntimeError):
    """Node budget exhausted without reaching the target region."""


class ParseError(ValueError):
    """Malformed demonstration file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DemoTooShort(ValueError):
    """Demonstration arc length is below one goal spacing."""


@dataclass(frozen=True)
class Demonstration:
    states: tuple[CarState, ...]

    def __post_init__(self):
        states = tuple(CarState(*s) for s in self.states)
        object.__setattr__(self, "states", states)
        if len(states) < 2:
            raise ValueError("a demonstration needs at least two states")

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class GoalSequence:
    """Ordered goals plus the demonstrated state opening each sub-trajectory."""

    goals: tuple[Goal, ...]
    reset_states: tuple[CarState, ...]
    eps_success: float
    eps_dist: float

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(Goal(*g) for g in self.goals))
        object.__setattr__(
            self, "reset_states", tuple(CarState(*s) for s in self.reset_states))
        if len(self.goals) < 1:
            raise ValueError("need at least one goal")
        if len(self.goals) != len(self.reset_states):
            raise ValueError("goals and reset states must pair up")
        if self.eps_success <= 0.0:
            raise ValueError("success radius must be positive")

    @property
    def n_goals(self) -> int:
        return len(self.goals)


def rrt_plan(maze: MazeLayout, start: CarState, target: Goal,
             target_radius: float, rng_seed: int,
             params: DubinsParams | None = None, max_nodes: int = 20000,
             k_extend: int = 5, goal_bias: float = 0.1) -> Demonstration:
    """Plan a collision-free trajectory with a kinodynamic random tree.

    Tree nodes are car states; the nearest node (by planar distance to a
    sampled point) is extended by holding one random steering command for
    k_extend steps. The returned demonstration contains every intermediate
    state of the walk from start to the target region.
    """
    params = params or DubinsParams()
    rng = np.random.default_rng(rng_seed)
    if not maze.contains(start.x, start.y):
        raise ValueError("start lies outside the maze bounds")

    if is_success(start, target, target_radius):
        # Degenerate case: already there; still emit a two-state trajectory.
        nxt, _ = env_step(start, 0.0, maze, params)
        return Demonstration((start, nxt))

    nodes = [start]
    parents = [-1]
    # States traversed from the parent node up to and including each node.
    edge_states: list[tuple[CarState, ...]] = [(start,)]
    positions = np.empty((max_nodes + 1, 2))
    positions[0] = (start.x, start.y)
    xmin, ymin, xmax, ymax = maze.bounds

    def backtrack(idx: int) -> Demonstration:
        chunks = []
        while idx != -1:
            chunks.append(edge_states[idx])
            idx = parents[idx]
        states: list[CarState] = []
        for chunk in reversed(chunks):
            states.extend(chunk)
        return Demonstration(tuple(states))

    for _ in range(max_nodes):
        if rng.random() < goal_bias:
            sample = (target.gx, target.gy)
        else:
            sample = (rng.uniform(xmin, xmax), rng.uniform(ymin, ymax))
        dists = np.hypot(positions[:len(nodes), 0] - sample[0],
                         positions[:len(nodes), 1] - sample[1])
        near = int(np.argmin(dists))

        steer = rng.uniform(-params.u_max, params.u_max)
        cur = nodes[near]
        path = []
        blocked = False
        for _ in range(k_extend):
            cur, env_done = env_step(cur, steer, maze, params)
            if env_done:
                blocked = True
                break
            path.append(cur)
            if is_success(cur, target, target_radius):
                break
        if blocked or not path:
            continue
        nodes.append(path[-1])
        parents.append(near)
        edge_states.append(tuple(path))
        positions[len(nodes) - 1] = (path[-1].x, path[-1].y)
        if is_success(path[-1], target, target_radius):
            return backtrack(len(nodes) - 1)

    raise PlanningFailed(
        f"no path to {tuple(target)} within {max_nodes} expansions")


def save_demonstration(demo: Demonstration, path) -> None:
    with open(path, "w") as fh:
        for s in demo.states:
            fh.write(f"{s.x!r},{s.y!r},{s.theta!r}\n")


def load_demonstration(path) -> Demonstration:
    """Read one x,y,theta state per line; malformed lines are rejected."""
    states = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                raise ParseError("blank line", lineno)
            parts = line.split(",")
            if len(parts) != 3:
                raise ParseError(f"expected 3 fields, got {len(parts)}", lineno)
            try:
                x, y, theta = (float(p) for p in parts)
            except ValueError:
                raise ParseError(f"non-numeric field in {line!r}", lineno) from None
            states.append(CarState(x, y, theta))
    if len(states) < 2:
        raise ParseError(f"need at least 2 states, got {len(states)}")
    return Demonstration(tuple(states))


# Cut positions drift by accumulated rounding; treat arcs this close as equal.
_ARC_TOL = 1e-9


def _interpolate(demo: Demonstration, cum: np.ndarray, arc: float) -> Goal:
    """Point of the projected demonstration polyline at a given arc length."""
    j = int(np.searchsorted(cum, arc, side="left"))
    if j == 0:
        return project_goal(demo.states[0])
    if j >= len(cum):
        return project_goal(demo.states[-1])
    seg = cum[j] - cum[j - 1]
    t = 0.0 if seg <= 0.0 else (arc - cum[j - 1]) / seg
    a, b = demo.states[j - 1], demo.states[j]
    return Goal(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))


def extract_goals(demo: Demonstration, eps_dist: float,
                  eps_success: float) -> GoalSequence:
    """Slice a demonstration into equal-arc goals plus per-goal reset states.

    Arc length is measured on the projected (planar) trajectory. Goal k sits
    at arc (k+1)*eps_dist; the final demonstrated point always closes the
    last, possibly shorter, segment. Reset state k is the demonstrated state
    at or just before arc k*eps_dist.
    """
    if eps_dist <= 0.0:
        raise ValueError("goal spacing must be positive")
    xy = np.array([(s.x, s.y) for s in demo.states])
    seg_len = np.hypot(*(xy[1:] - xy[:-1]).T)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(cum[-1])
    if total < eps_dist - _ARC_TOL:
        raise DemoTooShort(
            f"projected arc length {total:.6g} is below spacing {eps_dist:.6g}")

    cuts = []
    k = 1
    while k * eps_dist <= total + _ARC_TOL:
        cuts.append(min(k * eps_dist, total))
        k += 1
    if total - cuts[-1] > _ARC_TOL:
        cuts.append(total)  # remainder segment keeps the trajectory's end

    goals = [_interpolate(demo, cum, c) for c in cuts]
    reset_states = []
    for k in range(len(cuts)):
        arc = k * eps_dist
        j = int(np.searchsorted(cum, arc + _ARC_TOL, side="right")) - 1
        j = max(0, min(j, len(demo.states) - 1))
        reset_states.append(demo.states[j])

    return GoalSequence(tuple(goals), tuple(reset_states),
                        eps_success=eps_success, eps_dist=eps_dist)


def save_goal_sequence(gseq: GoalSequence, path) -> None:
    payload = {
        "eps_success": gseq.eps_success,
        "eps_dist": gseq.eps_dist,
        "goals": [list(g) for g in gseq.goals],
        "reset_states": [list(s) for s in gseq.reset_states],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_goal_sequence(path) -> GoalSequence:
    with open(path) as fh:
        payload = json.load(fh)
    return GoalSequence(
        tuple(Goal(*g) for g in payload["goals"]),
        tuple(CarState(*s) for s in payload["reset_states"]),
        eps_success=float(payload["eps_success"]),
        eps_dist=float(payload["eps_dist"]),
    )


def corridor_goal_sequence(eps_success: float = 0.1) -> GoalSequence:
    """Hand-built two-goal chain for the corridor strip.

    The first goal hugs the top wall so that the arrival heading decides
    whether the second goal stays reachable: the turning radius (0.5 at the
    default speed and steering bound) is too wide to recover from heading
    into the nearby wall.
    """
    return GoalSequence(
        goals=(Goal(2.5, 1.7), Goal(4.5, 1.0)),
        reset_states=(CarState(0.5, 1.0, 0.0), CarState(2.5, 1.7, -0.4)),
        eps_success=eps_success,
        eps_dist=2.1,
    )
