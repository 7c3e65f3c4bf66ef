"""Constant-speed car with bounded steering rate in a walled planar maze.

States are (x, y, theta) with theta kept in (-pi, pi]; goals are (x, y)
positions, i.e. states projected onto the plane. Everything here is a pure
function over an immutable maze, so concurrent use is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple


class CarState(NamedTuple):
    x: float
    y: float
    theta: float


class Goal(NamedTuple):
    gx: float
    gy: float


# Heading-rate command in rad per step; clamped to [-u_max, u_max] on use.
SteerAction = float

Point = tuple[float, float]
Segment = tuple[float, float, float, float]


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class DubinsParams:
    """Kinematic constants: forward speed, step duration, steering bound."""

    v: float = 0.5
    dt: float = 1.0
    n_substeps: int = 5
    u_max: float = 1.0

    def __post_init__(self):
        if self.v <= 0.0 or self.dt <= 0.0:
            raise ValueError("speed and step duration must be positive")
        if self.n_substeps < 1:
            raise ValueError("need at least one collision substep")
        if self.u_max <= 0.0:
            raise ValueError("steering bound must be positive")


@dataclass(frozen=True)
class MazeLayout:
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    walls: tuple[Segment, ...]
    start: CarState
    target: Goal
    target_radius: float = 0.5

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("degenerate maze bounds")
        walls = tuple(tuple(float(c) for c in w) for w in self.walls)
        object.__setattr__(self, "walls", walls)
        for w in walls:
            if not (self.contains(w[0], w[1]) and self.contains(w[2], w[3])):
                raise ValueError(f"wall {w} extends outside the maze bounds")

    def contains(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax


def clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


def step_dynamics(state: CarState, dtheta: float, v: float, dt: float,
                  u_max: float = 1.0) -> CarState:
    """One Euler step at constant forward speed; no collision handling."""
    u = clamp(dtheta, -u_max, u_max)
    return CarState(
        state.x + v * math.cos(state.theta) * dt,
        state.y + v * math.sin(state.theta) * dt,
        wrap_angle(state.theta + u * dt),
    )


def _orient(ax, ay, bx, by, cx, cy):
    """Sign of the cross product (b - a) x (c - a)."""
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _within(ax, ay, bx, by, px, py):
    return (min(ax, bx) <= px <= max(ax, bx)
            and min(ay, by) <= py <= max(ay, by))


def segments_intersect(p0: Point, p1: Point, q0: Point, q1: Point) -> bool:
    """True if the closed segments share any point; touching counts."""
    d1 = _orient(*q0, *q1, *p0)
    d2 = _orient(*q0, *q1, *p1)
    d3 = _orient(*p0, *p1, *q0)
    d4 = _orient(*p0, *p1, *q1)
    if ((d1 > 0) != (d2 > 0) and (d3 > 0) != (d4 > 0)
            and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0):
        return True
    if d1 == 0 and _within(*q0, *q1, *p0):
        return True
    if d2 == 0 and _within(*q0, *q1, *p1):
        return True
    if d3 == 0 and _within(*p0, *p1, *q0):
        return True
    if d4 == 0 and _within(*p0, *p1, *q1):
        return True
    return False


def check_collision(p0: Point, p1: Point, maze: MazeLayout) -> bool:
    """True if moving from p0 to p1 crosses a wall or leaves the bounds."""
    if not maze.contains(*p0) or not maze.contains(*p1):
        return True
    for x0, y0, x1, y1 in maze.walls:
        if segments_intersect(p0, p1, (x0, y0), (x1, y1)):
            return True
    return False


def env_step(state: CarState, action: float, maze: MazeLayout,
             params: DubinsParams) -> tuple[CarState, bool]:
    """Advance one control step, checking collisions on each sub-segment.

    Returns (next_state, env_done). On collision the last collision-free
    sub-state is returned and env_done is True.
    """
    sub_dt = params.dt / params.n_substeps
    cur = state
    for _ in range(params.n_substeps):
        nxt = step_dynamics(cur, action, params.v, sub_dt, params.u_max)
        if check_collision((cur.x, cur.y), (nxt.x, nxt.y), maze):
            return cur, True
        cur = nxt
    return cur, False


def project_goal(state: CarState) -> Goal:
    return Goal(state.x, state.y)


def is_success(state: CarState, goal: Goal, eps: float) -> bool:
    """True iff the state's planar projection is strictly within eps of goal."""
    return math.hypot(state.x - goal.gx, state.y - goal.gy) < eps


def canonical_maze() -> MazeLayout:
    """6x6 S-maze: two staggered walls force turns near both gaps."""
    return MazeLayout(
        bounds=(0.0, 0.0, 6.0, 6.0),
        walls=((2.0, 0.0, 2.0, 4.0), (4.0, 2.0, 4.0, 6.0)),
        start=CarState(0.5, 0.5, 0.0),
        target=Goal(5.5, 5.5),
        target_radius=0.5,
    )


def corridor_maze() -> MazeLayout:
    """Wall-free 6x2 strip used for controlled two-goal experiments."""
    return MazeLayout(
        bounds=(0.0, 0.0, 6.0, 2.0),
        walls=(),
        start=CarState(0.5, 1.0, 0.0),
        target=Goal(5.5, 1.0),
        target_radius=0.5,
    )


BUILTIN_MAZES = {
    "canonical": canonical_maze,
    "corridor": corridor_maze,
}
