import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from goalchain.dubins import (
    CarState,
    DubinsParams,
    Goal,
    MazeLayout,
    canonical_maze,
    check_collision,
    corridor_maze,
    env_step,
    is_success,
    project_goal,
    step_dynamics,
    wrap_angle,
)

PARAMS = DubinsParams()


def empty_maze(size=2.0):
    return MazeLayout(bounds=(0.0, 0.0, size, size), walls=(),
                      start=CarState(0.1, 0.1, 0.0), target=Goal(size - 0.1, size - 0.1))


class TestStepDynamics:
    def test_straight_line(self):
        s = step_dynamics(CarState(0, 0, 0), 0.0, v=0.5, dt=1.0)
        assert s == CarState(0.5, 0.0, 0.0)

    def test_axis_symmetry(self):
        s = step_dynamics(CarState(0, 0, math.pi / 2), 0.0, v=0.5, dt=1.0)
        assert s.x == pytest.approx(0.0, abs=1e-15)
        assert s.y == pytest.approx(0.5)
        assert s.theta == math.pi / 2

    def test_turn_reversibility(self):
        theta0 = 0.3
        s = CarState(1.0, 1.0, theta0)
        for _ in range(100):
            s = step_dynamics(s, 0.7, v=0.5, dt=1.0)
        for _ in range(100):
            s = step_dynamics(s, -0.7, v=0.5, dt=1.0)
        assert abs(wrap_angle(s.theta - theta0)) < 1e-9

    def test_action_clamped(self):
        hard = step_dynamics(CarState(0, 0, 0), 99.0, v=0.5, dt=1.0, u_max=1.0)
        limit = step_dynamics(CarState(0, 0, 0), 1.0, v=0.5, dt=1.0, u_max=1.0)
        assert hard == limit

    @given(theta=st.floats(-10, 10), action=st.floats(-5, 5))
    @settings(max_examples=200, deadline=None)
    def test_speed_preserved_exactly(self, theta, action):
        s0 = CarState(0.0, 0.0, wrap_angle(theta))
        s1 = step_dynamics(s0, action, v=0.5, dt=1.0)
        assert math.hypot(s1.x - s0.x, s1.y - s0.y) == pytest.approx(0.5, abs=1e-12)

    @given(theta=st.floats(-50, 50), action=st.floats(-5, 5))
    @settings(max_examples=200, deadline=None)
    def test_heading_stays_wrapped(self, theta, action):
        s = step_dynamics(CarState(0, 0, wrap_angle(theta)), action, 0.5, 1.0)
        assert -math.pi < s.theta <= math.pi


class TestWrapAngle:
    @given(theta=st.floats(-100, 100))
    @settings(max_examples=300, deadline=None)
    def test_range_and_equivalence(self, theta):
        w = wrap_angle(theta)
        assert -math.pi < w <= math.pi
        assert math.cos(w) == pytest.approx(math.cos(theta), abs=1e-9)
        assert math.sin(w) == pytest.approx(math.sin(theta), abs=1e-9)

    def test_boundary_maps_to_pi(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)


class TestCheckCollision:
    def test_no_walls(self):
        assert not check_collision((0.1, 0.1), (0.2, 0.1), empty_maze())

    def test_perpendicular_crossing(self):
        maze = MazeLayout(bounds=(0, 0, 2, 2), walls=((1.0, 0.0, 1.0, 1.0),),
                          start=CarState(0.5, 0.5, 0.0), target=Goal(1.5, 0.5))
        assert check_collision((0.5, 0.5), (1.5, 0.5), maze)

    def test_exits_bounds(self):
        assert check_collision((0.5, 0.5), (0.5, 3.0), empty_maze())

    def test_touching_wall_endpoint_counts(self):
        maze = MazeLayout(bounds=(0, 0, 2, 2), walls=((1.0, 0.5, 1.0, 1.5),),
                          start=CarState(0.5, 0.5, 0.0), target=Goal(1.5, 0.5))
        assert check_collision((0.5, 0.5), (1.5, 0.5), maze)

    def test_parallel_clear(self):
        maze = MazeLayout(bounds=(0, 0, 2, 2), walls=((1.0, 0.0, 1.0, 1.0),),
                          start=CarState(0.5, 0.5, 0.0), target=Goal(1.5, 0.5))
        assert not check_collision((0.5, 1.5), (1.5, 1.5), maze)


class TestEnvStep:
    def test_clear_corridor_advances(self):
        maze = corridor_maze()
        s, done = env_step(CarState(0.5, 1.0, 0.0), 0.0, maze, PARAMS)
        assert not done
        assert s == CarState(1.0, 1.0, 0.0)

    def test_wall_just_ahead_stops_before_it(self):
        maze = MazeLayout(bounds=(0, 0, 2, 2), walls=((1.0, 0.0, 1.0, 2.0),),
                          start=CarState(0.5, 0.5, 0.0), target=Goal(1.5, 0.5))
        s, done = env_step(CarState(0.9, 0.5, 0.0), 0.0, maze, PARAMS)
        assert done
        assert s.x <= 1.0
        assert s.x == pytest.approx(0.9)  # one substep is 0.1; first crossing hits

    def test_random_steps_stay_in_bounds(self):
        maze = canonical_maze()
        rng = np.random.default_rng(7)
        s = maze.start
        inside = 0
        for _ in range(1000):
            prev = s
            s, done = env_step(s, rng.uniform(-1, 1), maze, PARAMS)
            assert maze.contains(s.x, s.y)
            # oracle: the accepted move must itself be collision-free
            assert not check_collision((prev.x, prev.y), (s.x, s.y), maze) or done
            inside += 1
            if done:
                s = CarState(rng.uniform(0.3, 1.7), rng.uniform(0.3, 1.7), 0.0)
        assert inside == 1000


class TestGoalProjection:
    def test_projection_drops_heading(self):
        assert project_goal(CarState(1.2, 3.4, 0.7)) == Goal(1.2, 3.4)
        assert project_goal(CarState(0.0, 0.0, math.pi)) == Goal(0.0, 0.0)

    def test_projection_moves_at_constant_speed(self):
        s = CarState(2.0, 2.0, 1.1)
        s2 = step_dynamics(s, 0.4, v=0.5, dt=1.0)
        g, g2 = project_goal(s), project_goal(s2)
        assert math.hypot(g2.gx - g.gx, g2.gy - g.gy) == pytest.approx(0.5, abs=1e-12)


class TestIsSuccess:
    def test_inside_radius(self):
        assert is_success(CarState(1.05, 1.0, 2.2), Goal(1.0, 1.0), eps=0.1)

    def test_boundary_is_strict(self):
        assert not is_success(CarState(1.1, 1.0, 0.0), Goal(1.0, 1.0), eps=0.1)

    def test_exact_hit(self):
        assert is_success(CarState(1.0, 1.0, -2.0), Goal(1.0, 1.0), eps=1e-9)

    @given(theta=st.floats(-math.pi, math.pi))
    @settings(max_examples=100, deadline=None)
    def test_heading_invariant(self, theta):
        assert is_success(CarState(1.05, 1.0, theta), Goal(1.0, 1.0), eps=0.1)


class TestMazeLayout:
    def test_wall_outside_bounds_rejected(self):
        with pytest.raises(ValueError):
            MazeLayout(bounds=(0, 0, 2, 2), walls=((1.0, 0.0, 1.0, 3.0),),
                       start=CarState(0.5, 0.5, 0.0), target=Goal(1.5, 0.5))

    def test_builtin_mazes_valid(self):
        for maze in (canonical_maze(), corridor_maze()):
            assert maze.contains(maze.start.x, maze.start.y)
            assert maze.contains(*maze.target)
