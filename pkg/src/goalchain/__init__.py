"""Goal-chaining control from a single state-only demonstration."""

__version__ = "0.1.0"

from .demo import (
    Demonstration,
    GoalSequence,
    corridor_goal_sequence,
    extract_goals,
    load_demonstration,
    rrt_plan,
    save_demonstration,
)
from .dubins import (
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
)
from .replay import RELABEL_MODES, EpisodeRecord, ReplayBuffer, relabel_transition
from .sac import Normalizer, SacAgent, encode_obs
from .seqenv import (
    ExtendedState,
    SequentialGoalEnv,
    Transition,
    compute_reward,
    discount_flag,
    next_goal_and_index,
    next_index,
)
from .training import (
    SuccessMemory,
    TrainConfig,
    evaluate,
    load_checkpoint,
    run_training,
    save_checkpoint,
    select_index,
)
