"""Training orchestration: index roulette, rollouts, per-step updates,
periodic chain evaluation, value-map export and run checkpoints.
"""

from __future__ import annotations

import json
import math
import os
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .demo import GoalSequence, ParseError
from .dubins import CarState, DubinsParams, Goal, MazeLayout
from .replay import EpisodeRecord, ReplayBuffer, check_mode
from .sac import Normalizer, SacAgent, continuous_dim, encode_batch
from .seqenv import SequentialGoalEnv

# Modes whose underlying task treats every success as terminal.
TERMINAL_SUCCESS_MODES = ("no_index", "dcil1_bonus")


class NumericalDivergence(RuntimeError):
    """A loss went non-finite; the run is aborted."""


@dataclass
class TrainConfig:
    env_name: str = "dubins"
    mode: str = "dcil2"
    seed: int = 0
    total_steps: int = 60000
    eval_period: int = 1000
    checkpoint_period: int = 20000
    batch_size: int = 256
    gamma: float = 0.9
    alpha: float = 1e-3
    critic_lr: float = 1e-3
    policy_lr: float = 1e-3
    critic_hidden: tuple[int, ...] = (400, 300)
    policy_hidden: tuple[int, ...] = (400, 300)
    eps_success: float = 0.1
    eps_dist: float = 1.0
    t_max: int = 25
    tau: float = 0.005
    relabel_fraction: float = 0.5
    buffer_capacity: int = 1_000_000
    learning_starts: int = 256
    normalizer_steps: int = 10000
    success_window: int = 20
    roulette_delta: float = 0.05
    stop_on_chain_success: bool = False
    v: float = 0.5
    dt: float = 1.0
    n_substeps: int = 5
    u_max: float = 1.0

    def validate(self) -> "TrainConfig":
        check_mode(self.mode)
        positive = ("batch_size", "gamma", "alpha", "critic_lr", "policy_lr",
                    "eps_success", "eps_dist", "t_max", "tau", "buffer_capacity",
                    "success_window", "v", "dt", "n_substeps", "u_max")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        nonneg = ("total_steps", "eval_period", "checkpoint_period",
                  "learning_starts", "normalizer_steps", "roulette_delta")
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.relabel_fraction <= 1.0:
            raise ValueError("relabel_fraction must lie in [0, 1]")
        if self.gamma > 1.0:
            raise ValueError("gamma must not exceed 1")
        if not all(h > 0 for h in (*self.critic_hidden, *self.policy_hidden)):
            raise ValueError("hidden sizes must be positive")
        return self

    def dubins_params(self) -> DubinsParams:
        return DubinsParams(v=self.v, dt=self.dt, n_substeps=self.n_substeps,
                            u_max=self.u_max)


class SuccessMemory:
    """Per-index sliding window of binary rollout outcomes."""

    def __init__(self, n_goals: int, window: int = 20):
        self.window = window
        self._outcomes = {i: deque(maxlen=window) for i in range(1, n_goals + 1)}

    def record(self, index: int, outcome: int) -> None:
        self._outcomes[index].append(1 if outcome else 0)

    def ratios(self) -> np.ndarray:
        out = np.zeros(len(self._outcomes))
        for i, window in self._outcomes.items():
            if window:
                out[i - 1] = sum(window) / len(window)
        return out

    def counts(self) -> np.ndarray:
        return np.array([len(w) for w in self._outcomes.values()])


def roulette_weights(ratios: np.ndarray, delta: float = 0.05) -> np.ndarray:
    return (1.0 - ratios) + delta


def select_index(mem: SuccessMemory, rng: np.random.Generator,
                 delta: float = 0.05) -> int:
    """Sample a start index, favouring goals with a low recent success ratio."""
    weights = roulette_weights(mem.ratios(), delta)
    probs = weights / weights.sum()
    return int(rng.choice(len(probs), p=probs)) + 1


def warmup_normalizer(maze: MazeLayout, params: DubinsParams, gseq: GoalSequence,
                      mode: str, steps: int, t_max: int,
                      rng: np.random.Generator) -> Normalizer:
    """Gather feature statistics over random-action rollouts, then freeze."""
    norm = Normalizer(continuous_dim(mode))
    if steps <= 0:
        norm.freeze()
        return norm
    env = SequentialGoalEnv(maze, params, gseq, t_max=t_max)
    rows = np.empty((steps, 3))
    goal_rows = np.empty((steps, 2))
    obs = env.reset(int(rng.integers(1, gseq.n_goals + 1)))
    for k in range(steps):
        action = rng.uniform(-params.u_max, params.u_max)
        tr = env.step(action)
        rows[k] = tr.next_obs.state
        goal_rows[k] = tr.next_obs.goal
        obs = tr.next_obs
        if tr.done or tr.timeout:
            obs = env.reset(int(rng.integers(1, gseq.n_goals + 1)))
    feats = encode_batch(rows, np.ones(steps), goal_rows, gseq.n_goals,
                         norm=None, mode=mode)
    norm.update(feats[:, :continuous_dim(mode)])
    norm.freeze()
    return norm


def evaluate(policy, gseq: GoalSequence, maze: MazeLayout, params: DubinsParams,
             t_max: int = 25) -> dict:
    """Single rollout from the first demonstrated state through the chain.

    `policy` maps an ExtendedState to an action; pass a deterministic one for
    reproducible evaluations.
    """
    env = SequentialGoalEnv(maze, params, gseq, t_max=t_max)
    obs = env.reset(1)
    steps = 0
    while True:
        tr = env.step(policy(obs))
        steps += 1
        obs = tr.next_obs
        if tr.done or tr.timeout:
            break
    goals_reached = obs.index - 1
    return {
        "chain_success": goals_reached == gseq.n_goals,
        "goals_reached": goals_reached,
        "steps": steps,
    }


@dataclass
class TrainResult:
    agent: SacAgent
    metrics: list[dict]
    summary: dict


def run_training(config: TrainConfig, gseq: GoalSequence, maze: MazeLayout,
                 checkpoint_fn=None) -> TrainResult:
    """Run the two-phase loop: pick a start index, roll out, learn per step.

    Deterministic for a fixed config seed. checkpoint_fn(step, agent), when
    given, is invoked every checkpoint_period steps.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    params = config.dubins_params()
    terminal = config.mode in TERMINAL_SUCCESS_MODES
    env = SequentialGoalEnv(maze, params, gseq, t_max=config.t_max,
                            terminal_successes=terminal)

    if config.total_steps > 0:
        norm = warmup_normalizer(maze, params, gseq, config.mode,
                                 config.normalizer_steps, config.t_max, rng)
    else:
        norm = Normalizer(continuous_dim(config.mode))
        norm.freeze()
    agent = SacAgent(
        n_goals=gseq.n_goals, mode=config.mode, rng=rng,
        critic_hidden=config.critic_hidden, policy_hidden=config.policy_hidden,
        gamma=config.gamma, alpha=config.alpha, critic_lr=config.critic_lr,
        policy_lr=config.policy_lr, u_max=config.u_max, normalizer=norm)
    buffer = ReplayBuffer(config.buffer_capacity, rng)
    mem = SuccessMemory(gseq.n_goals, config.success_window)

    metrics: list[dict] = []
    steps = 0
    episode = 0
    relabeled_total = 0
    target_lo, target_hi = math.inf, -math.inf
    critic_loss = actor_loss = math.nan
    first_chain_success = None
    stop = False

    def row(selected, ev=None):
        ratios = mem.ratios()
        entry = {"step": steps, "episode": episode, "selected_index": selected}
        for i, r in enumerate(ratios, start=1):
            entry[f"ratio_{i}"] = r
        entry["eval_goals_reached"] = "" if ev is None else ev["goals_reached"]
        entry["eval_chain_success"] = "" if ev is None else int(ev["chain_success"])
        entry["critic_loss"] = critic_loss
        entry["actor_loss"] = actor_loss
        return entry

    while steps < config.total_steps and not stop:
        selected = select_index(mem, rng, config.roulette_delta)
        obs = env.reset(selected)
        transitions = []
        while True:
            action = agent.act(obs, rng=rng)
            tr = env.step(action)
            steps += 1
            transitions.append(tr)
            if tr.success:
                mem.record(tr.obs.index, 1)
            elif tr.timeout or tr.done:
                mem.record(tr.obs.index, 0)
            obs = tr.next_obs

            if len(buffer) >= max(config.learning_starts, 1):
                batch = buffer.sample_arrays(config.batch_size,
                                             config.relabel_fraction,
                                             gseq, config.mode)
                relabeled_total += int(batch["relabeled"].sum())
                critic_loss, lo, hi = agent.critic_update(batch, rng)
                actor_loss = agent.actor_update(batch, rng)
                agent.soft_update(config.tau)
                target_lo = min(target_lo, lo)
                target_hi = max(target_hi, hi)
                if not (math.isfinite(critic_loss) and math.isfinite(actor_loss)):
                    raise NumericalDivergence(
                        f"non-finite loss at step {steps}: "
                        f"critic={critic_loss} actor={actor_loss}")

            if config.eval_period > 0 and steps % config.eval_period == 0:
                ev = evaluate(agent.policy_fn(), gseq, maze, params, config.t_max)
                metrics.append(row(selected, ev))
                if ev["chain_success"]:
                    if first_chain_success is None:
                        first_chain_success = steps
                    if config.stop_on_chain_success:
                        stop = True
            if (checkpoint_fn is not None and config.checkpoint_period > 0
                    and steps % config.checkpoint_period == 0):
                checkpoint_fn(steps, agent)
            if tr.done or tr.timeout or stop or steps >= config.total_steps:
                break
        buffer.push(EpisodeRecord.from_transitions(transitions))
        episode += 1
        metrics.append(row(selected))

    summary = {
        "steps": steps,
        "episodes": episode,
        "relabeled_samples": relabeled_total,
        "target_min": None if not math.isfinite(target_lo) else target_lo,
        "target_max": None if not math.isfinite(target_hi) else target_hi,
        "first_chain_success_step": first_chain_success,
    }
    return TrainResult(agent, metrics, summary)


def metrics_fieldnames(n_goals: int) -> list[str]:
    return (["step", "episode", "selected_index"]
            + [f"ratio_{i}" for i in range(1, n_goals + 1)]
            + ["eval_goals_reached", "eval_chain_success",
               "critic_loss", "actor_loss"])


def write_metrics_csv(path, metrics: list[dict], n_goals: int) -> None:
    fields = metrics_fieldnames(n_goals)
    with open(path, "w") as fh:
        fh.write(",".join(fields) + "\n")
        for entry in metrics:
            fh.write(",".join(str(entry.get(f, "")) for f in fields) + "\n")


# ---- value maps -----------------------------------------------------------

def critic_values(agent: SacAgent, states: np.ndarray, index: int,
                  goal: Goal) -> np.ndarray:
    """min(Q1, Q2) at the policy-mean action for a batch of car states."""
    n = len(states)
    feat = encode_batch(states, np.full(n, index), np.tile(goal, (n, 1)),
                        agent.n_goals, agent.normalizer, agent.mode)
    action = agent.mean_action(feat)
    qin = np.concatenate([feat, action], axis=1)
    return np.minimum(agent.q1.forward(qin), agent.q2.forward(qin))[:, 0]


def compute_value_grid(agent: SacAgent, maze: MazeLayout, index: int,
                       goal: Goal, theta_set, resolution: int):
    """Critic value over the maze for each heading; cell centres are used."""
    xmin, ymin, xmax, ymax = maze.bounds
    xs = xmin + (np.arange(resolution) + 0.5) * (xmax - xmin) / resolution
    ys = ymin + (np.arange(resolution) + 0.5) * (ymax - ymin) / resolution
    gx, gy = np.meshgrid(xs, ys)  # row iy, col ix
    flat_x, flat_y = gx.ravel(), gy.ravel()
    values = np.empty((len(theta_set), resolution, resolution))
    for k, theta in enumerate(theta_set):
        states = np.column_stack([flat_x, flat_y, np.full(flat_x.size, theta)])
        values[k] = critic_values(agent, states, index, goal).reshape(
            resolution, resolution)
    return xs, ys, values


def write_pgm(path, raster: np.ndarray, lo: float, hi: float) -> None:
    """ASCII portable graymap; raster rows run bottom-to-top (y increasing)."""
    span = max(hi - lo, 1e-12)
    levels = np.clip((raster - lo) / span, 0.0, 1.0)
    pixels = np.rint(levels * 255).astype(int)
    with open(path, "w") as fh:
        fh.write(f"P2\n{raster.shape[1]} {raster.shape[0]}\n255\n")
        for irow in range(raster.shape[0] - 1, -1, -1):  # top image row = max y
            fh.write(" ".join(str(v) for v in pixels[irow]) + "\n")


def export_value_grid(agent: SacAgent, maze: MazeLayout, index: int, goal: Goal,
                      theta_set, resolution: int, out_dir) -> dict:
    """Write one graymap per heading, a max-over-heading map and a CSV."""
    xs, ys, values = compute_value_grid(agent, maze, index, goal, theta_set,
                                        resolution)
    vmax = values.max(axis=0)
    os.makedirs(out_dir, exist_ok=True)
    lo, hi = 0.0, float(agent.n_goals)
    paths = {}
    for k, theta in enumerate(theta_set):
        path = os.path.join(out_dir, f"value_i{index}_theta{k}.pgm")
        write_pgm(path, values[k], lo, hi)
        paths[f"theta{k}"] = path
    max_path = os.path.join(out_dir, f"value_i{index}_max.pgm")
    write_pgm(max_path, vmax, lo, hi)
    paths["max"] = max_path

    csv_path = os.path.join(out_dir, f"values_i{index}.csv")
    with open(csv_path, "w") as fh:
        heads = ",".join(f"value_theta{k}" for k in range(len(theta_set)))
        fh.write(f"x,y,{heads},value_max\n")
        for iy in range(resolution):
            for ix in range(resolution):
                vals = ",".join(repr(values[k, iy, ix])
                                for k in range(len(theta_set)))
                fh.write(f"{xs[ix]!r},{ys[iy]!r},{vals},{vmax[iy, ix]!r}\n")
    paths["csv"] = csv_path
    return paths


# ---- checkpoints -----------------------------------------------------------

def save_checkpoint(path, agent: SacAgent, maze: MazeLayout,
                    params: DubinsParams, gseq: GoalSequence,
                    extra: dict | None = None) -> None:
    meta = {
        "agent": agent.meta(),
        "maze": {
            "bounds": list(maze.bounds),
            "walls": [list(w) for w in maze.walls],
            "start": list(maze.start),
            "target": list(maze.target),
            "target_radius": maze.target_radius,
        },
        "params": asdict(params),
        "gseq": {
            "goals": [list(g) for g in gseq.goals],
            "reset_states": [list(s) for s in gseq.reset_states],
            "eps_success": gseq.eps_success,
            "eps_dist": gseq.eps_dist,
        },
        "extra": extra or {},
    }
    arrays = agent.state_arrays()
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (agent, maze, params, gseq, extra); ParseError when mangled."""
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
        agent = SacAgent.from_state(meta["agent"], arrays)
        m = meta["maze"]
        maze = MazeLayout(bounds=tuple(m["bounds"]),
                          walls=tuple(tuple(w) for w in m["walls"]),
                          start=CarState(*m["start"]), target=Goal(*m["target"]),
                          target_radius=m["target_radius"])
        params = DubinsParams(**meta["params"])
        g = meta["gseq"]
        gseq = GoalSequence(tuple(Goal(*x) for x in g["goals"]),
                            tuple(CarState(*s) for s in g["reset_states"]),
                            eps_success=g["eps_success"], eps_dist=g["eps_dist"])
    except ParseError:
        raise
    except Exception as exc:
        raise ParseError(f"unreadable checkpoint {path}: {exc}") from exc
    return agent, maze, params, gseq, meta.get("extra", {})
