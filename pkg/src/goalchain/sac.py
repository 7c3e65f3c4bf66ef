"""Soft actor-critic on the extended observations, built on the numpy nets.

The actor outputs a Gaussian squashed through tanh and scaled to the
steering bound; twin critics with slowly tracking target copies provide the
bootstrap value, which is clipped to [0, n_goals] (the largest undiscounted
return a chain can pay). The entropy coefficient is a fixed constant.
"""

from __future__ import annotations

import math

import numpy as np

from .demo import GoalSequence
from .nets import Adam, Mlp, soft_update
from .replay import check_mode
from .seqenv import ExtendedState

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
PRE_TANH_CLIP = 5.0
TANH_EPS = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)

CHECKPOINT_FORMAT = 1


class Normalizer:
    """Running per-dimension mean/std, frozen after the warm-up phase."""

    def __init__(self, dim: int, std_floor: float = 1e-6):
        self.dim = dim
        self.std_floor = std_floor
        self.count = 0
        self._sum = np.zeros(dim)
        self._sumsq = np.zeros(dim)
        self.mean = np.zeros(dim)
        self.std = np.ones(dim)
        self.frozen = False

    def update(self, batch: np.ndarray) -> None:
        if self.frozen:
            raise RuntimeError("normalizer statistics are frozen")
        batch = np.atleast_2d(batch)
        self.count += batch.shape[0]
        self._sum += batch.sum(axis=0)
        self._sumsq += np.square(batch).sum(axis=0)
        self.mean = self._sum / self.count
        var = np.maximum(self._sumsq / self.count - np.square(self.mean), 0.0)
        self.std = np.maximum(np.sqrt(var), self.std_floor)

    def freeze(self) -> None:
        self.frozen = True

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


def continuous_dim(mode: str) -> int:
    return 4 if mode == "no_goal" else 6


def feature_dim(n_goals: int, mode: str) -> int:
    return continuous_dim(mode) + (0 if mode == "no_index" else n_goals)


def encode_batch(states: np.ndarray, indices: np.ndarray, goals: np.ndarray,
                 n_goals: int, norm: Normalizer | None, mode: str) -> np.ndarray:
    """Feature matrix: normalized state (heading as cos/sin), goal offset
    relative to the car position, and a one-hot of the goal index.

    no_index drops the one-hot, no_goal drops the goal offset. The terminal
    sentinel index folds onto the last slot; it is only ever encoded for
    next observations whose bootstrap is masked anyway.
    """
    states = np.atleast_2d(states)
    b = states.shape[0]
    cont = np.empty((b, continuous_dim(mode)))
    cont[:, 0] = states[:, 0]
    cont[:, 1] = states[:, 1]
    cont[:, 2] = np.cos(states[:, 2])
    cont[:, 3] = np.sin(states[:, 2])
    if mode != "no_goal":
        goals = np.atleast_2d(goals)
        cont[:, 4] = goals[:, 0] - states[:, 0]
        cont[:, 5] = goals[:, 1] - states[:, 1]
    if norm is not None:
        cont = norm.normalize(cont)
    if mode == "no_index":
        return cont
    onehot = np.zeros((b, n_goals))
    cols = np.minimum(np.asarray(indices, dtype=np.int64), n_goals) - 1
    onehot[np.arange(b), cols] = 1.0
    return np.concatenate([cont, onehot], axis=1)


def encode_obs(obs: ExtendedState, gseq: GoalSequence, norm: Normalizer | None,
               mode: str) -> np.ndarray:
    return encode_batch(
        np.array([obs.state], dtype=np.float64),
        np.array([obs.index]),
        np.array([obs.goal], dtype=np.float64),
        gseq.n_goals, norm, mode)[0]


class SacAgent:
    def __init__(self, n_goals: int, mode: str, rng: np.random.Generator,
                 critic_hidden=(400, 300), policy_hidden=(400, 300),
                 gamma: float = 0.9, alpha: float = 1e-3,
                 critic_lr: float = 1e-3, policy_lr: float = 1e-3,
                 u_max: float = 1.0, normalizer: Normalizer | None = None):
        self.mode = check_mode(mode)
        self.n_goals = n_goals
        self.gamma = gamma
        self.alpha = alpha
        self.u_max = u_max
        self.critic_lr = critic_lr
        self.policy_lr = policy_lr
        self.v_clip = (0.0, float(n_goals))
        obs_dim = feature_dim(n_goals, mode)
        self.normalizer = normalizer or Normalizer(continuous_dim(mode))
        self.actor = Mlp([obs_dim, *policy_hidden, 2], rng)
        self.q1 = Mlp([obs_dim + 1, *critic_hidden, 1], rng)
        self.q2 = Mlp([obs_dim + 1, *critic_hidden, 1], rng)
        self.q1_target = self.q1.clone()
        self.q2_target = self.q2.clone()
        self.opt_actor = Adam(self.actor.params, policy_lr)
        self.opt_q1 = Adam(self.q1.params, critic_lr)
        self.opt_q2 = Adam(self.q2.params, critic_lr)

    # ---- policy ----------------------------------------------------------

    def _encode(self, states, indices, goals) -> np.ndarray:
        return encode_batch(states, indices, goals, self.n_goals,
                            self.normalizer, self.mode)

    def policy_stats(self, feat: np.ndarray):
        out = self.actor.forward(feat)
        mu = out[:, :1]
        log_std = np.clip(out[:, 1:], LOG_STD_MIN, LOG_STD_MAX)
        return mu, log_std

    def sample_action(self, feat: np.ndarray, rng: np.random.Generator):
        """Squashed-Gaussian sample and its log-density, batch-wise."""
        mu, log_std = self.policy_stats(feat)
        std = np.exp(log_std)
        z = np.clip(mu + std * rng.standard_normal(mu.shape),
                    -PRE_TANH_CLIP, PRE_TANH_CLIP)
        th = np.tanh(z)
        action = self.u_max * th
        w = (z - mu) / std
        squash = self.u_max * (1.0 - np.square(th)) + TANH_EPS
        logp = (-0.5 * np.square(w) - log_std - 0.5 * _LOG_2PI
                - np.log(squash)).sum(axis=1, keepdims=True)
        return action, logp

    def mean_action(self, feat: np.ndarray) -> np.ndarray:
        mu, _ = self.policy_stats(feat)
        return self.u_max * np.tanh(np.clip(mu, -PRE_TANH_CLIP, PRE_TANH_CLIP))

    def act(self, obs: ExtendedState, rng: np.random.Generator | None = None,
            deterministic: bool = False) -> float:
        feat = self._encode(
            np.array([obs.state], dtype=np.float64), np.array([obs.index]),
            np.array([obs.goal], dtype=np.float64))
        if deterministic:
            return float(self.mean_action(feat)[0, 0])
        action, _ = self.sample_action(feat, rng)
        return float(action[0, 0])

    def policy_fn(self, deterministic: bool = True,
                  rng: np.random.Generator | None = None):
        return lambda obs: self.act(obs, rng=rng, deterministic=deterministic)

    # ---- updates ---------------------------------------------------------

    def critic_update(self, batch: dict[str, np.ndarray],
                      rng: np.random.Generator):
        """Regress both critics to the clipped one-step target.

        Returns (loss, target_min, target_max); the extremes feed the
        training-long clipping assertion.
        """
        feat = self._encode(batch["state"], batch["index"], batch["goal"])
        feat_next = self._encode(batch["next_state"], batch["next_index"],
                                 batch["next_goal"])
        a_next, logp_next = self.sample_action(feat_next, rng)
        qin_next = np.concatenate([feat_next, a_next], axis=1)
        v_next = (np.minimum(self.q1_target.forward(qin_next),
                             self.q2_target.forward(qin_next))
                  - self.alpha * logp_next)

        reward = batch["reward"][:, None].astype(np.float64)
        done = batch["done"][:, None].astype(np.float64)
        y = reward + self.gamma * (1.0 - done) * v_next
        if self.mode == "dcil1_bonus":
            # Original successes carry the value of the next chain link as a
            # reward bonus; relabelled successes stay at the bare reward.
            eligible = (batch["success"] & ~batch["relabeled"])[:, None]
            y = np.where(eligible, reward + np.clip(v_next, *self.v_clip), y)
        y = np.clip(y, *self.v_clip)

        qin = np.concatenate([feat, batch["action"][:, None]], axis=1)
        b = qin.shape[0]
        losses = []
        for q, opt in ((self.q1, self.opt_q1), (self.q2, self.opt_q2)):
            out, cache = q.forward_cached(qin)
            diff = out - y
            losses.append(float(np.mean(np.square(diff))))
            grads, _ = q.backward(cache, (2.0 / b) * diff)
            opt.step(q.params, grads)
        return 0.5 * (losses[0] + losses[1]), float(y.min()), float(y.max())

    def actor_update(self, batch: dict[str, np.ndarray],
                     rng: np.random.Generator) -> float:
        """One step on E[alpha * log pi - min Q] with reparameterized actions."""
        feat = self._encode(batch["state"], batch["index"], batch["goal"])
        b = feat.shape[0]
        out, cache = self.actor.forward_cached(feat)
        mu = out[:, :1]
        ls_raw = out[:, 1:]
        ls = np.clip(ls_raw, LOG_STD_MIN, LOG_STD_MAX)
        mask_ls = ((ls_raw > LOG_STD_MIN) & (ls_raw < LOG_STD_MAX)).astype(np.float64)
        std = np.exp(ls)
        xi = rng.standard_normal(mu.shape)
        z0 = mu + std * xi
        z = np.clip(z0, -PRE_TANH_CLIP, PRE_TANH_CLIP)
        mask_z = (np.abs(z0) < PRE_TANH_CLIP).astype(np.float64)
        th = np.tanh(z)
        action = self.u_max * th
        w = (z - mu) / std
        squash = self.u_max * (1.0 - np.square(th)) + TANH_EPS
        logp = (-0.5 * np.square(w) - ls - 0.5 * _LOG_2PI
                - np.log(squash)).sum(axis=1, keepdims=True)

        qin = np.concatenate([feat, action], axis=1)
        o1, c1 = self.q1.forward_cached(qin)
        o2, c2 = self.q2.forward_cached(qin)
        take1 = o1 <= o2
        qmin = np.where(take1, o1, o2)
        loss = float(np.mean(self.alpha * logp - qmin))

        # d loss / d action, routed through whichever critic realises the min.
        _, din1 = self.q1.backward(c1, (-1.0 / b) * take1.astype(np.float64))
        _, din2 = self.q2.backward(c2, (-1.0 / b) * (~take1).astype(np.float64))
        dl_da = din1[:, -1:] + din2[:, -1:]

        da_dz = self.u_max * (1.0 - np.square(th))
        dlogp_dz = -w / std + 2.0 * self.u_max * th * (1.0 - np.square(th)) / squash
        dl_dz = (self.alpha / b) * dlogp_dz + dl_da * da_dz
        dl_dmu = dl_dz * mask_z + (self.alpha / b) * (w / std)
        dl_dls = (dl_dz * mask_z * std * xi
                  + (self.alpha / b) * (np.square(w) - 1.0)) * mask_ls
        grads, _ = self.actor.backward(cache, np.concatenate([dl_dmu, dl_dls], axis=1))
        self.opt_actor.step(self.actor.params, grads)
        return loss

    def soft_update(self, tau: float) -> None:
        soft_update(self.q1_target, self.q1, tau)
        soft_update(self.q2_target, self.q2, tau)

    # ---- persistence -----------------------------------------------------

    def meta(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "mode": self.mode,
            "n_goals": self.n_goals,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "u_max": self.u_max,
            "critic_lr": self.critic_lr,
            "policy_lr": self.policy_lr,
            "actor_sizes": self.actor.sizes,
            "critic_sizes": self.q1.sizes,
        }

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        nets = {"actor": self.actor, "q1": self.q1, "q2": self.q2,
                "q1_target": self.q1_target, "q2_target": self.q2_target}
        for name, net in nets.items():
            for k, (w, bias) in enumerate(zip(net.weights, net.biases)):
                arrays[f"{name}_w{k}"] = w
                arrays[f"{name}_b{k}"] = bias
        norm = self.normalizer
        arrays["norm_mean"] = norm.mean
        arrays["norm_std"] = norm.std
        arrays["norm_count"] = np.array([norm.count])
        return arrays

    @classmethod
    def from_state(cls, meta: dict, arrays: dict[str, np.ndarray]) -> "SacAgent":
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
        agent = cls(
            n_goals=int(meta["n_goals"]), mode=meta["mode"],
            rng=np.random.default_rng(0),
            critic_hidden=tuple(meta["critic_sizes"][1:-1]),
            policy_hidden=tuple(meta["actor_sizes"][1:-1]),
            gamma=float(meta["gamma"]), alpha=float(meta["alpha"]),
            critic_lr=float(meta["critic_lr"]), policy_lr=float(meta["policy_lr"]),
            u_max=float(meta["u_max"]))
        nets = {"actor": agent.actor, "q1": agent.q1, "q2": agent.q2,
                "q1_target": agent.q1_target, "q2_target": agent.q2_target}
        for name, net in nets.items():
            for k in range(len(net.weights)):
                np.copyto(net.weights[k], arrays[f"{name}_w{k}"])
                np.copyto(net.biases[k], arrays[f"{name}_b{k}"])
        norm = agent.normalizer
        norm.mean = np.asarray(arrays["norm_mean"], dtype=np.float64)
        norm.std = np.asarray(arrays["norm_std"], dtype=np.float64)
        norm.count = int(arrays["norm_count"][0])
        norm.freeze()
        return agent
