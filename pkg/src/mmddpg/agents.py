"""Actor-critic learners: MMDDPG and the DDPG / RARL baselines.

Conventions shared by all agents:

* costs are minimized; the user actor descends, adversary actors ascend;
* TD targets use the target networks on ``s'`` and are masked to the bare
  stage term on terminal transitions;
* every update returns a plain ``dict`` of scalar diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, TrainingFault
from .nn import (AdamState, Mlp, adam_step, flat_checksum, mlp_backward, mlp_forward, negate,
                 soft_update)

ALGORITHMS = ("mmddpg", "ddpg", "rarl")


@dataclass
class AgentConfig:
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 128
    lr_critic: float = 1e-3
    lr_user: float = 1e-4
    lr_adv: float = 1e-4
    eps_norm: float = 1e-6
    warm_up: int = 1000
    hidden_sizes: tuple = (64, 64)
    buffer_capacity: int = 100_000
    actor_final_scale: float = 1e-3

    def validate(self):
        problems = []
        if not 0.0 <= self.gamma < 1.0:
            problems.append(("agent.gamma", "must lie in [0, 1)"))
        if not 0.0 < self.tau < 1.0:
            problems.append(("agent.tau", "must lie in (0, 1)"))
        if self.batch_size < 1:
            problems.append(("agent.batch_size", "must be >= 1"))
        for name in ("lr_critic", "lr_user", "lr_adv", "eps_norm", "actor_final_scale"):
            if not getattr(self, name) > 0:
                problems.append((f"agent.{name}", "must be > 0"))
        if self.warm_up < 0:
            problems.append(("agent.warm_up", "must be >= 0"))
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            problems.append(("agent.hidden_sizes", "need at least one hidden layer of width >= 1"))
        if self.buffer_capacity < self.batch_size:
            problems.append(("agent.buffer_capacity", "must be >= batch_size"))
        if problems:
            raise ConfigError(problems)


def normalizer(mean_q, eps):
    """Denominator for batch-mean normalization: ``max(M, 0) + eps``.

    For a positive batch mean this is exactly ``M + eps``; a non-positive
    mean (immature critic) falls back to ``eps`` so the gradient keeps its
    direction.
    """
    d = max(mean_q, 0.0) + eps
    if not (np.isfinite(d) and d > 0.0):
        raise TrainingFault(f"invalid normalizer from batch mean {mean_q!r}")
    return d


def batch_mean_q(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("batch mean of an empty batch")
    return float(values.mean())


def _check_loss(name, value):
    if not np.isfinite(value):
        raise TrainingFault(f"{name} became non-finite ({value!r})")
    return float(value)


class _Agent:
    """Network bookkeeping common to every learner."""

    algorithm = ""
    uses_adversary = False
    # MMDDPG regresses with 1/2 mean squared error, the baselines with plain MSE
    half_critic_loss = False

    def __init__(self, spec, config):
        config.validate()
        self.spec = spec
        self.config = config
        self.n = spec.state_dim
        self.m = spec.action_dim
        self.d = spec.disturbance_dim
        self.nets = {}
        self.targets = {}
        self.optim = {}

    # construction helpers
    def _actor(self, rng, out_dim, bound):
        sizes = [self.n, *self.config.hidden_sizes, out_dim]
        return Mlp.init(sizes, rng, "tanh", "scaled_tanh", bound,
                        final_scale=self.config.actor_final_scale)

    def _critic(self, rng, in_dim):
        sizes = [in_dim, *self.config.hidden_sizes, 1]
        return Mlp.init(sizes, rng, "relu", "linear")

    def _register(self, name, net, lr):
        self.nets[name] = net
        self.targets[name] = net.copy()
        self.optim[name] = AdamState.for_params(net, learning_rate=lr)

    # acting
    def _obs(self, obs):
        obs = np.asarray(obs, dtype=np.float64)
        if obs.ndim == 1:
            obs = obs[None, :]
        if obs.shape[-1] != self.n:
            raise ShapeError(f"observation width {obs.shape[-1]} != state_dim {self.n}")
        return obs

    def select_action(self, obs, noise=None):
        """User action ``pi(s) (+ noise)`` clamped to the action bound."""
        a = mlp_forward(self.nets["actor"], self._obs(obs))[0]
        if noise is not None:
            a = a + noise
        return np.clip(a, -self.spec.action_bound, self.spec.action_bound)

    def select_disturbance(self, obs, noise=None):
        obs = self._obs(obs)
        if not self.uses_adversary:
            return np.zeros((obs.shape[0], self.d))
        w = mlp_forward(self.nets["adversary"], obs)[0]
        if noise is not None:
            w = w + noise
        return np.clip(w, -self.spec.disturbance_bound, self.spec.disturbance_bound)

    def policy(self, obs):
        """Deterministic user policy, used by evaluation. Read-only."""
        return self.select_action(obs)

    def checksum(self):
        """Digest of every online and target parameter, in registration order."""
        arrays = []
        for name in self.nets:
            arrays.extend(self.nets[name].parameters())
            arrays.extend(self.targets[name].parameters())
        return flat_checksum(arrays)

    def soft_update_targets(self):
        for name, net in self.nets.items():
            soft_update(self.targets[name], net, self.config.tau)

    # shared update pieces
    @staticmethod
    def _mask(batch):
        return np.where(batch.terminal, 0.0, 1.0)

    def _regression_grads(self, name, x, y):
        """Squared-error loss of net ``name`` against ``y`` and its parameter gradients."""
        net = self.nets[name]
        q, cache = mlp_forward(net, x)
        err = q[:, 0] - y
        scale = 1.0 if self.half_critic_loss else 2.0
        loss = _check_loss(f"{name} loss", (0.5 * scale) * np.mean(err * err))
        grads, _ = mlp_backward(net, cache, (scale / len(y)) * err[:, None])
        return loss, grads

    def critic_gradients(self, batch):
        """``{critic name: (loss, grads)}`` at the current parameters, no step taken."""
        return {name: self._regression_grads(name, x, y)
                for name, (x, y) in self.critic_regression(batch).items()}

    def critic_update(self, batch):
        """One Adam step per critic on its TD regression (targets computed first)."""
        stats = {"critic_loss1": 0.0, "critic_loss2": 0.0}
        for key, (name, (x, y)) in zip(("critic_loss1", "critic_loss2"),
                                       self.critic_regression(batch).items()):
            loss, grads = self._regression_grads(name, x, y)
            adam_step(self.nets[name], grads, self.optim[name])
            stats[key] = loss
        return stats

    def _descend(self, name, grads):
        adam_step(self.nets[name], grads, self.optim[name])

    def _ascend(self, name, grads):
        adam_step(self.nets[name], negate(grads), self.optim[name])

    def update(self, batch):
        """Critic step, actor step, then soft target update (in that order)."""
        stats = self.critic_update(batch)
        stats.update(self.actor_update(batch))
        self.soft_update_targets()
        return stats


class MinimaxAgent(_Agent):
    """MMDDPG: user/adversary actors, cost critic Q1(s,a,w), energy critic Q2(s,w).

    The actors follow the batch-mean-normalized gradients of
    ``ln J1 - ln J2``; the batch means are constants in the differentiation.
    """

    algorithm = "mmddpg"
    uses_adversary = True
    half_critic_loss = True

    def __init__(self, spec, config, rng):
        super().__init__(spec, config)
        c = config
        self._register("actor", self._actor(rng, self.m, spec.action_bound), c.lr_user)
        self._register("adversary", self._actor(rng, self.d, spec.disturbance_bound), c.lr_adv)
        self._register("critic1", self._critic(rng, self.n + self.m + self.d), c.lr_critic)
        self._register("critic2", self._critic(rng, self.n + self.d), c.lr_critic)

    def compute_td_targets(self, batch):
        t = self.targets
        mask = self._mask(batch)
        s2 = batch.s_next
        a2 = mlp_forward(t["actor"], s2)[0]
        w2 = mlp_forward(t["adversary"], s2)[0]
        q1 = mlp_forward(t["critic1"], np.concatenate([s2, a2, w2], axis=1))[0][:, 0]
        q2 = mlp_forward(t["critic2"], np.concatenate([s2, w2], axis=1))[0][:, 0]
        g = self.config.gamma
        energy = np.sum(batch.w * batch.w, axis=1)
        y1 = batch.c + np.where(mask > 0, g * q1, 0.0)
        y2 = energy + np.where(mask > 0, g * q2, 0.0)
        return y1, y2

    def critic_regression(self, batch):
        y1, y2 = self.compute_td_targets(batch)
        return {"critic1": (np.concatenate([batch.s, batch.a, batch.w], axis=1), y1),
                "critic2": (np.concatenate([batch.s, batch.w], axis=1), y2)}

    def actor_gradients(self, batch, eps=None, means=None):
        """Joint actor loss and its gradients.

        Returns ``(loss, grads_user, grads_adv, M1, M2)``. ``means`` freezes
        ``(M1, M2)`` to given values (used by finite-difference checks).
        """
        eps = self.config.eps_norm if eps is None else eps
        nets = self.nets
        s = batch.s
        n, m = self.n, self.m
        a, ca = mlp_forward(nets["actor"], s)
        w, cw = mlp_forward(nets["adversary"], s)
        q1, c1 = mlp_forward(nets["critic1"], np.concatenate([s, a, w], axis=1))
        q2, c2 = mlp_forward(nets["critic2"], np.concatenate([s, w], axis=1))
        if means is None:
            m1, m2 = batch_mean_q(q1), batch_mean_q(q2)
        else:
            m1, m2 = means
        d1, d2 = normalizer(m1, eps), normalizer(m2, eps)
        size = len(s)
        loss = _check_loss("actor loss", np.mean(q1) / d1 - np.mean(q2) / d2)
        _, gx1 = mlp_backward(nets["critic1"], c1, np.full_like(q1, 1.0 / (size * d1)),
                              param_grads=False)
        _, gx2 = mlp_backward(nets["critic2"], c2, np.full_like(q2, -1.0 / (size * d2)),
                              param_grads=False)
        ga = gx1[:, n:n + m]
        gw = gx1[:, n + m:] + gx2[:, n:]
        g_user, _ = mlp_backward(nets["actor"], ca, ga)
        g_adv, _ = mlp_backward(nets["adversary"], cw, gw)
        return loss, g_user, g_adv, m1, m2

    def actor_update(self, batch):
        loss, g_user, g_adv, m1, m2 = self.actor_gradients(batch)
        if not (np.isfinite(m1) and np.isfinite(m2)):
            raise TrainingFault("non-finite critic batch mean")
        self._descend("actor", g_user)
        self._ascend("adversary", g_adv)
        return {"actor_loss": loss, "m1": m1, "m2": m2}


class DdpgAgent(_Agent):
    """Single-player DDPG on ``Q(s, a)``; never produces disturbances."""

    algorithm = "ddpg"
    uses_adversary = False

    def __init__(self, spec, config, rng):
        super().__init__(spec, config)
        c = config
        self._register("actor", self._actor(rng, self.m, spec.action_bound), c.lr_user)
        self._register("critic", self._critic(rng, self.n + self.m), c.lr_critic)

    def compute_td_targets(self, batch):
        t = self.targets
        s2 = batch.s_next
        a2 = mlp_forward(t["actor"], s2)[0]
        q = mlp_forward(t["critic"], np.concatenate([s2, a2], axis=1))[0][:, 0]
        return (batch.c + np.where(self._mask(batch) > 0, self.config.gamma * q, 0.0),)

    def critic_regression(self, batch):
        (y,) = self.compute_td_targets(batch)
        return {"critic": (np.concatenate([batch.s, batch.a], axis=1), y)}

    def actor_gradients(self, batch):
        nets = self.nets
        s = batch.s
        a, ca = mlp_forward(nets["actor"], s)
        q, cq = mlp_forward(nets["critic"], np.concatenate([s, a], axis=1))
        loss = _check_loss("actor loss", np.mean(q))
        _, gx = mlp_backward(nets["critic"], cq, np.full_like(q, 1.0 / len(s)), param_grads=False)
        g_user, _ = mlp_backward(nets["actor"], ca, gx[:, self.n:])
        return loss, g_user

    def actor_update(self, batch):
        loss, g_user = self.actor_gradients(batch)
        self._descend("actor", g_user)
        return {"actor_loss": loss}


class RarlAgent(_Agent):
    """RARL: both critics regress the stage cost; adversary ascends Q2(s, mu(s))."""

    algorithm = "rarl"
    uses_adversary = True

    def __init__(self, spec, config, rng):
        super().__init__(spec, config)
        c = config
        self._register("actor", self._actor(rng, self.m, spec.action_bound), c.lr_user)
        self._register("adversary", self._actor(rng, self.d, spec.disturbance_bound), c.lr_adv)
        self._register("critic1", self._critic(rng, self.n + self.m), c.lr_critic)
        self._register("critic2", self._critic(rng, self.n + self.d), c.lr_critic)

    def compute_td_targets(self, batch):
        t = self.targets
        mask = self._mask(batch) > 0
        s2 = batch.s_next
        a2 = mlp_forward(t["actor"], s2)[0]
        w2 = mlp_forward(t["adversary"], s2)[0]
        q1 = mlp_forward(t["critic1"], np.concatenate([s2, a2], axis=1))[0][:, 0]
        q2 = mlp_forward(t["critic2"], np.concatenate([s2, w2], axis=1))[0][:, 0]
        g = self.config.gamma
        return (batch.c + np.where(mask, g * q1, 0.0),
                batch.c + np.where(mask, g * q2, 0.0))

    def critic_regression(self, batch):
        y1, y2 = self.compute_td_targets(batch)
        return {"critic1": (np.concatenate([batch.s, batch.a], axis=1), y1),
                "critic2": (np.concatenate([batch.s, batch.w], axis=1), y2)}

    def actor_gradients(self, batch):
        """Returns ``(loss_user, loss_adv, grads_user, grads_adv)``."""
        nets = self.nets
        s = batch.s
        size = len(s)
        a, ca = mlp_forward(nets["actor"], s)
        w, cw = mlp_forward(nets["adversary"], s)
        q1, c1 = mlp_forward(nets["critic1"], np.concatenate([s, a], axis=1))
        q2, c2 = mlp_forward(nets["critic2"], np.concatenate([s, w], axis=1))
        _, gx1 = mlp_backward(nets["critic1"], c1, np.full_like(q1, 1.0 / size), param_grads=False)
        _, gx2 = mlp_backward(nets["critic2"], c2, np.full_like(q2, 1.0 / size), param_grads=False)
        g_user, _ = mlp_backward(nets["actor"], ca, gx1[:, self.n:])
        g_adv, _ = mlp_backward(nets["adversary"], cw, gx2[:, self.n:])
        return (_check_loss("user loss", np.mean(q1)), _check_loss("adversary loss", np.mean(q2)),
                g_user, g_adv)

    def actor_update(self, batch):
        lu, la, g_user, g_adv = self.actor_gradients(batch)
        self._descend("actor", g_user)
        self._ascend("adversary", g_adv)
        return {"actor_loss": lu, "adversary_loss": la}


AGENTS = {"mmddpg": MinimaxAgent, "ddpg": DdpgAgent, "rarl": RarlAgent}


def make_agent(algorithm, spec, config, rng):
    try:
        cls = AGENTS[algorithm]
    except KeyError:
        raise ConfigError([("run.algorithm", f"unknown algorithm {algorithm!r}")]) from None
    return cls(spec, config, rng)


def estimate_objectives(agent, env, episodes, gamma, rng, eps=None):
    """Monte-Carlo estimates of the discounted cost J1, disturbance energy J2 and J1/J2.

    Rollouts use the deterministic user and adversary (no exploration
    noise). The ratio floors J2 at ``eps`` (defaults to the agent's
    ``eps_norm``).
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    eps = agent.config.eps_norm if eps is None else eps
    state = env.reset(rng, episodes)
    j1 = np.zeros(episodes)
    j2 = np.zeros(episodes)
    disc = 1.0
    bound = env.spec.disturbance_bound
    for _ in range(env.spec.horizon):
        obs = env.observe(state)
        a = agent.select_action(obs)
        w = np.clip(agent.select_disturbance(obs), -bound, bound)
        state, cost, done = env.step(state, a, w)
        j1 += disc * cost
        j2 += disc * np.sum(w * w, axis=1)
        disc *= gamma
        if done:
            break
    J1, J2 = float(j1.mean()), float(j2.mean())
    return J1, J2, J1 / max(J2, eps)


def adversary_magnitude(agent, env, rng, episodes=20):
    """Mean Euclidean norm of the deterministic adversary output over visited states.

    States come from rollouts of the deterministic user against the
    deterministic adversary. Agents without an adversary return 0.
    """
    if not agent.uses_adversary:
        return 0.0
    state = env.reset(rng, episodes)
    norms = []
    for _ in range(env.spec.horizon):
        obs = env.observe(state)
        w = agent.select_disturbance(obs)
        norms.append(np.linalg.norm(w, axis=1))
        state, _, done = env.step(state, agent.select_action(obs), w)
        if done:
            break
    return float(np.mean(np.concatenate(norms)))
