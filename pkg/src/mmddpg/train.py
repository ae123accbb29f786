"""Seeded training loop shared by all three learners."""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import EnvFault
from .noise import OUNoise
from .replay import ReplayBuffer, Transition

STREAMS = ("init", "reset", "sample", "noise_user", "noise_adv", "eval")


def seed_streams(seed):
    """Independent generators for each consumer of randomness in a run."""
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(STREAMS, children)}


@dataclass
class NoiseConfig:
    theta: float = 0.15
    mu: float = 0.0
    sigma: float = 0.2
    dt: float = 1.0

    def validate(self):
        from .errors import ConfigError

        problems = []
        if self.theta < 0:
            problems.append(("noise.theta", "must be >= 0"))
        if self.sigma < 0:
            problems.append(("noise.sigma", "must be >= 0"))
        if not self.dt > 0:
            problems.append(("noise.dt", "must be > 0"))
        if problems:
            raise ConfigError(problems)


@dataclass
class TrainStepLog:
    step: int
    updated: bool
    critic_loss1: float = 0.0
    critic_loss2: float = 0.0
    m1: float = 0.0
    m2: float = 0.0
    w_norm: float = 0.0
    j1: float = 0.0
    j2: float = 0.0
    ratio: float = 0.0
    episode_done: bool = False
    fault: bool = False


@dataclass
class EpisodeSummary:
    episode: int
    end_step: int
    steps: int
    discounted_cost: float
    discounted_energy: float
    j1: float
    j2: float
    ratio: float
    mean_w_norm: float
    critic_loss1: float
    critic_loss2: float
    m1: float
    m2: float
    fault: int

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        out = []
        for v in asdict(self).values():
            out.append(str(v) if isinstance(v, (int, np.integer)) else format(float(v), ".17g"))
        return out


class Trainer:
    """Owns the interaction state of one training run.

    Each :meth:`step` performs one environment interaction with noisy
    action/disturbance, stores the transition and, once the buffer holds
    ``max(warm_up, batch_size)`` transitions, runs one agent update.
    """

    def __init__(self, agent, env, seed, noise=None, window=10):
        self.agent = agent
        self.env = env
        self.cfg = agent.config
        self.streams = seed_streams(seed) if not isinstance(seed, dict) else seed
        noise = noise or NoiseConfig()
        spec = env.spec
        self.buffer = ReplayBuffer(self.cfg.buffer_capacity, spec.state_dim, spec.action_dim,
                                   spec.disturbance_dim)
        self.user_noise = OUNoise(spec.action_dim, self.streams["noise_user"], noise.theta,
                                  noise.mu, noise.sigma, noise.dt)
        self.adv_noise = OUNoise(spec.disturbance_dim, self.streams["noise_adv"], noise.theta,
                                 noise.mu, noise.sigma, noise.dt)
        self.total_steps = 0
        self.episode = 0
        self.summaries = []
        self.faults = 0
        self._j1 = deque(maxlen=window)
        self._j2 = deque(maxlen=window)
        self._begin_episode()

    def _begin_episode(self):
        self.state = self.env.reset(self.streams["reset"])
        self.obs = self.env.observe(self.state)
        self.user_noise.reset()
        self.adv_noise.reset()
        self._disc = 1.0
        self._cost = 0.0
        self._energy = 0.0
        self._wsum = 0.0
        self._steps = 0
        self._acc = np.zeros(4)
        self._n_updates = 0

    def running_objectives(self):
        if not self._j1:
            return 0.0, 0.0, 0.0
        j1 = float(np.mean(self._j1))
        j2 = float(np.mean(self._j2))
        return j1, j2, j1 / max(j2, self.cfg.eps_norm)

    def _finish_episode(self, fault):
        self.episode += 1
        if not fault:
            self._j1.append(self._cost)
            self._j2.append(self._energy)
        j1, j2, ratio = self.running_objectives()
        k = max(self._n_updates, 1)
        acc = self._acc / k
        self.summaries.append(EpisodeSummary(
            self.episode, self.total_steps, self._steps, self._cost, self._energy, j1, j2, ratio,
            self._wsum / max(self._steps, 1), acc[0], acc[1], acc[2], acc[3], int(fault)))
        self._begin_episode()

    def step(self):
        agent, env = self.agent, self.env
        gamma = self.cfg.gamma
        a = agent.select_action(self.obs, self.user_noise.sample())
        if agent.uses_adversary:
            w = agent.select_disturbance(self.obs, self.adv_noise.sample())
        else:
            w = np.zeros((1, env.spec.disturbance_dim))
        self.total_steps += 1
        try:
            nxt, cost, terminal = env.step(self.state, a, w)
        except EnvFault:
            self.faults += 1
            self._finish_episode(fault=True)
            return TrainStepLog(self.total_steps, False, episode_done=True, fault=True)
        obs_next = env.observe(nxt)
        c = float(cost[0])
        self.buffer.store(Transition(self.obs[0], a[0], w[0], c, obs_next[0], terminal))
        w_sq = float(np.sum(w * w))
        self._cost += self._disc * c
        self._energy += self._disc * w_sq
        self._disc *= gamma
        self._wsum += np.sqrt(w_sq)
        self._steps += 1
        self.state, self.obs = nxt, obs_next

        log = TrainStepLog(self.total_steps, False, w_norm=float(np.sqrt(w_sq)))
        if len(self.buffer) >= max(self.cfg.warm_up, self.cfg.batch_size):
            batch = self.buffer.sample_uniform(self.cfg.batch_size, self.streams["sample"])
            stats = agent.update(batch)
            log.updated = True
            log.critic_loss1 = stats.get("critic_loss1", 0.0)
            log.critic_loss2 = stats.get("critic_loss2", 0.0)
            log.m1 = stats.get("m1", 0.0)
            log.m2 = stats.get("m2", 0.0)
            self._acc += (log.critic_loss1, log.critic_loss2, log.m1, log.m2)
            self._n_updates += 1
        if terminal:
            log.episode_done = True
            self._finish_episode(fault=False)
        log.j1, log.j2, log.ratio = self.running_objectives()
        return log

    def run(self, steps, callback=None):
        """Run ``steps`` interactions; ``callback(trainer, log)`` after each."""
        for _ in range(int(steps)):
            log = self.step()
            if callback is not None:
                callback(self, log)
        return self.summaries
