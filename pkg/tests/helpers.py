"""Shared builders for the test-suite."""

import numpy as np

from mmddpg.agents import AgentConfig, make_agent
from mmddpg.envs import EnvSpec
from mmddpg.replay import Batch


def small_spec(n=3, m=2, d=2, action_bound=1.0, disturbance_bound=0.5):
    return EnvSpec(n, m, d, action_bound, disturbance_bound, 10, 0.05)


def small_agent(algorithm, seed=0, hidden=(8, 8), spec=None, **cfg):
    spec = spec or small_spec()
    config = AgentConfig(hidden_sizes=hidden, batch_size=4, buffer_capacity=16, warm_up=0, **cfg)
    return make_agent(algorithm, spec, config, np.random.default_rng(seed))


def random_batch(spec, rng, size=4, terminal=None):
    n, m, d = spec.state_dim, spec.action_dim, spec.disturbance_dim
    if terminal is None:
        terminal = rng.random(size) < 0.3
    return Batch(rng.standard_normal((size, n)),
                 rng.uniform(-spec.action_bound, spec.action_bound, (size, m)),
                 rng.uniform(-spec.disturbance_bound, spec.disturbance_bound, (size, d)),
                 rng.uniform(0.01, 2.0, size),
                 rng.standard_normal((size, n)),
                 np.asarray(terminal, dtype=bool))




def loss_functionals(agent, batch):
    """Every ``(label, net, fn)`` whose ``fn()`` returns ``(loss, grads for net)``.

    Batch means in the MMDDPG actor loss are frozen at their current values,
    matching how they enter the update as constants.
    """
    out = []
    # TD targets read only the target networks, so they stay fixed under perturbation
    for name, (x, y) in agent.critic_regression(batch).items():
        out.append((f"{agent.algorithm}:{name}", agent.nets[name],
                    lambda name=name, x=x, y=y: agent._regression_grads(name, x, y)))
    if agent.algorithm == "mmddpg":
        _, _, _, m1, m2 = agent.actor_gradients(batch)

        def actor(i):
            def fn():
                res = agent.actor_gradients(batch, means=(m1, m2))
                return res[0], res[i]
            return fn
        out.append(("mmddpg:actor", agent.nets["actor"], actor(1)))
        out.append(("mmddpg:adversary", agent.nets["adversary"], actor(2)))
    elif agent.algorithm == "ddpg":
        out.append(("ddpg:actor", agent.nets["actor"], lambda: agent.actor_gradients(batch)))
    else:
        out.append(("rarl:actor", agent.nets["actor"],
                    lambda: (lambda r: (r[0], r[2]))(agent.actor_gradients(batch))))
        out.append(("rarl:adversary", agent.nets["adversary"],
                    lambda: (lambda r: (r[1], r[3]))(agent.actor_gradients(batch))))
    return out


# Entries below this magnitude are compared absolutely (1e-4 * 1e-6 = 1e-10). Central
# differences at step 1e-5 carry roughly eps/step ~ 2e-11 of roundoff per unit of
# loss term, which swamps a relative comparison on entries near 1e-8.
FD_FLOOR = 1e-6


def lift_critics(agent, level=3.0):
    """Shift critic outputs up so batch means sit in the positive regime of real costs."""
    for name, net in agent.nets.items():
        if name.startswith("critic"):
            net.biases[-1][...] += level
            net.touch()
